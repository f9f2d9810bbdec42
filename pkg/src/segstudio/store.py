"""Durable, versioned storage for series, segmentations, reports, models, jobs.

On-disk layout (documented, versioned)::

    data-dir/
      blobs/<sha256>   content-addressed payloads, written atomically
      index.log        write-ahead log: one magic header line, then one
                       record per line as "<crc32 hex> <compact json>\\n"

Every mutation appends a WAL record *after* its blob is durable; recovery
replays the log and truncates a torn tail, so an entry is either fully
present or fully absent.  Purge is logical-then-physical: the index record
commits the removal, blob files are swept best-effort afterwards.

Writers serialize on one lock (the single-writer commit point); readers
verify blob checksums on every access.

Test hook: setting SEGSTUDIO_CRASH_POINT=after-blob-write makes the process
exit between blob write and index commit, for crash-consistency tests.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .dicomio import ImageSeries, series_to_files
from .errors import ConflictError, GridMismatchError, IntegrityError, NotFoundError
from .exchange import (decode_series_blob, encode_series_blob, grid_from_dict,
                       grid_to_dict, segmentation_from_doc, segmentation_to_doc)
from .mask import SegmentationSet
from . import hashutil

_MAGIC = "SEGSTORE v1"
_CRASH_ENV = "SEGSTUDIO_CRASH_POINT"


@dataclass
class _SeriesEntry:
    study_id: str
    series_id: str
    blob: str
    meta: dict
    segmentations: dict[int, dict] = field(default_factory=dict)  # version -> record
    reports: dict[str, dict] = field(default_factory=dict)


@dataclass(frozen=True)
class PurgeReceipt:
    series_id: str
    scope: str
    removed_blobs: tuple[str, ...]
    removed_paths: tuple[str, ...]


class Store:
    def __init__(self, data_dir):
        self.root = Path(data_dir)
        self.blob_dir = self.root / "blobs"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.log"
        self._lock = threading.RLock()
        self._series: dict[str, _SeriesEntry] = {}
        self._models: dict[str, dict] = {}
        self._jobs: dict[str, dict] = {}
        self._staged: dict[str, set[str]] = {}  # series_id -> staged dirs (runtime only)
        self._crash_hook = None  # test hook: callable invoked after blob writes
        self._recover()
        self._log = open(self.index_path, "ab")

    def close(self) -> None:
        with self._lock:
            self._log.close()

    # ------------------------------------------------------------- WAL

    def _recover(self) -> None:
        if not self.index_path.exists():
            with open(self.index_path, "wb") as f:
                f.write((_MAGIC + "\n").encode("ascii"))
                f.flush()
                os.fsync(f.fileno())
            return
        raw = self.index_path.read_bytes()
        newline = raw.find(b"\n")
        if newline < 0 or raw[:newline].decode("ascii", "replace") != _MAGIC:
            raise IntegrityError(f"{self.index_path} has no valid magic header")
        good_end = newline + 1
        pos = good_end
        while pos < len(raw):
            nl = raw.find(b"\n", pos)
            if nl < 0:
                break  # torn tail: no newline
            line = raw[pos:nl]
            record = self._parse_record(line)
            if record is None:
                break  # torn/bit-rotted record: drop it and everything after
            self._apply(record)
            good_end = nl + 1
            pos = nl + 1
        if good_end < len(raw):
            with open(self.index_path, "r+b") as f:
                f.truncate(good_end)
                f.flush()
                os.fsync(f.fileno())

    @staticmethod
    def _parse_record(line: bytes) -> dict | None:
        try:
            crc_hex, payload = line.split(b" ", 1)
            if int(crc_hex, 16) != zlib.crc32(payload):
                return None
            return json.loads(payload)
        except (ValueError, json.JSONDecodeError):
            return None

    def _append(self, record: dict) -> None:
        payload = json.dumps(record, separators=(",", ":"), sort_keys=True).encode("utf-8")
        line = f"{zlib.crc32(payload):08x} ".encode("ascii") + payload + b"\n"
        self._log.write(line)
        self._log.flush()
        os.fsync(self._log.fileno())
        self._apply(record)

    def _apply(self, record: dict) -> None:
        op = record["op"]
        if op == "series":
            self._series[record["series_id"]] = _SeriesEntry(
                study_id=record["study_id"], series_id=record["series_id"],
                blob=record["blob"], meta=record["meta"])
        elif op == "segmentation":
            entry = self._series.get(record["series_id"])
            if entry is not None:
                entry.segmentations[record["version"]] = record
        elif op == "report":
            entry = self._series.get(record["series_id"])
            if entry is not None:
                entry.reports[record["report_id"]] = record
        elif op == "model":
            self._models[record["model_id"]] = record["manifest"]
        elif op == "job":
            self._jobs[record["job"]["job_id"]] = record["job"]
        elif op == "purge":
            self._series.pop(record["series_id"], None)

    # ------------------------------------------------------------ blobs

    def _write_blob(self, data: bytes) -> str:
        checksum = hashutil.sha256_hex(data)
        path = self.blob_dir / checksum
        if not path.exists():
            tmp = self.blob_dir / f"tmp-{os.getpid()}-{threading.get_ident()}"
            with open(tmp, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        return checksum

    def _read_blob(self, checksum: str) -> bytes:
        path = self.blob_dir / checksum
        if not path.exists():
            raise IntegrityError(f"blob {checksum} referenced by index but missing on disk")
        data = path.read_bytes()
        if hashutil.sha256_hex(data) != checksum:
            raise IntegrityError(f"blob {checksum} is corrupt (checksum mismatch)")
        return data

    def _maybe_crash(self) -> None:
        if self._crash_hook is not None:
            self._crash_hook()
        if os.environ.get(_CRASH_ENV) == "after-blob-write":
            os._exit(86)

    # ----------------------------------------------------------- series

    def put_series(self, series: ImageSeries) -> str:
        blob_data = encode_series_blob(series)
        with self._lock:
            existing = self._series.get(series.series_id)
            checksum = hashutil.sha256_hex(blob_data)
            if existing is not None:
                if existing.blob == checksum:
                    return series.series_id  # idempotent re-upload
                raise ConflictError(f"series {series.series_id} already stored with different content")
            self._write_blob(blob_data)
            self._maybe_crash()
            self._append({
                "op": "series", "study_id": series.study_id,
                "series_id": series.series_id, "blob": checksum,
                "meta": {
                    "modality": series.modality,
                    "patient_ref": series.patient_ref,
                    "grid": grid_to_dict(series.grid),
                },
            })
        return series.series_id

    def get_series(self, series_id: str) -> ImageSeries:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            blob = entry.blob
        return decode_series_blob(self._read_blob(blob))

    def has_series(self, series_id: str) -> bool:
        with self._lock:
            return series_id in self._series

    def series_grid(self, series_id: str):
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            return grid_from_dict(entry.meta["grid"])

    def series_blob_ref(self, series_id: str) -> str:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            return entry.blob

    def list_studies(self) -> list[dict]:
        with self._lock:
            studies: dict[str, list[dict]] = {}
            for entry in self._series.values():
                grid = entry.meta["grid"]
                studies.setdefault(entry.study_id, []).append({
                    "series_id": entry.series_id,
                    "modality": entry.meta.get("modality"),
                    "patient_ref": entry.meta.get("patient_ref"),
                    "rows": grid["rows"], "cols": grid["cols"], "slices": grid["slices"],
                    "segmentation_versions": sorted(entry.segmentations),
                    "report_ids": sorted(entry.reports),
                })
            return [{"study_id": sid, "series": sorted(series, key=lambda s: s["series_id"])}
                    for sid, series in sorted(studies.items())]

    # ---------------------------------------------------- segmentations

    def put_segmentation(self, series_id: str, seg: SegmentationSet) -> int:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            stored_grid = grid_from_dict(entry.meta["grid"])
            if seg.grid is not None and seg.grid != stored_grid:
                raise GridMismatchError("segmentation grid does not match the stored series grid")
            if seg.parent_version is not None and seg.parent_version not in entry.segmentations:
                raise NotFoundError(f"parent version {seg.parent_version} does not exist")
            version = max(entry.segmentations, default=0) + 1
            seg = dataclasses.replace(seg, version=version)
            blob_data = json.dumps(segmentation_to_doc(series_id, seg),
                                   separators=(",", ":"), sort_keys=True).encode("utf-8")
            checksum = self._write_blob(blob_data)
            self._maybe_crash()
            self._append({
                "op": "segmentation", "series_id": series_id, "version": version,
                "parent_version": seg.parent_version, "blob": checksum,
                "provenance": {
                    "source": seg.provenance.source,
                    "model_id": seg.provenance.model_id,
                    "model_version": seg.provenance.model_version,
                    "created_at": seg.provenance.created_at,
                },
                "roi_names": [roi.name for roi, _ in seg.rois],
            })
            return version

    def get_segmentation(self, series_id: str, version: int) -> SegmentationSet:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            record = entry.segmentations.get(version)
            if record is None:
                raise NotFoundError(f"series {series_id} has no segmentation version {version}")
            blob = record["blob"]
        _, seg = segmentation_from_doc(self._read_blob(blob).decode("utf-8"))
        return seg

    def list_versions(self, series_id: str) -> list[dict]:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            return [
                {
                    "version": v,
                    "parent_version": rec.get("parent_version"),
                    "provenance": rec.get("provenance"),
                    "roi_names": rec.get("roi_names", []),
                }
                for v, rec in sorted(entry.segmentations.items())
            ]

    # ---------------------------------------------------------- reports

    def put_report(self, series_id: str, report_doc: dict) -> str:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            report_id = f"report-{len(entry.reports) + 1:04d}"
            blob_data = json.dumps(report_doc, separators=(",", ":"), sort_keys=True).encode("utf-8")
            checksum = self._write_blob(blob_data)
            self._maybe_crash()
            self._append({
                "op": "report", "series_id": series_id, "report_id": report_id,
                "blob": checksum,
                "pred_version": report_doc.get("pred_version"),
                "gt_version": report_doc.get("gt_version"),
            })
            return report_id

    def get_report(self, series_id: str, report_id: str) -> dict:
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            record = entry.reports.get(report_id)
            if record is None:
                raise NotFoundError(f"series {series_id} has no report {report_id}")
            blob = record["blob"]
        return json.loads(self._read_blob(blob).decode("utf-8"))

    # ----------------------------------------------------------- models

    def put_model(self, manifest: dict) -> None:
        with self._lock:
            self._append({"op": "model", "model_id": manifest["model_id"], "manifest": manifest})

    def get_model(self, model_id: str) -> dict:
        with self._lock:
            manifest = self._models.get(model_id)
            if manifest is None:
                raise NotFoundError(f"unknown model {model_id}")
            return dict(manifest)

    def list_models(self) -> list[dict]:
        with self._lock:
            return sorted((dict(m) for m in self._models.values()),
                          key=lambda m: (m.get("name", ""), m.get("version", "")))

    # ------------------------------------------------------------- jobs

    def put_job(self, job: dict) -> None:
        with self._lock:
            self._append({"op": "job", "job": job})

    def get_job(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise NotFoundError(f"unknown job {job_id}")
            return dict(job)

    def list_jobs(self) -> list[dict]:
        with self._lock:
            return [dict(j) for j in self._jobs.values()]

    # ---------------------------------------------------- staging/purge

    def stage_series(self, series_id: str, dest_dir) -> list[str]:
        """Write series files + series.meta into an executor workspace."""
        series = self.get_series(series_id)
        dest = Path(dest_dir)
        dest.mkdir(parents=True, exist_ok=True)
        written = []
        for name, data in series_to_files(series):
            path = dest / name
            path.write_bytes(data)
            written.append(str(path))
        meta_path = dest / "series.meta"
        meta_path.write_text(json.dumps({
            "series_id": series.series_id,
            "study_id": series.study_id,
            "modality": series.modality,
            "grid": grid_to_dict(series.grid),
        }, indent=2))
        written.append(str(meta_path))
        with self._lock:
            self._staged.setdefault(series_id, set()).add(str(dest))
        return written

    def purge_series(self, series_id: str, scope: str = "everything") -> PurgeReceipt:
        if scope not in ("compute-copies", "everything"):
            raise NotFoundError(f"unknown purge scope {scope!r}")
        with self._lock:
            entry = self._series.get(series_id)
            if entry is None:
                raise NotFoundError(f"unknown series {series_id}")
            removed_paths = self._purge_staged(series_id)
            removed_blobs: tuple[str, ...] = ()
            if scope == "everything":
                blobs = [entry.blob]
                blobs += [rec["blob"] for rec in entry.segmentations.values()]
                blobs += [rec["blob"] for rec in entry.reports.values()]
                self._append({"op": "purge", "series_id": series_id})
                self._sweep(blobs)
                removed_blobs = tuple(blobs)
            return PurgeReceipt(series_id=series_id, scope=scope,
                                removed_blobs=removed_blobs,
                                removed_paths=tuple(removed_paths))

    def _purge_staged(self, series_id: str) -> list[str]:
        removed = []
        for staged_dir in sorted(self._staged.pop(series_id, set())):
            path = Path(staged_dir)
            if path.exists():
                for child in sorted(path.rglob("*"), reverse=True):
                    if child.is_file():
                        child.unlink()
                        removed.append(str(child))
                    else:
                        child.rmdir()
                path.rmdir()
                removed.append(staged_dir)
        return removed

    def _live_blobs(self) -> set[str]:
        live = set()
        for entry in self._series.values():
            live.add(entry.blob)
            live.update(rec["blob"] for rec in entry.segmentations.values())
            live.update(rec["blob"] for rec in entry.reports.values())
        return live

    def _sweep(self, candidates) -> None:
        """Best-effort physical deletion of blobs no longer referenced."""
        live = self._live_blobs()
        for checksum in candidates:
            if checksum in live:
                continue
            try:
                (self.blob_dir / checksum).unlink(missing_ok=True)
            except OSError:
                pass  # sweeper retries on the next purge

    # -------------------------------------------------------- integrity

    def verify_integrity(self) -> dict:
        """Check every live index entry against its on-disk blob."""
        problems = []
        with self._lock:
            for entry in self._series.values():
                refs = [("series", entry.series_id, entry.blob)]
                refs += [("segmentation", f"{entry.series_id}@v{v}", rec["blob"])
                         for v, rec in entry.segmentations.items()]
                refs += [("report", f"{entry.series_id}/{rid}", rec["blob"])
                         for rid, rec in entry.reports.items()]
                for kind, ref, checksum in refs:
                    path = self.blob_dir / checksum
                    if not path.exists():
                        problems.append(f"{kind} {ref}: blob {checksum} missing")
                        continue
                    if hashutil.sha256_hex(path.read_bytes()) != checksum:
                        problems.append(f"{kind} {ref}: blob {checksum} corrupt")
        return {"ok": not problems, "problems": problems}
