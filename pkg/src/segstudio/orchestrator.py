"""Model registry and inference job lifecycle.

Jobs move Queued -> Provisioning -> Running -> Postprocessing -> Completed,
or -> Failed from any non-terminal state.  After every terminal state the
executor is suspended and its workspace is purged — the privacy and cost
guarantees hang on that, so it happens in a ``finally``.

The queue is bounded; a full queue is an explicit BusyError, never silent
buffering.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
import zipfile
from dataclasses import dataclass, field
from io import BytesIO

import numpy as np

from .analysis import evaluate
from .errors import ArgumentError, BusyError, ConflictError, NotFoundError
from .exchange import segmentation_to_doc
from .mask import ROI, Provenance, SegmentationSet, VoxelMask, now_iso
from .store import Store

QUEUED = "Queued"
PROVISIONING = "Provisioning"
RUNNING = "Running"
POSTPROCESSING = "Postprocessing"
COMPLETED = "Completed"
FAILED = "Failed"

_TERMINAL = (COMPLETED, FAILED)

_ROI_PALETTE = (
    (66, 133, 244), (219, 68, 55), (244, 180, 0), (15, 157, 88),
    (171, 71, 188), (0, 172, 193), (255, 112, 67), (158, 157, 36),
)


def _validate_manifest(manifest: dict) -> dict:
    for key in ("name", "version", "image_ref", "label_map"):
        if not manifest.get(key):
            if key == "label_map":
                raise ArgumentError("model manifest needs a nonempty label map")
            raise ArgumentError(f"model manifest needs a {key}")
    label_map = {str(k): int(v) for k, v in manifest["label_map"].items()}
    if any(v < 1 for v in label_map.values()):
        raise ArgumentError("label map values must be positive integers")
    return {
        "model_id": manifest.get("model_id") or "m-" + uuid.uuid4().hex[:12],
        "name": str(manifest["name"]),
        "version": str(manifest["version"]),
        "image_ref": str(manifest["image_ref"]),
        "label_map": label_map,
        "modality": str(manifest.get("modality", "CT")),
        "resource_hints": dict(manifest.get("resource_hints") or {}),
    }


@dataclass
class InferenceJob:
    job_id: str
    model_id: str
    series_id: str
    state: str = QUEUED
    transitions: list = field(default_factory=list)
    result_version: int | None = None
    error: str | None = None
    idempotency_key: str | None = None

    def transition(self, state: str) -> None:
        prev_ns = self.transitions[-1]["t_ns"] if self.transitions else 0
        t_ns = max(prev_ns + 1, time.monotonic_ns())
        self.state = state
        self.transitions.append({"state": state, "at": now_iso(), "t_ns": t_ns})

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id, "model_id": self.model_id,
            "series_id": self.series_id, "state": self.state,
            "transitions": list(self.transitions),
            "result_version": self.result_version, "error": self.error,
            "idempotency_key": self.idempotency_key,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceJob":
        return cls(job_id=d["job_id"], model_id=d["model_id"], series_id=d["series_id"],
                   state=d.get("state", QUEUED), transitions=list(d.get("transitions", [])),
                   result_version=d.get("result_version"), error=d.get("error"),
                   idempotency_key=d.get("idempotency_key"))


class Orchestrator:
    def __init__(self, store: Store, executors, max_queue: int = 16):
        self.store = store
        self.executors = list(executors)
        if not self.executors:
            raise ArgumentError("orchestrator needs at least one executor")
        self._queue: queue.Queue[str] = queue.Queue(maxsize=max_queue)
        self._lock = threading.RLock()
        self._jobs: dict[str, InferenceJob] = {}
        self._idempotency: dict[str, str] = {}
        self._stop = threading.Event()
        self._recover_jobs()
        self._workers = [
            threading.Thread(target=self._worker, args=(ex,), daemon=True,
                             name=f"segstudio-worker-{ex.executor_id}")
            for ex in self.executors
        ]
        for w in self._workers:
            w.start()

    def _recover_jobs(self) -> None:
        for record in self.store.list_jobs():
            job = InferenceJob.from_dict(record)
            if job.state not in _TERMINAL:
                job.error = "interrupted by restart"
                job.transition(FAILED)
                self.store.put_job(job.to_dict())
            self._jobs[job.job_id] = job
            if job.idempotency_key:
                self._idempotency[job.idempotency_key] = job.job_id

    # ---------------------------------------------------------- registry

    def register_model(self, manifest: dict) -> str:
        cleaned = _validate_manifest(manifest)
        with self._lock:
            for existing in self.store.list_models():
                if (existing["name"], existing["version"]) == (cleaned["name"], cleaned["version"]):
                    raise ConflictError(
                        f"model {cleaned['name']} version {cleaned['version']} already registered")
            self.store.put_model(cleaned)
        return cleaned["model_id"]

    def list_models(self) -> list[dict]:
        return self.store.list_models()

    def get_model(self, model_id: str) -> dict:
        return self.store.get_model(model_id)

    # -------------------------------------------------------------- jobs

    def submit_job(self, model_id: str, series_id: str,
                   idempotency_key: str | None = None) -> str:
        with self._lock:
            if idempotency_key and idempotency_key in self._idempotency:
                return self._idempotency[idempotency_key]
            self.store.get_model(model_id)  # NotFoundError if absent
            if not self.store.has_series(series_id):
                raise NotFoundError(f"unknown series {series_id}")
            if self._stop.is_set():
                raise BusyError("orchestrator is shutting down")
            if self._queue.full():
                raise BusyError(f"job queue is full ({self._queue.maxsize} pending)")
            job = InferenceJob(job_id="j-" + uuid.uuid4().hex[:12],
                               model_id=model_id, series_id=series_id,
                               idempotency_key=idempotency_key)
            job.transition(QUEUED)
            self._jobs[job.job_id] = job
            if idempotency_key:
                self._idempotency[idempotency_key] = job.job_id
            self.store.put_job(job.to_dict())
            self._queue.put_nowait(job.job_id)
            return job.job_id

    def job_status(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise NotFoundError(f"unknown job {job_id}")
            return job.to_dict()

    def list_jobs(self) -> list[dict]:
        with self._lock:
            return [job.to_dict() for job in self._jobs.values()]

    def executor_states(self) -> list:
        return [ex.state_snapshot() for ex in self.executors]

    def _set_state(self, job: InferenceJob, state: str) -> None:
        with self._lock:
            job.transition(state)
            self.store.put_job(job.to_dict())

    def _worker(self, executor) -> None:
        while not self._stop.is_set():
            try:
                job_id = self._queue.get(timeout=0.05)
            except queue.Empty:
                continue
            job = self._jobs[job_id]
            try:
                self._run_job(executor, job)
            finally:
                self._queue.task_done()

    def _run_job(self, executor, job: InferenceJob) -> None:
        try:
            manifest = self.store.get_model(job.model_id)
            self._set_state(job, PROVISIONING)
            executor.provision(job.job_id)
            self.store.stage_series(job.series_id, executor.input_dir)
            series = self.store.get_series(job.series_id)

            self._set_state(job, RUNNING)
            labels = executor.execute(series, manifest)

            self._set_state(job, POSTPROCESSING)
            seg = _labels_to_segmentation(job.series_id, series.grid, labels, manifest)
            version = self.store.put_segmentation(job.series_id, seg)

            self._release(executor, job.series_id)
            with self._lock:
                job.result_version = version
                job.transition(COMPLETED)
                self.store.put_job(job.to_dict())
        except Exception as exc:  # noqa: BLE001 — every failure must land in the job record
            self._release(executor, job.series_id)
            with self._lock:
                job.error = f"{type(exc).__name__}: {exc}"
                job.transition(FAILED)
                self.store.put_job(job.to_dict())

    def _release(self, executor, series_id: str) -> None:
        """Privacy/cost contract: no staged bytes and no active VM survive a job."""
        try:
            self.store.purge_series(series_id, scope="compute-copies")
        except NotFoundError:
            pass  # series itself was deleted mid-job
        executor.purge_workspace()
        executor.suspend()

    def shutdown(self, timeout_s: float = 10.0) -> None:
        """Stop workers; queued-but-unstarted jobs are failed as 'shutdown'."""
        self._stop.set()
        drained = []
        while True:
            try:
                drained.append(self._queue.get_nowait())
            except queue.Empty:
                break
        with self._lock:
            for job_id in drained:
                job = self._jobs[job_id]
                if job.state not in _TERMINAL:
                    job.error = "shutdown"
                    job.transition(FAILED)
                    self.store.put_job(job.to_dict())
        for w in self._workers:
            w.join(timeout=timeout_s)

    # ------------------------------------------------------------ export

    def export_active_learning_bundle(self, series_id: str, pred_version: int,
                                      corrected_version: int,
                                      gt_version: int | None = None,
                                      include_images: bool = False) -> bytes:
        pred = self.store.get_segmentation(series_id, pred_version)
        corrected = self.store.get_segmentation(series_id, corrected_version)
        reference = (self.store.get_segmentation(series_id, gt_version)
                     if gt_version is not None else corrected)

        report_before, _ = evaluate(pred, reference)
        report_after, _ = evaluate(corrected, reference)

        manifest = {
            "format": "active-learning-bundle/v1",
            "series_id": series_id,
            "series_checksum": self.store.series_blob_ref(series_id),
            "pred_version": pred_version,
            "corrected_version": corrected_version,
            "gt_version": gt_version,
            "model_provenance": {
                "source": pred.provenance.source,
                "model_id": pred.provenance.model_id,
                "model_version": pred.provenance.model_version,
            },
            "dice_before": report_before.mean_dice,
            "dice_after": report_after.mean_dice,
            "edit_timestamps": {
                "pred_created_at": pred.provenance.created_at,
                "corrected_created_at": corrected.provenance.created_at,
            },
            "includes_images": bool(include_images),
            "created_at": now_iso(),
        }

        buf = BytesIO()
        with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("manifest.json", json.dumps(manifest, indent=2))
            zf.writestr("masks/pred.json",
                        json.dumps(segmentation_to_doc(series_id, pred), indent=2))
            zf.writestr("masks/corrected.json",
                        json.dumps(segmentation_to_doc(series_id, corrected), indent=2))
            if gt_version is not None:
                zf.writestr("masks/gt.json",
                            json.dumps(segmentation_to_doc(series_id, reference), indent=2))
            if include_images:
                from .dicomio import series_to_files
                series = self.store.get_series(series_id)
                for name, data in series_to_files(series):
                    zf.writestr(f"images/{name}", data)
        return buf.getvalue()


def _labels_to_segmentation(series_id: str, grid, labels: np.ndarray,
                            manifest: dict) -> SegmentationSet:
    """Map a model's label volume onto named ROI masks via the label map."""
    rois = []
    pairs = sorted(manifest["label_map"].items(), key=lambda kv: kv[1])
    for number, (roi_name, label) in enumerate(pairs, start=1):
        mask = VoxelMask(grid, labels == np.uint16(label))
        rois.append((ROI(number=number, name=roi_name,
                         color=_ROI_PALETTE[(number - 1) % len(_ROI_PALETTE)]),
                     mask))
    return SegmentationSet(
        series_ref=series_id, rois=tuple(rois),
        provenance=Provenance(source="model", model_id=manifest["model_id"],
                              model_version=manifest["version"]))
