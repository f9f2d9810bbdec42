"""Compute executors: the stand-in for the on-demand, auto-suspending VM.

Every executor follows the same lifecycle: ``provision()`` creates a clean
workspace, ``execute()`` turns a staged series into a label volume,
``suspend()`` parks the executor, ``purge_workspace()`` removes every staged
byte.  The orchestrator guarantees suspend+purge after every job, success or
failure.

Workspace staging layout (documented contract for external commands)::

    workspace/
      input/    series slice files (Part-10) + series.meta (JSON)
      output/   labels.bin (little-endian uint16, i-fastest voxel order)
                labels.meta (JSON: {"shape": [slices, rows, cols],
                                    "dtype": "uint16-le"})
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dicomio import ImageSeries
from .errors import ArgumentError
from .reference_model import run_reference_model

SUSPENDED = "Suspended"
PROVISIONING = "Provisioning"
ACTIVE = "Active"

BUILTIN_THRESHOLD_IMAGE = "builtin:threshold"


@dataclass(frozen=True)
class ExecutorState:
    executor_id: str
    state: str
    current_job: str | None
    workspace: str | None


def write_labels(out_dir: Path, labels: np.ndarray) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(labels, dtype="<u2")
    (out_dir / "labels.bin").write_bytes(data.tobytes())
    (out_dir / "labels.meta").write_text(json.dumps(
        {"shape": list(labels.shape), "dtype": "uint16-le"}))


def read_labels(out_dir: Path, expected_shape: tuple[int, int, int]) -> np.ndarray:
    meta_path = out_dir / "labels.meta"
    bin_path = out_dir / "labels.bin"
    if not bin_path.exists():
        raise ArgumentError("model produced no output/labels.bin")
    shape = expected_shape
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        shape = tuple(meta["shape"])
    if shape != expected_shape:
        raise ArgumentError(f"label volume shape {shape} != series shape {expected_shape}")
    raw = bin_path.read_bytes()
    expected_bytes = shape[0] * shape[1] * shape[2] * 2
    if len(raw) != expected_bytes:
        raise ArgumentError(f"labels.bin holds {len(raw)} bytes; expected {expected_bytes}")
    return np.frombuffer(raw, dtype="<u2").reshape(shape).copy()


class _BaseExecutor:
    """Shared lifecycle bookkeeping; subclasses implement _run()."""

    def __init__(self, executor_id: str, root_dir):
        self.executor_id = executor_id
        self.root = Path(root_dir)
        self._state = SUSPENDED
        self._current_job: str | None = None
        self._lock = threading.Lock()

    @property
    def workspace(self) -> Path:
        return self.root / self.executor_id

    @property
    def input_dir(self) -> Path:
        return self.workspace / "input"

    @property
    def output_dir(self) -> Path:
        return self.workspace / "output"

    def provision(self, job_id: str) -> Path:
        with self._lock:
            if self._state != SUSPENDED:
                raise ArgumentError(f"executor {self.executor_id} is {self._state}, not Suspended")
            self._state = PROVISIONING
            self._current_job = job_id
        self.workspace.mkdir(parents=True, exist_ok=True)
        self.input_dir.mkdir(exist_ok=True)
        self.output_dir.mkdir(exist_ok=True)
        return self.workspace

    def execute(self, series: ImageSeries, manifest: dict) -> np.ndarray:
        with self._lock:
            self._state = ACTIVE
        return self._run(series, manifest)

    def _run(self, series: ImageSeries, manifest: dict) -> np.ndarray:
        raise NotImplementedError

    def suspend(self) -> None:
        with self._lock:
            self._state = SUSPENDED
            self._current_job = None

    def purge_workspace(self) -> None:
        ws = self.workspace
        if ws.exists():
            for child in sorted(ws.rglob("*"), reverse=True):
                if child.is_file() or child.is_symlink():
                    child.unlink()
                else:
                    child.rmdir()

    def state_snapshot(self) -> ExecutorState:
        with self._lock:
            return ExecutorState(
                executor_id=self.executor_id, state=self._state,
                current_job=self._current_job,
                workspace=str(self.workspace) if self.workspace.exists() else None)


class LocalExecutor(_BaseExecutor):
    """Runs the built-in reference model or a configured external command.

    ``command_template`` is a shell-less template expanded per job with
    {workspace}, {input}, {output} and {image}; the command must leave a
    label volume in the documented output layout.
    """

    def __init__(self, executor_id: str, root_dir, command_template: str | None = None,
                 timeout_s: float = 300.0):
        super().__init__(executor_id, root_dir)
        self.command_template = command_template
        self.timeout_s = timeout_s

    def _run(self, series: ImageSeries, manifest: dict) -> np.ndarray:
        image_ref = manifest.get("image_ref", "")
        if image_ref == BUILTIN_THRESHOLD_IMAGE:
            labels = run_reference_model(series.voxels, manifest["label_map"],
                                         manifest.get("resource_hints") or {})
            write_labels(self.output_dir, labels)  # keep the staging contract honest
            return read_labels(self.output_dir, series.grid.shape)
        if not self.command_template:
            raise ArgumentError(
                f"no command template configured for model image {image_ref!r}")
        argv = [part.format(workspace=self.workspace, input=self.input_dir,
                            output=self.output_dir, image=image_ref)
                for part in shlex.split(self.command_template)]
        proc = subprocess.run(argv, capture_output=True, timeout=self.timeout_s)
        if proc.returncode != 0:
            raise ArgumentError(
                f"model command exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:500]}")
        return read_labels(self.output_dir, series.grid.shape)


class MockExecutor(_BaseExecutor):
    """Deterministic scripted executor for tests.

    Behavior keys off the manifest image reference: ``mock:ok`` emits an
    all-zero label volume, ``mock:fill:<label>`` a constant one, and
    ``mock:fail[:detail]`` raises.  ``resource_hints.mock_latency_s`` adds a
    fixed delay.  A ``script`` callable overrides all of that.
    """

    def __init__(self, executor_id: str, root_dir, script=None):
        super().__init__(executor_id, root_dir)
        self.script = script

    def _run(self, series: ImageSeries, manifest: dict) -> np.ndarray:
        hints = manifest.get("resource_hints") or {}
        latency = float(hints.get("mock_latency_s", 0.0))
        if latency > 0:
            time.sleep(latency)
        if self.script is not None:
            labels = self.script(series, manifest)
        else:
            ref = manifest.get("image_ref", "mock:ok")
            parts = ref.split(":")
            if parts[:2] == ["mock", "fail"]:
                raise RuntimeError(parts[2] if len(parts) > 2 else "scripted failure")
            if parts[:2] == ["mock", "fill"]:
                labels = np.full(series.grid.shape, int(parts[2]), dtype=np.uint16)
            else:
                labels = np.zeros(series.grid.shape, dtype=np.uint16)
        write_labels(self.output_dir, labels)
        return read_labels(self.output_dir, series.grid.shape)
