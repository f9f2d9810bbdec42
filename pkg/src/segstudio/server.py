"""HTTP service tying the modules together for multiple concurrent users.

Endpoint surface (paths are normative):

    GET    /health
    POST   /studies                         multipart DICOM upload
    GET    /studies
    GET    /series/{id}                     metadata
    GET    /series/{id}/slices/{k}          raw int16 LE slice + window headers
    DELETE /series/{id}                     purge everything
    POST   /series/{id}/segmentations       segmentation exchange document
    GET    /series/{id}/segmentations
    GET    /series/{id}/segmentations/{v}
    POST   /series/{id}/segmentations/{v}/edits   brush operations -> new version
    POST   /evaluate
    GET    /models ; POST /models
    POST   /jobs ; GET /jobs/{id}
    POST   /export                          active-learning bundle download

Error bodies are always {"code", "message", "detail"}; the code set is the
module error taxonomy.  Auth is a single optional shared bearer token.
"""

from __future__ import annotations

import socket
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import SERVICE_NAME, __version__
from .analysis import evaluate
from .dicomio import parse_series
from .errors import (ArgumentError, AuthError, BoundsError, BusyError,
                     CodecError, ConflictError, GeometryError,
                     GridMismatchError, IntegrityError, MixedSeriesError,
                     NotFoundError, ParseError, SegStudioError,
                     SeriesMismatchError, StartupError, UnsupportedError)
from .exchange import grid_to_dict, segmentation_from_doc, segmentation_to_doc
from .executors import LocalExecutor, MockExecutor
from .geometry import WorldPoint
from .mask import ROI, Provenance, SegmentationSet, apply_brush, new_mask
from .orchestrator import Orchestrator
from .store import Store

_STATUS = {
    ArgumentError: 400,
    BoundsError: 400,
    CodecError: 400,
    ParseError: 400,
    GeometryError: 400,
    MixedSeriesError: 400,
    AuthError: 401,
    UnsupportedError: 415,
    NotFoundError: 404,
    ConflictError: 409,
    GridMismatchError: 409,
    SeriesMismatchError: 409,
    BusyError: 429,
    IntegrityError: 500,
    StartupError: 500,
}


@dataclass
class ApiConfig:
    port: int = 8000
    host: str = "127.0.0.1"
    data_dir: str = "./segstudio-data"
    executor: str = "local"  # local | mock
    max_jobs: int = 16
    token: str | None = None
    max_upload_mb: int = 256
    ui_dir: str | None = None
    command_template: str | None = None
    executor_count: int = 1
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not 1 <= self.port <= 65535:
            raise StartupError(f"invalid port {self.port}")
        if self.executor not in ("local", "mock"):
            raise StartupError(f"unknown executor kind {self.executor!r}")
        try:
            Path(self.data_dir).mkdir(parents=True, exist_ok=True)
            probe = Path(self.data_dir) / ".writable"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise StartupError(f"data dir {self.data_dir} is not writable: {exc}") from exc


def build_runtime(config: ApiConfig) -> tuple[Store, Orchestrator]:
    config.validate()
    store = Store(config.data_dir)
    work_root = Path(config.data_dir) / "work"
    executors = []
    for n in range(config.executor_count):
        if config.executor == "local":
            executors.append(LocalExecutor(f"exec-{n + 1}", work_root,
                                           command_template=config.command_template))
        else:
            executors.append(MockExecutor(f"exec-{n + 1}", work_root))
    return store, Orchestrator(store, executors, max_queue=config.max_jobs)


def _error_body(code: str, message: str, detail=None) -> dict:
    return {"code": code, "message": message, "detail": detail}


def create_app(config: ApiConfig, store: Store | None = None,
               orchestrator: Orchestrator | None = None) -> FastAPI:
    if store is None or orchestrator is None:
        store, orchestrator = build_runtime(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        # Graceful shutdown: in-flight jobs finish, queued ones fail as 'shutdown'.
        orchestrator.shutdown()

    app = FastAPI(title=SERVICE_NAME, version=__version__, lifespan=lifespan)
    app.state.config = config
    app.state.store = store
    app.state.orchestrator = orchestrator
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"], expose_headers=["*"])

    @app.exception_handler(SegStudioError)
    async def handle_domain_error(request: Request, exc: SegStudioError):
        status = _STATUS.get(type(exc), 500)
        return JSONResponse(status_code=status,
                            content=_error_body(exc.code, exc.message, exc.detail))

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content=_error_body("bad_argument", "invalid request", exc.errors()))

    def require_token(request: Request):
        if config.token:
            header = request.headers.get("authorization", "")
            if header != f"Bearer {config.token}":
                raise AuthError("missing or invalid bearer token")
        return True

    def check_upload_size(request: Request):
        length = request.headers.get("content-length")
        if length and int(length) > config.max_upload_mb * 1024 * 1024:
            raise ArgumentError(
                f"upload exceeds the {config.max_upload_mb} MiB limit")
        return True

    auth = Depends(require_token)
    upload_guard = Depends(check_upload_size)

    @app.get("/health")
    def health():
        return {"service": SERVICE_NAME, "version": __version__}

    # ------------------------------------------------------------ series

    @app.post("/studies", status_code=201)
    def upload_study(files: list[UploadFile], _=auth, __=upload_guard):
        payloads = [f.file.read() for f in files]
        series = parse_series(payloads)
        series_id = store.put_series(series)
        return {"study_id": series.study_id, "series_id": series_id,
                "slices": series.grid.slices}

    @app.get("/studies")
    def list_studies(_=auth):
        return {"studies": store.list_studies()}

    @app.get("/series/{series_id}")
    def series_meta(series_id: str, _=auth):
        series = store.get_series(series_id)
        lo = int(series.voxels.min())
        hi = int(series.voxels.max())
        return {
            "series_id": series.series_id,
            "study_id": series.study_id,
            "modality": series.modality,
            "patient_ref": series.patient_ref,
            "grid": grid_to_dict(series.grid),
            "intensity_range": [lo, hi],
            "segmentations": store.list_versions(series_id),
        }

    @app.get("/series/{series_id}/slices/{k}")
    def series_slice(series_id: str, k: int, _=auth):
        series = store.get_series(series_id)
        if not 0 <= k < series.grid.slices:
            raise BoundsError(f"slice {k} outside series of {series.grid.slices} slices")
        plane = series.voxels[k]
        lo = int(series.voxels.min())
        hi = int(series.voxels.max())
        headers = {
            "X-Rows": str(series.grid.rows),
            "X-Cols": str(series.grid.cols),
            "X-Slice-Index": str(k),
            "X-Intensity-Min": str(lo),
            "X-Intensity-Max": str(hi),
            "X-Window-Center": str((lo + hi) / 2),
            "X-Window-Width": str(max(hi - lo, 1)),
        }
        return Response(content=np.ascontiguousarray(plane, dtype="<i2").tobytes(),
                        media_type="application/octet-stream", headers=headers)

    @app.delete("/series/{series_id}")
    def purge_series(series_id: str, _=auth):
        receipt = store.purge_series(series_id, scope="everything")
        return {"series_id": receipt.series_id, "scope": receipt.scope,
                "removed_blobs": list(receipt.removed_blobs),
                "removed_paths": list(receipt.removed_paths)}

    # ----------------------------------------------------- segmentations

    @app.post("/series/{series_id}/segmentations", status_code=201)
    async def post_segmentation(series_id: str, request: Request, _=auth, __=upload_guard):
        body = await request.body()
        expect = store.series_grid(series_id)
        _, seg = segmentation_from_doc(body, expect_grid=expect)
        version = store.put_segmentation(series_id, seg)
        return {"series_id": series_id, "version": version}

    @app.get("/series/{series_id}/segmentations")
    def list_segmentations(series_id: str, _=auth):
        return {"series_id": series_id, "versions": store.list_versions(series_id)}

    @app.get("/series/{series_id}/segmentations/{version}")
    def get_segmentation(series_id: str, version: int, _=auth):
        seg = store.get_segmentation(series_id, version)
        return segmentation_to_doc(series_id, seg)

    @app.post("/series/{series_id}/segmentations/{version}/edits", status_code=201)
    async def post_edits(series_id: str, version: int, request: Request, _=auth):
        body = await request.json()
        ops = body.get("ops")
        if not isinstance(ops, list) or not ops:
            raise ArgumentError("edits body must carry a nonempty 'ops' list")
        seg = store.get_segmentation(series_id, version)
        seg = apply_edit_ops(seg, ops)
        new_seg = SegmentationSet(
            series_ref=seg.series_ref, rois=seg.rois,
            provenance=Provenance(source="edited"),
            parent_version=version)
        new_version = store.put_segmentation(series_id, new_seg)
        return {"series_id": series_id, "version": new_version,
                "parent_version": version}

    # ---------------------------------------------------------- analysis

    @app.post("/evaluate")
    def post_evaluate(body: dict, _=auth):
        series_id = body.get("series_id")
        pred_v = body.get("pred_version")
        gt_v = body.get("gt_version")
        if not series_id or pred_v is None or gt_v is None:
            raise ArgumentError("evaluate needs series_id, pred_version, gt_version")
        pred = store.get_segmentation(series_id, int(pred_v))
        gt = store.get_segmentation(series_id, int(gt_v))
        report, discrepancy = evaluate(pred, gt)
        disc_version = store.put_segmentation(series_id, discrepancy)
        doc = report.to_dict()
        doc["discrepancy_version"] = disc_version
        report_id = store.put_report(series_id, doc)
        doc["report_id"] = report_id
        return doc

    # -------------------------------------------------- models and jobs

    @app.get("/models")
    def list_models(_=auth):
        return {"models": orchestrator.list_models()}

    @app.post("/models", status_code=201)
    def register_model(manifest: dict, _=auth):
        model_id = orchestrator.register_model(manifest)
        return {"model_id": model_id}

    @app.post("/jobs", status_code=202)
    def submit_job(body: dict, request: Request, _=auth):
        model_id = body.get("model_id")
        series_id = body.get("series_id")
        if not model_id or not series_id:
            raise ArgumentError("jobs need model_id and series_id")
        key = request.headers.get("idempotency-key") or body.get("idempotency_key")
        job_id = orchestrator.submit_job(model_id, series_id, idempotency_key=key)
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str, _=auth):
        return orchestrator.job_status(job_id)

    # ------------------------------------------------------------ export

    @app.post("/export")
    def export_bundle(body: dict, _=auth):
        series_id = body.get("series_id")
        pred_v = body.get("pred_version")
        corrected_v = body.get("corrected_version")
        if not series_id or pred_v is None or corrected_v is None:
            raise ArgumentError("export needs series_id, pred_version, corrected_version")
        gt_v = body.get("gt_version")
        archive = orchestrator.export_active_learning_bundle(
            series_id, int(pred_v), int(corrected_v),
            gt_version=int(gt_v) if gt_v is not None else None,
            include_images=bool(body.get("include_images", False)))
        return Response(
            content=archive, media_type="application/zip",
            headers={"Content-Disposition":
                     f"attachment; filename=bundle-{series_id}-v{pred_v}-v{corrected_v}.zip"})

    ui_dir = config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def apply_edit_ops(seg: SegmentationSet, ops: list[dict]) -> SegmentationSet:
    """Apply a list of brush operations to a segmentation set."""
    rois = list(seg.rois)
    for op in ops:
        try:
            roi_number = int(op["roi_number"])
            center = WorldPoint(*[float(c) for c in op["center"]])
            radius = float(op["radius"])
            shape = str(op.get("shape", "sphere3d"))
            mode = str(op.get("mode", "paint"))
            slice_k = op.get("slice")
        except (KeyError, TypeError, ValueError) as exc:
            raise ArgumentError(f"malformed brush operation: {exc}") from exc
        idx = next((n for n, (roi, _) in enumerate(rois) if roi.number == roi_number), None)
        if idx is None:
            new_roi = op.get("roi")
            if not new_roi:
                raise NotFoundError(f"segmentation has no ROI number {roi_number} "
                                    "(supply 'roi' to create one)")
            grid = seg.grid
            if grid is None:
                raise ArgumentError("cannot create an ROI in an empty segmentation set")
            roi = ROI(number=roi_number, name=str(new_roi["name"]),
                      color=tuple(int(c) for c in new_roi.get("color", (255, 0, 0))))
            rois.append((roi, new_mask(grid)))
            idx = len(rois) - 1
        roi, mask = rois[idx]
        rois[idx] = (roi, apply_brush(mask, center, radius, shape=shape, mode=mode,
                                      slice_k=int(slice_k) if slice_k is not None else None))
    return SegmentationSet(series_ref=seg.series_ref, rois=tuple(rois),
                           provenance=seg.provenance)


def _port_available(host: str, port: int) -> bool:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
            return True
        except OSError:
            return False


def serve(config: ApiConfig) -> None:
    """Run the service until interrupted; StartupError if the port is taken."""
    import uvicorn

    config.validate()
    if not _port_available(config.host, config.port):
        raise StartupError(f"port {config.port} is already in use")
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
