import io
import json
import zipfile

import numpy as np
import pytest
from fastapi.testclient import TestClient

from segstudio.exchange import segmentation_to_doc
from segstudio.phantom import generate_phantom
from segstudio.server import ApiConfig, create_app

from .conftest import sphere_phantom_spec
from .test_orchestrator import threshold_manifest


@pytest.fixture
def client(tmp_path):
    config = ApiConfig(data_dir=str(tmp_path / "data"), executor="local", max_jobs=8)
    app = create_app(config)
    with TestClient(app) as c:
        c.app = app
        yield c


def upload(client, label="api", **kw):
    bundle = generate_phantom(sphere_phantom_spec(label, **kw))
    files = [("files", (name, data, "application/dicom")) for name, data in bundle.files]
    resp = client.post("/studies", files=files)
    assert resp.status_code == 201, resp.text
    return resp.json(), bundle


def wait_job(client, job_id, timeout=30.0):
    import time
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["state"] in ("Completed", "Failed"):
            return job
        time.sleep(0.02)
    raise AssertionError("job did not finish")


def test_health_is_open_and_versioned(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["service"] == "segstudio"
    assert body["version"]


def test_token_enforced(tmp_path):
    config = ApiConfig(data_dir=str(tmp_path / "data"), executor="mock", token="sekrit")
    with TestClient(create_app(config)) as client:
        resp = client.get("/studies")
        assert resp.status_code == 401
        body = resp.json()
        assert set(body) == {"code", "message", "detail"}
        assert body["code"] == "unauthorized"
        assert client.get("/health").status_code == 200  # health stays open
        ok = client.get("/studies", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200


def test_upload_list_and_metadata(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    listing = client.get("/studies").json()["studies"]
    assert [s["series_id"] for st in listing for s in st["series"]] == [series_id]

    got = client.get(f"/series/{series_id}").json()
    assert got["grid"]["rows"] == 12
    assert got["modality"] == "CT"
    assert got["patient_ref"].startswith("anon-")


def test_slice_endpoint_returns_raw_int16(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    resp = client.get(f"/series/{series_id}/slices/6")
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("application/octet-stream")
    rows = int(resp.headers["x-rows"])
    cols = int(resp.headers["x-cols"])
    plane = np.frombuffer(resp.content, dtype="<i2").reshape(rows, cols)
    assert plane.max() == 1000  # middle slice crosses the sphere
    assert float(resp.headers["x-window-width"]) == 1000
    missing = client.get(f"/series/{series_id}/slices/99")
    assert missing.status_code == 400
    assert missing.json()["code"] == "out_of_bounds"


def test_segmentation_post_get_round_trip(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    doc = json.loads(json.dumps(segmentation_to_doc(series_id, bundle.ground_truth)))
    resp = client.post(f"/series/{series_id}/segmentations", content=json.dumps(doc))
    assert resp.status_code == 201
    version = resp.json()["version"]
    assert version == 1

    got = client.get(f"/series/{series_id}/segmentations/{version}").json()
    assert got["rois"] == doc["rois"]  # bit-exact RLE round trip
    assert got["grid"] == doc["grid"]
    assert got["version"] == 1

    versions = client.get(f"/series/{series_id}/segmentations").json()["versions"]
    assert [v["version"] for v in versions] == [1]


def test_segmentation_grid_mismatch_conflict(client):
    meta, _ = upload(client, size=12)
    other = generate_phantom(sphere_phantom_spec("other", size=10))
    doc = segmentation_to_doc(meta["series_id"], other.ground_truth)
    resp = client.post(f"/series/{meta['series_id']}/segmentations",
                       content=json.dumps(doc))
    assert resp.status_code == 409
    assert resp.json()["code"] == "grid_mismatch"


def test_edits_endpoint_paints_single_voxel(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    doc = segmentation_to_doc(series_id, bundle.ground_truth)
    client.post(f"/series/{series_id}/segmentations", content=json.dumps(doc))

    before = client.get(f"/series/{series_id}/segmentations/1").json()
    resp = client.post(f"/series/{series_id}/segmentations/1/edits", json={
        "ops": [{"roi_number": 1, "center": [0.0, 0.0, 0.0], "radius": 0.0,
                 "shape": "sphere3d", "mode": "paint"}]})
    assert resp.status_code == 201
    body = resp.json()
    assert body["version"] == 2 and body["parent_version"] == 1

    after = client.get(f"/series/{series_id}/segmentations/2").json()
    runs_before = before["rois"][0]["rle"]
    runs_after = after["rois"][0]["rle"]
    assert sum(runs_before[1::2]) + 1 == sum(runs_after[1::2])  # exactly one new voxel
    assert after["provenance"]["source"] == "edited"

    # paint + erase at the same spot -> mask unchanged inside the ball
    resp = client.post(f"/series/{series_id}/segmentations/1/edits", json={
        "ops": [{"roi_number": 1, "center": [3.0, 3.0, 3.0], "radius": 1.5, "mode": "paint"},
                {"roi_number": 1, "center": [3.0, 3.0, 3.0], "radius": 1.5, "mode": "erase"}]})
    v = resp.json()["version"]
    reverted = client.get(f"/series/{series_id}/segmentations/{v}").json()
    # The ball region is clear now; outside it nothing changed.  gt sphere and
    # the ball don't overlap, so the mask is bit-identical.
    assert reverted["rois"][0]["rle"] == runs_before


def test_edit_on_unknown_roi_404(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    doc = segmentation_to_doc(series_id, bundle.ground_truth)
    client.post(f"/series/{series_id}/segmentations", content=json.dumps(doc))
    resp = client.post(f"/series/{series_id}/segmentations/1/edits", json={
        "ops": [{"roi_number": 9, "center": [0, 0, 0], "radius": 1.0}]})
    assert resp.status_code == 404
    assert resp.json()["code"] == "not_found"


def test_evaluate_endpoint(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    doc = segmentation_to_doc(series_id, bundle.ground_truth)
    client.post(f"/series/{series_id}/segmentations", content=json.dumps(doc))
    client.post(f"/series/{series_id}/segmentations", content=json.dumps(doc))

    resp = client.post("/evaluate", json={"series_id": series_id,
                                          "pred_version": 1, "gt_version": 2})
    assert resp.status_code == 200
    report = resp.json()
    assert report["mean_dice"] == 1.0
    assert report["entries"][0]["dice"] == 1.0
    assert report["discrepancy_version"] == 3
    assert report["report_id"]

    disc = client.get(f"/series/{series_id}/segmentations/3").json()
    assert disc["rois"][0]["name"] == "lesion-discrepancy"
    assert disc["provenance"]["source"] == "derived"
    # identical versions -> empty discrepancy mask: single zero-run
    assert disc["rois"][0]["rle"] == [12 * 12 * 12]


def test_models_and_jobs_flow(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    resp = client.post("/models", json=threshold_manifest())
    assert resp.status_code == 201
    model_id = resp.json()["model_id"]
    assert client.get("/models").json()["models"][0]["model_id"] == model_id

    dup = client.post("/models", json=threshold_manifest())
    assert dup.status_code == 409

    resp = client.post("/jobs", json={"model_id": model_id, "series_id": series_id},
                       headers={"Idempotency-Key": "run-1"})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]
    again = client.post("/jobs", json={"model_id": model_id, "series_id": series_id},
                        headers={"Idempotency-Key": "run-1"})
    assert again.json()["job_id"] == job_id

    job = wait_job(client, job_id)
    assert job["state"] == "Completed", job
    pred_version = job["result_version"]

    # Evaluate against ground truth uploaded as a segmentation.
    doc = segmentation_to_doc(series_id, bundle.ground_truth)
    gt_version = client.post(f"/series/{series_id}/segmentations",
                             content=json.dumps(doc)).json()["version"]
    report = client.post("/evaluate", json={
        "series_id": series_id, "pred_version": pred_version,
        "gt_version": gt_version}).json()
    assert report["mean_dice"] == 1.0


def test_export_endpoint_downloads_zip(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    doc = segmentation_to_doc(series_id, bundle.ground_truth)
    v1 = client.post(f"/series/{series_id}/segmentations",
                     content=json.dumps(doc)).json()["version"]
    v2 = client.post(f"/series/{series_id}/segmentations",
                     content=json.dumps(doc)).json()["version"]
    resp = client.post("/export", json={"series_id": series_id,
                                        "pred_version": v1, "corrected_version": v2})
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "application/zip"
    with zipfile.ZipFile(io.BytesIO(resp.content)) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        assert not any(n.startswith("images/") for n in zf.namelist())
    assert manifest["dice_before"] == 1.0


def test_delete_series_removes_everything(client):
    meta, bundle = upload(client, size=12)
    series_id = meta["series_id"]
    doc = segmentation_to_doc(series_id, bundle.ground_truth)
    client.post(f"/series/{series_id}/segmentations", content=json.dumps(doc))
    resp = client.delete(f"/series/{series_id}")
    assert resp.status_code == 200
    assert resp.json()["removed_blobs"]
    for path in (f"/series/{series_id}", f"/series/{series_id}/segmentations/1",
                 f"/series/{series_id}/slices/0"):
        r = client.get(path)
        assert r.status_code == 404
        assert r.json()["code"] == "not_found"
    assert client.get("/studies").json()["studies"] == []


def test_error_body_shape_for_unknown_series(client):
    resp = client.get("/series/nope")
    assert resp.status_code == 404
    body = resp.json()
    assert set(body) == {"code", "message", "detail"}
    assert body["code"] == "not_found"


def test_upload_rejects_non_dicom(client):
    resp = client.post("/studies", files=[("files", ("x.txt", b"not dicom", "text/plain"))])
    assert resp.status_code == 400
    assert resp.json()["code"] == "parse"


def test_upload_size_limit(tmp_path):
    config = ApiConfig(data_dir=str(tmp_path / "data"), executor="mock", max_upload_mb=1)
    with TestClient(create_app(config)) as client:
        big = b"\x00" * (2 * 1024 * 1024)
        resp = client.post("/studies", files=[("files", ("big.dcm", big, "application/dicom"))])
        assert resp.status_code == 400
        assert "limit" in resp.json()["message"]


def test_serve_rejects_port_in_use(tmp_path):
    import socket

    from segstudio.errors import StartupError
    from segstudio.server import serve

    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        sock.listen(1)
        port = sock.getsockname()[1]
        config = ApiConfig(port=port, data_dir=str(tmp_path / "data"), executor="mock")
        with pytest.raises(StartupError):
            serve(config)
