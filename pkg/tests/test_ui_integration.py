"""Secondary acceptance: the built web UI client against the real server.

Runs the compiled TypeScript client modules under node, performing a
scripted radius-0 click plus ten scripted strokes, and verifies the
client's local preview is bit-identical to the masks the server stores.
Skipped when node or the built frontend is unavailable.
"""

import json
import shutil
import subprocess
from pathlib import Path

import pytest

from segstudio.exchange import segmentation_to_doc
from segstudio.mask import rle_encode
from segstudio.phantom import generate_phantom
from segstudio.server import ApiConfig, build_runtime

from .conftest import sphere_phantom_spec
from .test_acceptance import ServerThread, free_port

FRONTEND = Path(__file__).resolve().parent.parent / "frontend"
DRIVER = FRONTEND / "scripts" / "scripted-click.mjs"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not (FRONTEND / "dist" / "api.js").exists(),
    reason="node or built frontend (frontend/dist) not available")


def test_scripted_ui_session_matches_server(tmp_path):
    from segstudio.dicomio import parse_series

    config = ApiConfig(port=free_port(), data_dir=str(tmp_path / "data"),
                       executor="mock", max_jobs=4)
    store, orchestrator = build_runtime(config)
    with ServerThread(config, store=store, orchestrator=orchestrator) as server:
        bundle = generate_phantom(sphere_phantom_spec("ui-session", size=12))
        series = parse_series([d for _, d in bundle.files])
        store.put_series(series)
        version = store.put_segmentation(series.series_id, bundle.ground_truth)

        proc = subprocess.run(
            ["node", str(DRIVER), server.base_url, series.series_id, str(version)],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        result = json.loads(proc.stdout)

        # Radius-0 click added exactly one voxel.
        assert result["clickDelta"] == 1
        # Preview raster equals the fetched server mask for all 10 strokes.
        assert len(result["strokes"]) == 10
        assert all(s["previewEqualsServer"] for s in result["strokes"])

        # And the client's final RLE equals the stored version's RLE.
        final = store.get_segmentation(series.series_id, result["finalVersion"])
        stored_runs = list(rle_encode(final.rois[0][1]).runs)
        assert result["finalRle"] == stored_runs
        # Server-side lineage reflects every scripted stroke (click + 10).
        assert result["finalVersion"] == version + 11
    store.close()


def test_server_serves_built_ui(tmp_path):
    from fastapi.testclient import TestClient
    from segstudio.server import create_app

    config = ApiConfig(data_dir=str(tmp_path / "data"), executor="mock",
                       ui_dir=str(FRONTEND / "dist"))
    with TestClient(create_app(config)) as client:
        resp = client.get("/ui/")
        assert resp.status_code == 200
        assert "segstudio" in resp.text
        assert client.get("/ui/main.js").status_code == 200
        assert client.get("/ui/styles.css").status_code == 200
