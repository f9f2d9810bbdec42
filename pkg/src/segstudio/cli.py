"""Command line interface.

Every option has an env-var equivalent under the SEGSTUDIO_ prefix
(e.g. --port -> SEGSTUDIO_PORT).
"""

from __future__ import annotations

import json
import sys

import click

from . import __version__


@click.group()
@click.version_option(version=__version__, prog_name="segstudio")
def cli():
    """Medical image segmentation service and analysis toolkit."""


@cli.command()
@click.option("--port", default=8000, show_default=True, type=int,
              envvar="SEGSTUDIO_PORT")
@click.option("--host", default="127.0.0.1", show_default=True,
              envvar="SEGSTUDIO_HOST")
@click.option("--data-dir", default="./segstudio-data", show_default=True,
              type=click.Path(file_okay=False), envvar="SEGSTUDIO_DATA_DIR")
@click.option("--executor", default="local", show_default=True,
              type=click.Choice(["local", "mock"]), envvar="SEGSTUDIO_EXECUTOR")
@click.option("--max-jobs", default=16, show_default=True, type=int,
              envvar="SEGSTUDIO_MAX_JOBS",
              help="Bounded job queue size; further submissions get a busy error.")
@click.option("--token", default=None, envvar="SEGSTUDIO_TOKEN",
              help="Shared bearer token; unset disables auth.")
@click.option("--max-upload-mb", default=256, show_default=True, type=int,
              envvar="SEGSTUDIO_MAX_UPLOAD_MB")
@click.option("--ui-dir", default=None, type=click.Path(file_okay=False),
              envvar="SEGSTUDIO_UI_DIR", help="Static UI build to serve under /ui.")
@click.option("--model-command", default=None, envvar="SEGSTUDIO_MODEL_COMMAND",
              help="Command template for external models: {workspace} {input} {output} {image}.")
def serve(port, host, data_dir, executor, max_jobs, token, max_upload_mb, ui_dir,
          model_command):
    """Run the HTTP service."""
    from .errors import StartupError
    from .server import ApiConfig, serve as run_server

    config = ApiConfig(port=port, host=host, data_dir=data_dir, executor=executor,
                       max_jobs=max_jobs, token=token, max_upload_mb=max_upload_mb,
                       ui_dir=ui_dir, command_template=model_command)
    try:
        run_server(config)
    except StartupError as exc:
        raise click.ClickException(str(exc)) from exc


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--label", default="demo", show_default=True)
@click.option("--size", default=32, show_default=True, type=int,
              help="Cubic grid edge length in voxels (1 mm isotropic).")
@click.option("--radius", default=8.0, show_default=True, type=float)
@click.option("--intensity", default=1000, show_default=True, type=int)
@click.option("--roi-name", default="lesion", show_default=True)
def phantom(out_dir, label, size, radius, intensity, roi_name):
    """Write a sphere phantom (DICOM slices + manifest) for demos and tests."""
    from .geometry import identity_grid
    from .phantom import PhantomSpec, Sphere, write_phantom

    grid = identity_grid(size, size, size)
    c = (size - 1) / 2.0
    spec = PhantomSpec(label=label, grid=grid, background=0,
                       shapes=(Sphere(center=(c, c, c), radius=radius,
                                      intensity=intensity, roi_name=roi_name),))
    manifest = write_phantom(spec, out_dir)
    click.echo(f"wrote {len(manifest['files'])} slices + manifest.json to {out_dir}")
    click.echo(f"series_uid: {manifest['series_uid']}")


@cli.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--series", "series_id", required=True)
@click.option("--pred-version", required=True, type=int)
@click.option("--gt-version", required=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def report(data_dir, series_id, pred_version, gt_version, out_dir):
    """Evaluate two stored versions; write report.csv and figures."""
    from .analysis import evaluate
    from .report import render_report
    from .store import Store

    store = Store(data_dir)
    try:
        pred = store.get_segmentation(series_id, pred_version)
        gt = store.get_segmentation(series_id, gt_version)
        series = store.get_series(series_id)
        rep, discrepancy = evaluate(pred, gt)
        written = render_report(rep, out_dir, series=series, discrepancy=discrepancy)
    finally:
        store.close()
    click.echo(json.dumps({
        "mean_dice": rep.mean_dice,
        "matched": rep.matched_count,
        "unmatched": rep.unmatched_count,
        "files": [str(p) for p in written],
    }, indent=2))


@cli.command("verify-store")
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
def verify_store(data_dir):
    """Run the store integrity check (blob existence + checksums)."""
    from .store import Store

    store = Store(data_dir)
    try:
        result = store.verify_integrity()
    finally:
        store.close()
    click.echo(json.dumps(result, indent=2))
    if not result["ok"]:
        sys.exit(1)


def main():
    cli(auto_envvar_prefix="SEGSTUDIO")


if __name__ == "__main__":
    main()
