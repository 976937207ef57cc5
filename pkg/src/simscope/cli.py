"""Command-line entry point: run experiments, start workers, run analyses,
and serve the dashboard API.

Exit codes for ``run``: 0 when the run completed cleanly, 2 on partial
completion (errored items), 3 on startup failure (bad config, no workers).
Environment overrides: SIMSCOPE_BIND (orchestrator bind address) and
SIMSCOPE_OUTPUT_DIR (run output parent directory).
"""

from __future__ import annotations

import os
import socket
import sys

import click

from .config import build_runtime, load_config
from .errors import AnalysisError, ConfigError, OrchestratorError, SimscopeError
from .orchestrator import Orchestrator, dry_run_count
from .worker import DUMMY_LATENCY_S, Worker, start_local_workers


def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


@click.group()
def main():
    """Diagnose vision-model failure modes with simulated scenes."""


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--local-workers", default=0, show_default=True,
              help="Spawn N in-process workers (desk-scale runs).")
@click.option("--dry-run", is_flag=True,
              help="Print the proposal count and render nothing.")
@click.option("--bind", default=None, help="host:port for the work server "
              "(default 127.0.0.1:0; env SIMSCOPE_BIND).")
@click.option("--output", default=None,
              help="Run output directory (env SIMSCOPE_OUTPUT_DIR).")
def run(config_path, local_workers, dry_run, bind, output):
    """Run a full experiment from CONFIG_PATH."""
    try:
        config = load_config(config_path)
        runtime = build_runtime(config)
    except (ConfigError, SimscopeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(3)

    if dry_run:
        count = dry_run_count(runtime)
        click.echo(f"dry run: {count} proposals over "
                   f"{len(runtime.instance_pairs)} policy instances")
        sys.exit(0)

    bind = bind or os.environ.get("SIMSCOPE_BIND") or "127.0.0.1:0"
    out_base = output or os.environ.get("SIMSCOPE_OUTPUT_DIR") \
        or runtime.orchestrator_settings.get("output_dir") or "runs"
    run_dir = out_base if output or runtime.orchestrator_settings.get(
        "output_dir") else os.path.join(out_base, runtime.name)

    settings = runtime.orchestrator_settings
    orchestrator = Orchestrator(
        runtime, run_dir, bind=_parse_address(bind),
        max_active_instances=settings["max_active_instances"],
        retry_limit=settings["retry_limit"],
        heartbeat_s=settings["heartbeat_s"],
        registration_timeout_s=settings["registration_timeout_s"],
    )
    try:
        address = orchestrator.start()
        click.echo(f"orchestrator listening on {address[0]}:{address[1]}")
        if local_workers:
            start_local_workers(address, runtime, local_workers,
                                heartbeat_interval=settings["heartbeat_s"])
        manifest = orchestrator.wait()
    except OrchestratorError as exc:
        click.echo(f"startup failure: {exc}", err=True)
        sys.exit(3)
    click.echo(
        f"run complete: {manifest.completed} completed, "
        f"{manifest.errored} errored "
        f"({manifest.throughput['average_fps']:.1f} fps avg, "
        f"{manifest.throughput['peak_fps']:.1f} peak); log in {run_dir}"
    )
    sys.exit(manifest.exit_code)


@main.command()
@click.option("--connect", required=True, help="Orchestrator host:port.")
@click.option("--config", "config_path", default=None,
              help="Experiment config (required unless --dummy).")
@click.option("--dummy", is_flag=True,
              help="Skip render+inference; for scheduling benchmarks.")
@click.option("--dummy-latency", default=DUMMY_LATENCY_S, show_default=True,
              help="Simulated per-item service time for dummy mode (s).")
@click.option("--slots", default=1, show_default=True,
              help="Max in-flight items this worker accepts.")
@click.option("--name", default=None, help="Worker name for the logs.")
@click.option("--kill-after", default=None, type=int, hidden=True,
              help="Fault injection: die after accepting N items.")
def worker(connect, config_path, dummy, dummy_latency, slots, name, kill_after):
    """Start a render/inference worker and process items until DONE."""
    runtime = None
    if not dummy:
        if not config_path:
            click.echo("worker: --config is required unless --dummy", err=True)
            sys.exit(3)
        try:
            runtime = build_runtime(load_config(config_path))
        except (ConfigError, SimscopeError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(3)
    try:
        instance = Worker(
            _parse_address(connect), runtime=runtime, name=name, slots=slots,
            dummy=dummy, dummy_latency=dummy_latency,
            kill_after_accepts=kill_after,
        )
        processed = instance.run()
    except SimscopeError as exc:
        click.echo(f"worker error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"worker done: {processed} items processed")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--report", "report_spec", required=True,
              help="Report name with args, e.g. accuracy_by=mesh or "
                   "matrix=orientation.yaw,environment.")
@click.option("--out", default=None, help="Write JSON report here "
              "(default <run>/reports/<name>.json).")
@click.option("--csv", "csv_path", default=None,
              help="Also export tabular reports as CSV.")
def analyze(run_dir, report_spec, out, csv_path):
    """Run a named analysis over a finished run directory."""
    from .reports import export_csv, run_report, write_report_json

    try:
        report = run_report(run_dir, report_spec)
    except AnalysisError as exc:
        click.echo(f"analysis error: {exc}", err=True)
        sys.exit(1)
    if out is None:
        reports_dir = os.path.join(run_dir, "reports")
        os.makedirs(reports_dir, exist_ok=True)
        out = os.path.join(reports_dir, f"{report['report']}.json")
    write_report_json(report, out)
    click.echo(f"report written to {out}")
    if csv_path:
        export_csv(report, csv_path)
        click.echo(f"csv written to {csv_path}")


@main.command()
@click.option("--run-dir", default=None, help="Serve a single run directory.")
@click.option("--data-dir", default=None,
              help="Serve every run directory under this directory.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True)
@click.option("--ui-dir", default=None,
              help="Also serve a built dashboard UI from this directory.")
def serve(run_dir, data_dir, host, port, ui_dir):
    """Serve the read-only dashboard API over run outputs."""
    import uvicorn

    from .dashboard import create_app

    target = run_dir or data_dir
    if not target:
        click.echo("serve: pass --run-dir or --data-dir", err=True)
        sys.exit(3)
    app = create_app(target, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.argument("target_dir", type=click.Path())
def demo(target_dir):
    """Materialize the built-in demo experiment (assets + config)."""
    from .demo import write_demo

    config_path = write_demo(target_dir)
    click.echo(f"demo written; try: simscope run {config_path} --local-workers 2")


@main.command("render-server")
@click.option("--bind", default="127.0.0.1:0", show_default=True)
@click.option("--config", "config_path", required=True,
              help="Experiment config providing assets and controls.")
@click.option("--max-requests", default=None, type=int,
              help="Serve N requests then exit (for tests).")
def render_server(bind, config_path, max_requests):
    """Serve the built-in renderer behind the external-renderer protocol."""
    from .protocol import serve_render_requests

    try:
        runtime = build_runtime(load_config(config_path))
    except (ConfigError, SimscopeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(3)
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind(_parse_address(bind))
    listener.listen(1)
    address = listener.getsockname()
    click.echo(f"render server listening on {address[0]}:{address[1]}")
    serve_render_requests(listener, runtime.assets, runtime.registry,
                          max_requests=max_requests)


if __name__ == "__main__":
    main()
