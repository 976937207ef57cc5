import json
import os
import subprocess
import sys

import pytest
import yaml
from click.testing import CliRunner

from simscope.cli import main
from simscope.demo import write_demo
from simscope.runio import load_records


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def demo_cfg(tmp_path):
    return write_demo(str(tmp_path))


class TestRunCommand:
    def test_demo_run_produces_24_records(self, runner, demo_cfg, tmp_path):
        run_dir = str(tmp_path / "out")
        result = runner.invoke(main, ["run", demo_cfg, "--local-workers", "2",
                                      "--output", run_dir])
        assert result.exit_code == 0, result.output
        records = load_records(run_dir)
        assert len(records) == 24  # 2 meshes x 2 envs x (3 yaw x 2 textures)
        assert os.path.isfile(os.path.join(run_dir, "manifest.json"))

    def test_dry_run_counts_without_rendering(self, runner, demo_cfg, tmp_path):
        run_dir = str(tmp_path / "dry_out")
        result = runner.invoke(main, ["run", demo_cfg, "--dry-run",
                                      "--output", run_dir])
        assert result.exit_code == 0
        assert "24 proposals" in result.output
        assert not os.path.exists(os.path.join(run_dir, "results.jsonl"))

    def test_missing_mesh_file_exits_3(self, runner, demo_cfg, tmp_path):
        raw = yaml.safe_load(open(demo_cfg))
        raw["assets"]["meshes"][0]["path"] = "assets/nope.obj"
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump(raw))
        result = runner.invoke(main, ["run", str(bad)])
        assert result.exit_code == 3
        assert "nope.obj" in result.output

    def test_no_workers_exits_3(self, runner, demo_cfg, tmp_path):
        raw = yaml.safe_load(open(demo_cfg))
        raw["orchestrator"]["registration_timeout_s"] = 0.2
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(yaml.safe_dump(raw))
        result = runner.invoke(main, ["run", str(cfg), "--output",
                                      str(tmp_path / "out")])
        assert result.exit_code == 3
        assert "startup failure" in result.output


class TestWorkerCommand:
    def test_connection_refused_exits_3(self, runner):
        result = runner.invoke(main, ["worker", "--connect", "127.0.0.1:1",
                                      "--dummy"])
        assert result.exit_code == 3
        assert "cannot reach" in result.output

    def test_worker_requires_config_unless_dummy(self, runner):
        result = runner.invoke(main, ["worker", "--connect", "127.0.0.1:1"])
        assert result.exit_code == 3
        assert "--config" in result.output

    def test_subprocess_workers_complete_run(self, demo_cfg, tmp_path):
        # the networked path end to end: orchestrator in this process,
        # two real worker subprocesses via the CLI
        from simscope.config import build_runtime, load_config
        from simscope.orchestrator import Orchestrator

        runtime = build_runtime(load_config(demo_cfg))
        run_dir = str(tmp_path / "net_run")
        orchestrator = Orchestrator(runtime, run_dir,
                                    registration_timeout_s=30)
        host, port = orchestrator.start()
        workers = [
            subprocess.Popen(
                [sys.executable, "-m", "simscope.cli", "worker",
                 "--connect", f"{host}:{port}", "--config", demo_cfg,
                 "--name", f"sub{i}"],
                stdout=subprocess.PIPE, stderr=subprocess.PIPE,
            )
            for i in range(2)
        ]
        manifest = orchestrator.wait()
        for proc in workers:
            proc.wait(timeout=30)
        assert manifest.completed == 24
        # both workers actually contributed (fault-free union covers all ids)
        contributions = {w["id"]: w["completed"] for w in manifest.workers}
        assert sum(contributions.values()) == 24
        assert len(contributions) == 2


class TestAnalyzeCommand:
    def test_accuracy_by_mesh_two_rows(self, runner, demo_run):
        result = runner.invoke(main, ["analyze", demo_run, "--report",
                                      "accuracy_by=mesh"])
        assert result.exit_code == 0, result.output
        report_path = os.path.join(demo_run, "reports", "accuracy_by.json")
        report = json.load(open(report_path))
        assert len(report["data"]) == 2
        assert {row["group"]["mesh"] for row in report["data"]} == {
            "cube_red", "cube_blue"}

    def test_unknown_report_lists_available(self, runner, demo_run):
        result = runner.invoke(main, ["analyze", demo_run, "--report",
                                      "zmagic"])
        assert result.exit_code == 1
        assert "accuracy_by" in result.output and "matrix" in result.output

    def test_uv_heatmap_without_buffers_actionable_error(self, runner,
                                                         tmp_path, demo_cfg):
        raw = yaml.safe_load(open(demo_cfg))
        raw["render"]["save_buffers"] = []
        raw["policy"]["params"]["counts"]["orientation.yaw"] = 1
        cfg = tmp_path / "nobuf.yaml"
        cfg.write_text(yaml.safe_dump(raw))
        run_dir = str(tmp_path / "nobuf_run")
        assert runner.invoke(main, ["run", str(cfg), "--local-workers", "1",
                                    "--output", run_dir]).exit_code == 0
        result = runner.invoke(main, ["analyze", run_dir, "--report",
                                      "uv_heatmap"])
        assert result.exit_code == 1
        assert "save_buffers" in result.output

    def test_uv_heatmap_on_demo_run(self, runner, demo_run, tmp_path):
        out = str(tmp_path / "heatmap.json")
        result = runner.invoke(main, ["analyze", demo_run, "--report",
                                      "uv_heatmap=16", "--out", out])
        assert result.exit_code == 0, result.output
        report = json.load(open(out))
        assert report["data"]["grid"] == 16
        assert report["data"]["skipped"] == 0

    def test_matrix_csv_export(self, runner, demo_run, tmp_path):
        csv_path = str(tmp_path / "matrix.csv")
        result = runner.invoke(main, [
            "analyze", demo_run, "--report",
            "matrix=orientation.yaw,texture_swap.texture", "--csv", csv_path,
        ])
        assert result.exit_code == 0, result.output
        lines = open(csv_path).read().strip().splitlines()
        assert len(lines) == 3  # header + 2 texture rows

    def test_boxplot_report(self, runner, demo_run, tmp_path):
        out = str(tmp_path / "box.json")
        result = runner.invoke(main, ["analyze", demo_run, "--report",
                                      "boxplot=environment,mesh", "--out", out])
        assert result.exit_code == 0, result.output
        report = json.load(open(out))
        assert len(report["data"]) == 2

    def test_background_complexity_report(self, runner, demo_run, tmp_path):
        out = str(tmp_path / "bg.json")
        result = runner.invoke(main, ["analyze", demo_run, "--report",
                                      "background_complexity", "--out", out])
        assert result.exit_code == 0, result.output
        report = json.load(open(out))
        rows = {r["environment"]: r for r in report["data"]}
        assert rows["studio_gray"]["complexity"] == 0.0  # flat color


class TestDemoCommand:
    def test_demo_materializes_assets(self, runner, tmp_path):
        target = str(tmp_path / "scaffold")
        result = runner.invoke(main, ["demo", target])
        assert result.exit_code == 0
        assert os.path.isfile(os.path.join(target, "demo.yaml"))
        assert os.path.isfile(os.path.join(target, "assets", "cube_red.obj"))


class TestLiquidWorkflow:
    def test_liquid_fill_experiment_end_to_end(self, runner, tmp_path):
        # vessel mesh with an interior-opening annotation, liquid mixture
        # grid restricted to a fixed top-down viewpoint, then the mixture
        # summary and consistency reports over the log
        from simscope.demo import CUBE_OBJ

        asset_dir = tmp_path / "assets"
        asset_dir.mkdir()
        (asset_dir / "vessel.obj").write_text(CUBE_OBJ)
        config = {
            "experiment": {"name": "liquid", "seed": 4},
            "assets": {
                "meshes": [{
                    "path": "assets/vessel.obj", "name": "vessel",
                    "labels": ["red"], "texture": "red",
                    "opening": {"cx": 0.0, "cz": 0.0, "y_bottom": -0.3,
                                "y_top": 0.45, "radius": 0.35},
                }],
                "environments": [{"name": "studio", "color": [0.3, 0.3, 0.3],
                                  "ambient_scale": 1.5}],
                "textures": [{"name": "red", "color": [0.85, 0.08, 0.08]}],
            },
            "controls": [
                {"name": "orientation",
                 "params": {"yaw": [-0.6, 0.6], "pitch": {"fixed": 1.2},
                            "roll": {"fixed": 0.0}}},
                {"name": "liquid_fill",
                 "params": {"water": [0.0, 1.0], "milk": {"fixed": 0.0},
                            "coffee": [0.0, 1.0], "fill_level": {"fixed": 0.9}}},
            ],
            "policy": {"name": "grid", "params": {"counts": {
                "orientation.yaw": 3, "liquid_fill.water": 2,
                "liquid_fill.coffee": 2}}},
            "evaluator": {"task": "classification",
                          "model": {"kind": "toy_centroid", "classes": [
                              {"name": "red", "color": [0.4, 0.15, 0.15]},
                              {"name": "pale", "color": [0.45, 0.45, 0.45]},
                          ]}},
            "render": {"resolution": [48, 48], "save_buffers": []},
            "orchestrator": {},
        }
        cfg = tmp_path / "liquid.yaml"
        cfg.write_text(yaml.safe_dump(config, sort_keys=False))
        run_dir = str(tmp_path / "run")
        result = runner.invoke(main, ["run", str(cfg), "--local-workers", "2",
                                      "--output", run_dir])
        # grid = 3 yaw x 2 water x 2 coffee, minus nothing; the (0, 0)
        # water/coffee corner errors out (all-zero ratios are rejected)
        assert result.exit_code == 2, result.output
        ok = load_records(run_dir)
        errored = load_records(run_dir, statuses=("errored",))
        assert len(ok) == 9 and len(errored) == 3
        assert all("rejected" in r["error"]["message"] for r in errored)

        out = str(tmp_path / "simplex.json")
        result = runner.invoke(main, ["analyze", run_dir, "--report",
                                      "liquid_simplex", "--out", out])
        assert result.exit_code == 0, result.output
        simplex = json.load(open(out))["data"]
        assert len(simplex["mixtures"]) == 3  # water, coffee, 50/50
        for cls in simplex["classes"]:
            total = sum(simplex["normalized"][m][cls]
                        for m in simplex["mixtures"])
            assert total == pytest.approx(1.0)

        out = str(tmp_path / "consistency.json")
        result = runner.invoke(main, [
            "analyze", run_dir, "--report",
            "consistency=liquid_fill.water+liquid_fill.coffee", "--out", out,
        ])
        assert result.exit_code == 0, result.output
        consistency = json.load(open(out))["data"]
        assert consistency["eligible"] == 3  # one per yaw viewpoint
