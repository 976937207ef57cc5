import json
import socket
import threading
import time

import pytest

from simscope import protocol
from simscope.config import build_runtime, load_config
from simscope.errors import ModelClientError, OrchestratorError
from simscope.evaluator import CachingModelClient
from simscope.orchestrator import (
    Orchestrator,
    ThroughputMeter,
    dry_run_count,
    run_experiment,
)
from simscope.runio import canonical_log, load_records
from simscope.worker import Worker, start_local_workers

from conftest import write_obj
from simscope.demo import CUBE_OBJ, demo_config
import yaml
import os


def small_config(tmp_path, meshes=1, envs=1, yaw_count=3, textures=2,
                 seed=11, **overrides):
    """A scaled-down experiment written to disk; grid size =
    yaw_count x (textures + original)."""
    target = tmp_path / "exp"
    asset_dir = target / "assets"
    asset_dir.mkdir(parents=True, exist_ok=True)
    config = demo_config()
    config["experiment"]["seed"] = seed
    config["render"]["resolution"] = [32, 32]
    config["render"]["save_buffers"] = []
    config["assets"]["meshes"] = []
    for i in range(meshes):
        name = f"cube{i}"
        (asset_dir / f"{name}.obj").write_text(CUBE_OBJ)
        config["assets"]["meshes"].append({
            "path": f"assets/{name}.obj", "name": name,
            "labels": ["red"], "texture": "red",
        })
    config["assets"]["environments"] = [
        {"name": f"env{i}", "color": [0.1 * (i + 1)] * 3, "ambient_scale": 1.0}
        for i in range(envs)
    ]
    swap_values = ["original"] + ["green", "blue"][: textures - 1] \
        if textures > 1 else ["original"]
    config["controls"] = [
        {"name": "orientation",
         "params": {"yaw": [-0.8, 0.8], "pitch": {"fixed": 0.0},
                    "roll": {"fixed": 0.0}}},
        {"name": "texture_swap", "params": {"texture": {"values": swap_values}}},
    ]
    config["policy"] = {"name": "grid",
                        "params": {"counts": {"orientation.yaw": yaw_count}}}
    for key, value in overrides.items():
        config[key].update(value)
    path = target / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return str(path)


def run_small(tmp_path, run_name="run", workers=2, config_path=None,
              runtime=None, kill_after_accepts=None, **kwargs):
    config_path = config_path or small_config(tmp_path)
    runtime = runtime or build_runtime(load_config(config_path))
    run_dir = str(tmp_path / run_name)
    manifest = run_experiment(runtime, run_dir, local_workers=workers,
                              kill_after_accepts=kill_after_accepts, **kwargs)
    return runtime, run_dir, manifest


class TestThroughputMeter:
    def test_ten_completions_in_two_second_window(self):
        now = [0.0]
        meter = ThroughputMeter(window_s=2.0, clock=lambda: now[0])
        for i in range(10):
            now[0] = 0.1 * i
            meter.record()
        now[0] = 1.5
        assert meter.rate() == 10 / 2.0

    def test_empty_window_zero(self):
        meter = ThroughputMeter(window_s=2.0, clock=lambda: 100.0)
        assert meter.rate() == 0.0

    def test_window_prunes_old_events(self):
        now = [0.0]
        meter = ThroughputMeter(window_s=1.0, clock=lambda: now[0])
        meter.record()
        now[0] = 5.0
        assert meter.rate() == 0.0


class TestRunBasics:
    def test_grid_six_records_ids_zero_to_five(self, tmp_path):
        _, run_dir, manifest = run_small(tmp_path, workers=1)
        records = load_records(run_dir)
        assert manifest.scheduled == 6
        assert sorted(r["id"] for r in records) == list(range(6))

    def test_six_instances_at_most_five_active(self, tmp_path):
        config_path = small_config(tmp_path, meshes=2, envs=3, yaw_count=1,
                                   textures=1)
        runtime = build_runtime(load_config(config_path))
        assert len(runtime.instance_pairs) == 6
        _, _, manifest = run_small(tmp_path, config_path=config_path,
                                   runtime=runtime, workers=2)
        assert len(manifest.instances) == 6
        assert manifest.stats["max_active_instances"] <= 5
        assert manifest.completed == 6

    def test_slot_bound_never_exceeded(self, tmp_path):
        config_path = small_config(tmp_path, yaw_count=10, textures=1)
        runtime = build_runtime(load_config(config_path))
        run_dir = str(tmp_path / "run")
        orchestrator = Orchestrator(runtime, run_dir)
        address = orchestrator.start()
        worker = Worker(address, runtime=runtime, slots=2, name="w")
        thread = threading.Thread(target=worker.run, daemon=True)
        thread.start()
        manifest = orchestrator.wait()
        assert manifest.completed == 10
        (worker_stats,) = manifest.workers
        assert worker_stats["slots"] == 2
        assert worker_stats["max_in_flight"] <= 2

    def test_dry_run_matches_completed_count(self, tmp_path):
        config_path = small_config(tmp_path, meshes=2, envs=2, yaw_count=3,
                                   textures=2)
        runtime = build_runtime(load_config(config_path))
        predicted = dry_run_count(runtime)
        _, _, manifest = run_small(tmp_path, config_path=config_path,
                                   runtime=runtime)
        assert predicted == manifest.completed == 24

    def test_manifest_totals_consistent(self, tmp_path):
        _, _, manifest = run_small(tmp_path)
        manifest.validate_totals()
        assert manifest.pending == 0
        assert manifest.config_hash

    def test_zero_workers_startup_error(self, tmp_path):
        runtime = build_runtime(load_config(small_config(tmp_path)))
        orchestrator = Orchestrator(runtime, str(tmp_path / "run"),
                                    registration_timeout_s=0.3)
        orchestrator.start()
        with pytest.raises(OrchestratorError, match="no worker registered"):
            orchestrator.wait()


class TestDeterminism:
    def test_log_set_invariant_to_worker_count(self, tmp_path):
        config_path = small_config(tmp_path, meshes=2, envs=1, yaw_count=3,
                                   textures=2)
        runtime_a = build_runtime(load_config(config_path))
        _, run_a, _ = run_small(tmp_path, "run_a", workers=1,
                                config_path=config_path, runtime=runtime_a)
        runtime_b = build_runtime(load_config(config_path))
        _, run_b, _ = run_small(tmp_path, "run_b", workers=3,
                                config_path=config_path, runtime=runtime_b)
        assert canonical_log(load_records(run_a)) == canonical_log(
            load_records(run_b))

    def test_log_is_json_lines_at_every_prefix(self, tmp_path):
        _, run_dir, _ = run_small(tmp_path)
        with open(os.path.join(run_dir, "results.jsonl")) as f:
            for line in f:
                json.loads(line)


class TestFaults:
    def test_worker_killed_after_accept_item_reassigned(self, tmp_path):
        # kamikaze worker dies right after accepting its 2nd item; the
        # survivor must finish everything, each id logged exactly once
        config_path = small_config(tmp_path, yaw_count=4, textures=2)
        runtime = build_runtime(load_config(config_path))
        _, run_dir, manifest = run_small(
            tmp_path, config_path=config_path, runtime=runtime, workers=2,
            kill_after_accepts=[2, None],
        )
        records = load_records(run_dir)
        assert manifest.completed == 8
        assert sorted(r["id"] for r in records) == list(range(8))

    def test_all_items_errored_when_model_always_fails(self, tmp_path):
        class AlwaysFails:
            vocabulary = ["red", "green", "blue"]

            def infer(self, image):
                raise ModelClientError("model down")

        config_path = small_config(tmp_path, yaw_count=2, textures=1)
        runtime = build_runtime(load_config(config_path))
        runtime.model_client = CachingModelClient(AlwaysFails())
        _, run_dir, manifest = run_small(tmp_path, config_path=config_path,
                                         runtime=runtime, workers=1,
                                         retry_limit=1)
        assert manifest.errored == 2 and manifest.completed == 0
        errored = load_records(run_dir, statuses=("errored",))
        assert len(errored) == 2
        assert all(r["error"]["class"] == "model_client" for r in errored)
        assert all(r["error"]["attempts"] == 2 for r in errored)
        assert manifest.exit_code == 2

    def test_exactly_once_under_scripted_kills(self, tmp_path):
        # five kamikaze workers with staggered deterministic kill points
        # plus one survivor; every configuration id appears exactly once
        config_path = small_config(tmp_path, meshes=2, yaw_count=3,
                                   textures=2, seed=3)
        for repetition in range(3):
            runtime = build_runtime(load_config(config_path))
            run_dir = str(tmp_path / f"rep{repetition}")
            manifest = run_experiment(
                runtime, run_dir, local_workers=6,
                kill_after_accepts=[1, 2, 3, 4, 5, None],
                retry_limit=6,
            )
            ids = sorted(r["id"] for r in load_records(run_dir))
            assert ids == list(range(12)), f"repetition {repetition}"
            assert manifest.errored == 0


class TestWireBehaviors:
    def _register_raw_worker(self, address, slots=1, capabilities=None):
        sock = socket.create_connection(address)
        protocol.send_message(sock, {
            "type": protocol.REGISTER, "worker": "raw", "slots": slots,
            "capabilities": capabilities if capabilities is not None
            else {"wildcard": True},
        })
        return sock

    def test_duplicate_response_discarded(self, tmp_path):
        config_path = small_config(tmp_path, yaw_count=2, textures=1)
        runtime = build_runtime(load_config(config_path))
        orchestrator = Orchestrator(runtime, str(tmp_path / "run"))
        address = orchestrator.start()
        sock = self._register_raw_worker(address)

        def respond(item_id):
            return {
                "type": protocol.RENDER_RESPONSE, "id": item_id,
                "status": "ok", "is_correct": True,
                "prediction": {"task": "raw"}, "timing": {},
            }

        first = protocol.recv_message(sock)
        assert first["type"] == protocol.RENDER_REQUEST
        protocol.send_message(sock, respond(first["item"]["id"]))
        # duplicate lands while the run is still live (item 2 outstanding)
        protocol.send_message(sock, respond(first["item"]["id"]))
        second = protocol.recv_message(sock)
        protocol.send_message(sock, respond(second["item"]["id"]))
        manifest = orchestrator.wait()
        assert manifest.completed == 2
        assert manifest.stats["duplicate_responses"] >= 1
        records = load_records(str(tmp_path / "run"))
        assert sorted(r["id"] for r in records) == [0, 1]
        sock.close()

    def test_capability_mismatch_rejected_and_run_continues(self, tmp_path):
        config_path = small_config(tmp_path, yaw_count=1, textures=1)
        runtime = build_runtime(load_config(config_path))
        orchestrator = Orchestrator(runtime, str(tmp_path / "run"))
        address = orchestrator.start()
        bad = self._register_raw_worker(
            address, capabilities={"controls": ["orientation"],
                                   "modalities": ["rgb"]},
        )  # missing texture_swap
        message = protocol.recv_message(bad)
        assert message["type"] == protocol.ERROR
        assert "texture_swap" in message["error"]
        bad.close()
        start_local_workers(address, runtime, 1)
        manifest = orchestrator.wait()
        assert manifest.completed == 1

    def test_heartbeat_eviction_clock_controlled(self, tmp_path):
        config_path = small_config(tmp_path, yaw_count=2, textures=1)
        runtime = build_runtime(load_config(config_path))
        now = [100.0]
        orchestrator = Orchestrator(runtime, str(tmp_path / "run"),
                                    heartbeat_s=2.0, clock=lambda: now[0])
        address = orchestrator.start()
        silent = self._register_raw_worker(address)
        protocol.recv_message(silent)  # accept one item, never respond
        deadline = time.time() + 5
        while not orchestrator.status()["in_flight"] and time.time() < deadline:
            time.sleep(0.01)
        # within 3 heartbeats: still registered
        now[0] = 100.0 + 2.0 * 2.9
        assert orchestrator.check_worker_timeouts() == []
        # silent past 3 heartbeats: evicted, item requeued
        now[0] = 100.0 + 2.0 * 3.1
        evicted = orchestrator.check_worker_timeouts()
        assert len(evicted) == 1
        start_local_workers(address, runtime, 1,
                            heartbeat_interval=0.2)
        manifest = orchestrator.wait()
        assert manifest.completed == 2
        silent.close()

    def test_live_status_endpoint(self, tmp_path):
        runtime = build_runtime(load_config(small_config(tmp_path)))
        orchestrator = Orchestrator(runtime, str(tmp_path / "run"))
        address = orchestrator.start()
        status = orchestrator.status()
        assert status["completed"] == 0 and status["workers"] == 0
        start_local_workers(address, runtime, 1)
        orchestrator.wait()
        assert orchestrator.status()["completed"] == 6


class TestDummyWorkers:
    def test_dummy_run_flags_records(self, tmp_path):
        runtime = build_runtime(load_config(small_config(tmp_path)))
        run_dir = str(tmp_path / "dummy_run")
        manifest = run_experiment(runtime, run_dir, local_workers=1,
                                  dummy=True, dummy_latency=0.0)
        records = load_records(run_dir)
        assert manifest.completed == 6
        assert all(r.get("buffers_zeroed") for r in records)
        assert all(r["prediction"]["task"] == "dummy" for r in records)


class TestPolicyContract:
    def test_duplicate_proposal_id_is_contract_violation(self, tmp_path):
        from simscope.policy import Policy, PolicyProposal, register_policy

        class BrokenPolicy(Policy):
            def __init__(self, space, params, instance_seed):
                self.calls = 0

            def next_batch(self, history):
                self.calls += 1
                if self.calls > 2:
                    return []
                return [PolicyProposal(0, (0.0, 0))]  # id 0 reissued

        register_policy("broken_dup", BrokenPolicy)
        config_path = small_config(tmp_path, yaw_count=1, textures=1)
        runtime = build_runtime(load_config(config_path))
        runtime.policy_name = "broken_dup"
        runtime.policy_params = {}
        with pytest.raises(OrchestratorError, match="reissued"):
            run_experiment(runtime, str(tmp_path / "run"), local_workers=1)
