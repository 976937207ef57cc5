"""Worker process: registers with the orchestrator, pulls configurations,
renders them, runs inference, and ships the results back.

A dummy worker skips rendering and inference entirely (simulating a small
fixed per-item service time) so scheduling throughput can be benchmarked in
isolation. Fault injection (`kill_after_accepts`) makes a worker die
abruptly after accepting its nth item, for exactly-once delivery tests.
"""

from __future__ import annotations

import socket
import threading
import time

from . import protocol
from .controls import ControlInstantiation, apply_post_chain, compose
from .errors import (
    ControlError,
    ModelClientError,
    NotApplicableError,
    ProtocolError,
    RenderError,
    SimscopeError,
)
from .evaluator import (
    bind_configuration,
    evaluate_classification,
    evaluate_custom,
    evaluate_detection,
)
from .render import render
from .scene import default_scene

DUMMY_LATENCY_S = 0.005


class WorkerPipeline:
    """Scene composition -> render -> post chain -> evaluation for one item.
    Pure per item; safe to share across worker slots."""

    def __init__(self, runtime):
        self.runtime = runtime  # config.ExperimentRuntime
        # each pipeline owns its backend connection (remote backends are
        # stateful sockets; builtin rendering is None -> in-process)
        self.backend = runtime.make_render_backend()

    def process(self, item: dict) -> dict:
        rt = self.runtime
        timings = {}
        warnings: list[str] = []
        mesh = rt.assets.mesh(item["mesh"])
        env = rt.assets.environment(item["environment"])
        state = default_scene(mesh, env, fov=rt.fov,
                              resolution=tuple(item["resolution"]))
        rendered = [ControlInstantiation.from_json(e) for e in item["rendered"]]
        post = [ControlInstantiation.from_json(e) for e in item["post"]]
        state = compose(state, rendered, rt.registry, rt.assets)

        start = time.perf_counter()
        if self.backend is not None:
            output = self.backend.render(state)
        else:
            output = render(state, rt.assets)
        if post:
            output.rgb = apply_post_chain(
                output.rgb, post, rt.registry, rt.experiment_seed,
                item["id"], warnings,
            )
        timings["render_s"] = time.perf_counter() - start

        client = bind_configuration(rt.model_client, item["id"])
        start = time.perf_counter()
        try:
            if rt.task == "classification":
                result = evaluate_classification(output, client, mesh.label_set)
            elif rt.task == "detection":
                result = evaluate_detection(output, client, mesh.label_set,
                                            iou_threshold=rt.iou_threshold)
            else:
                result = evaluate_custom(rt.task, output, client)
        except NotApplicableError as exc:
            timings["infer_s"] = time.perf_counter() - start
            return {
                "status": "na",
                "reason": str(exc),
                "environment": state.environment,
                "timing": timings,
                "warnings": warnings,
            }
        timings["infer_s"] = time.perf_counter() - start

        response = {
            "status": "ok",
            "is_correct": result.is_correct,
            "prediction": result.summary(),
            "environment": state.environment,
            "timing": timings,
            "warnings": warnings,
        }
        if rt.save_buffers:
            encoded = {}
            wire = protocol.encode_render_output(output, modalities=rt.save_buffers,
                                                 rgb_encoding="png")
            encoded.update(wire["buffers"])
            response["buffers"] = encoded
        return response


class Worker:
    def __init__(self, address, runtime=None, name=None, slots=1, dummy=False,
                 dummy_latency=DUMMY_LATENCY_S, heartbeat_interval=2.0,
                 kill_after_accepts=None, connect_retries=3):
        if not dummy and runtime is None:
            raise SimscopeError("non-dummy workers need an experiment runtime")
        self.address = tuple(address)
        self.runtime = runtime
        self.name = name or f"worker-{id(self) & 0xFFFF:x}"
        self.slots = int(slots)
        self.dummy = dummy
        self.dummy_latency = float(dummy_latency)
        self.heartbeat_interval = float(heartbeat_interval)
        self.kill_after_accepts = kill_after_accepts
        self.connect_retries = connect_retries
        self.processed = 0
        self._accepted = 0
        self._sock = None
        self._send_lock = threading.Lock()
        self._stop_heartbeat = threading.Event()

    # -- connection ---------------------------------------------------------

    def _connect(self) -> socket.socket:
        delay = 0.2
        for attempt in range(self.connect_retries + 1):
            try:
                return socket.create_connection(self.address, timeout=30.0)
            except OSError:
                if attempt == self.connect_retries:
                    raise
                time.sleep(delay)
                delay *= 2

    def _capabilities(self) -> dict:
        if self.dummy:
            return {"wildcard": True, "dummy": True}
        return protocol.builtin_capabilities(
            [c.descriptor.name for c in self.runtime.registry]
        ) | {"dummy": False}

    def _send(self, message: dict) -> None:
        with self._send_lock:
            protocol.send_message(self._sock, message)

    def _heartbeat_loop(self) -> None:
        while not self._stop_heartbeat.wait(self.heartbeat_interval):
            try:
                self._send({"type": protocol.HEARTBEAT, "worker": self.name})
            except OSError:
                return

    # -- main loop ----------------------------------------------------------

    def run(self) -> int:
        """Process items until DONE; returns the number of items completed."""
        try:
            self._sock = self._connect()
        except OSError:
            raise SimscopeError(f"cannot reach orchestrator at {self.address}")
        pipeline = None if self.dummy else WorkerPipeline(self.runtime)
        heartbeat = threading.Thread(target=self._heartbeat_loop, daemon=True)
        try:
            self._send({
                "type": protocol.REGISTER,
                "worker": self.name,
                "slots": self.slots,
                "capabilities": self._capabilities(),
            })
            heartbeat.start()
            while True:
                try:
                    message = protocol.recv_message(self._sock)
                except ProtocolError:
                    break  # orchestrator went away
                mtype = message["type"]
                if mtype == protocol.DONE:
                    break
                if mtype == protocol.ERROR:
                    raise SimscopeError(
                        f"orchestrator rejected worker: {message.get('error')}"
                    )
                if mtype != protocol.RENDER_REQUEST:
                    continue
                self._accepted += 1
                if (self.kill_after_accepts is not None
                        and self._accepted >= self.kill_after_accepts):
                    # scripted fault: die without responding
                    self._sock.close()
                    return self.processed
                self._handle_item(message["item"], pipeline)
        finally:
            self._stop_heartbeat.set()
            try:
                self._sock.close()
            except OSError:
                pass
        return self.processed

    def _handle_item(self, item: dict, pipeline) -> None:
        config_id = item["id"]
        started = time.perf_counter()
        try:
            if self.dummy:
                time.sleep(self.dummy_latency)
                response = {
                    "status": "ok",
                    "is_correct": False,
                    "prediction": {"task": "dummy"},
                    "buffers_zeroed": True,
                    "timing": {},
                    "warnings": [],
                }
            else:
                response = pipeline.process(item)
        except ModelClientError as exc:
            self._send_error(config_id, "model_client", str(exc))
            return
        except (ControlError, RenderError) as exc:
            self._send_error(config_id, type(exc).__name__, str(exc))
            return
        except SimscopeError as exc:
            self._send_error(config_id, "worker", str(exc))
            return
        response["timing"]["total_s"] = time.perf_counter() - started
        response.update({"type": protocol.RENDER_RESPONSE, "id": config_id,
                         "worker": self.name})
        self._send(response)
        self.processed += 1

    def _send_error(self, config_id, error_class, message) -> None:
        self._send({
            "type": protocol.ERROR,
            "id": config_id,
            "worker": self.name,
            "error_class": error_class,
            "error": message,
        })


def start_local_workers(address, runtime, count, dummy=False,
                        dummy_latency=DUMMY_LATENCY_S,
                        kill_after_accepts=None,
                        heartbeat_interval=2.0) -> list[threading.Thread]:
    """Spawn in-process workers (same code path as networked ones) against a
    local orchestrator. ``kill_after_accepts`` may be a per-worker list for
    fault-injection tests."""
    threads = []
    for i in range(count):
        kill = None
        if kill_after_accepts is not None:
            kill = kill_after_accepts[i] if i < len(kill_after_accepts) else None
        worker = Worker(
            address, runtime=runtime, name=f"local-{i}", dummy=dummy,
            dummy_latency=dummy_latency, kill_after_accepts=kill,
            heartbeat_interval=heartbeat_interval,
        )
        thread = threading.Thread(target=worker.run, daemon=True,
                                  name=f"simscope-worker-{i}")
        thread.start()
        threads.append(thread)
    return threads
