"""Client-server experiment core.

One scheduling authority owns all queue state: policy instances (one per
environment/mesh pair, at most K active concurrently), the ready queue,
in-flight assignments, and the completed/errored sets. Network reads and
log writes run on their own threads, but every state transition happens
under a single lock, so delivery is linearizable: each configuration is
logged exactly once no matter how workers fail.

Work distribution is pull-shaped: a worker declares its slot count at
registration and the orchestrator keeps at most that many items in flight
on it, sending the next item only when a response (or failure) frees a
slot — natural backpressure for heterogeneous render times.
"""

from __future__ import annotations

import collections
import socket
import threading
import time

from . import protocol
from .errors import OrchestratorError, ProtocolError
from .policy import HistoryEntry, PolicyProposal, make_policy, point_to_instantiations
from .runio import RunManifest, RunWriter, utc_now

DEFAULT_MAX_ACTIVE_INSTANCES = 5
DEFAULT_RETRY_LIMIT = 2
DEFAULT_HEARTBEAT_S = 2.0
MISSED_HEARTBEATS_TO_EVICT = 3


class ThroughputMeter:
    """Sliding-window completion rate in renders per second."""

    def __init__(self, window_s: float = 5.0, clock=time.monotonic):
        self.window_s = float(window_s)
        self._clock = clock
        self._events = collections.deque()
        self.peak_fps = 0.0
        self.total = 0

    def record(self, timestamp=None) -> None:
        now = self._clock() if timestamp is None else timestamp
        self._events.append(now)
        self.total += 1
        rate = self.rate(now)
        if rate > self.peak_fps:
            self.peak_fps = rate

    def rate(self, now=None) -> float:
        now = self._clock() if now is None else now
        while self._events and self._events[0] < now - self.window_s:
            self._events.popleft()
        return len(self._events) / self.window_s


class _WorkerState:
    def __init__(self, worker_id, conn, slots, capabilities, registered_at):
        self.worker_id = worker_id
        self.conn = conn
        self.slots = slots
        self.capabilities = capabilities
        self.in_flight: set[int] = set()
        self.last_seen = registered_at
        self.evicted = False
        self.completed = 0
        self.max_in_flight = 0


class _InstanceState:
    """Per-(environment, mesh) policy instance and its bookkeeping."""

    def __init__(self, index, environment, mesh, policy):
        self.index = index
        self.environment = environment
        self.mesh = mesh
        self.policy = policy
        self.history: list[HistoryEntry] = []
        self.issued_local_ids: set[int] = set()
        self.outstanding = 0
        self.exhausted = False

    @property
    def finished(self) -> bool:
        return self.exhausted and self.outstanding == 0


class Orchestrator:
    def __init__(self, runtime, run_dir, bind=("127.0.0.1", 0),
                 max_active_instances=DEFAULT_MAX_ACTIVE_INSTANCES,
                 retry_limit=DEFAULT_RETRY_LIMIT,
                 heartbeat_s=DEFAULT_HEARTBEAT_S,
                 registration_timeout_s=30.0,
                 clock=time.monotonic):
        self.runtime = runtime
        self.run_dir = str(run_dir)
        self.bind = bind
        self.max_active_instances = int(max_active_instances)
        self.retry_limit = int(retry_limit)
        self.heartbeat_s = float(heartbeat_s)
        self.registration_timeout_s = float(registration_timeout_s)
        self.clock = clock

        self._lock = threading.Lock()
        self._instances: list[_InstanceState] = []
        self._active: list[_InstanceState] = []
        self._next_instance = 0
        self._ready: collections.deque = collections.deque()
        self._in_flight: dict[int, dict] = {}  # id -> item
        self._assignment: dict[int, str] = {}  # id -> worker_id
        self._attempts: dict[int, int] = {}
        self._completed: set[int] = set()
        self._errored: dict[int, dict] = {}
        self._scheduled_ids: set[int] = set()
        self._workers: dict[str, _WorkerState] = {}
        self._all_workers: list[_WorkerState] = []
        self._worker_seq = 0
        self._ever_registered = False
        self._duplicates = 0
        self._max_active_seen = 0
        self._started_monotonic = None
        self._failure: Exception | None = None

        self._done = threading.Event()
        self._server: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self.meter = ThroughputMeter(clock=clock)
        self._writer: RunWriter | None = None
        self.bound_address: tuple[str, int] | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> tuple[str, int]:
        """Bind the server socket and start accepting workers; returns the
        bound address so callers can point workers at it."""
        runtime = self.runtime
        for index, (env_name, mesh_name) in enumerate(runtime.instance_pairs):
            policy = make_policy(
                runtime.policy_name, runtime.space, runtime.policy_params,
                instance_seed=_instance_seed(runtime.experiment_seed, index),
            )
            self._instances.append(
                _InstanceState(index, env_name, mesh_name, policy)
            )
        if not self._instances:
            raise OrchestratorError("no (environment, mesh) pairs to run")

        self._writer = RunWriter(self.run_dir)
        self._started_at = utc_now()
        self._started_monotonic = self.clock()

        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind(self.bind)
        self._server.listen(64)
        self.bound_address = self._server.getsockname()

        with self._lock:
            self._activate_instances_locked()

        accept = threading.Thread(target=self._accept_loop, daemon=True,
                                  name="simscope-accept")
        monitor = threading.Thread(target=self._monitor_loop, daemon=True,
                                   name="simscope-monitor")
        accept.start()
        monitor.start()
        self._threads += [accept, monitor]
        return self.bound_address

    def wait(self) -> RunManifest:
        """Block until the run completes; returns the final manifest."""
        deadline = self.clock() + self.registration_timeout_s
        while not self._ever_registered:
            if self._done.is_set():
                break
            if self.clock() > deadline:
                self._shutdown()
                raise OrchestratorError(
                    "startup failure: no worker registered before the deadline"
                )
            time.sleep(0.01)
        self._done.wait()
        self._shutdown()
        if self._failure is not None:
            raise self._failure
        manifest = self._build_manifest()
        self._writer.write_manifest(manifest)
        self._writer.close()
        manifest.validate_totals()
        return manifest

    def run(self) -> RunManifest:
        self.start()
        return self.wait()

    def _shutdown(self) -> None:
        with self._lock:
            workers = list(self._workers.values())
        for state in workers:
            try:
                protocol.send_message(state.conn, {"type": protocol.DONE})
            except OSError:
                pass
            try:
                state.conn.close()
            except OSError:
                pass
        if self._server is not None:
            try:
                self._server.close()
            except OSError:
                pass

    # -- policy instance management (lock held) ------------------------------

    def _activate_instances_locked(self) -> None:
        while True:
            self._active = [i for i in self._active if not i.finished]
            if (len(self._active) >= self.max_active_instances
                    or self._next_instance >= len(self._instances)):
                break
            instance = self._instances[self._next_instance]
            self._next_instance += 1
            self._active.append(instance)
            self._refill_instance_locked(instance)
        self._max_active_seen = max(self._max_active_seen, len(self._active))

    def _refill_instance_locked(self, instance: _InstanceState) -> None:
        if instance.exhausted:
            return
        batch = instance.policy.next_batch(list(instance.history))
        if not batch:
            instance.exhausted = True
            return
        n = len(self._instances)
        for proposal in batch:
            if proposal.configuration_id in instance.issued_local_ids:
                raise OrchestratorError(
                    f"policy contract violation: instance {instance.index} "
                    f"reissued configuration id {proposal.configuration_id}"
                )
            instance.issued_local_ids.add(proposal.configuration_id)
            self.runtime.space.validate_point(proposal.point)
            config_id = instance.index + n * proposal.configuration_id
            item = self._build_item(instance, proposal, config_id)
            self._scheduled_ids.add(config_id)
            self._attempts[config_id] = 0
            instance.outstanding += 1
            self._ready.append(item)

    def _build_item(self, instance, proposal, config_id) -> dict:
        runtime = self.runtime
        insts = point_to_instantiations(runtime.space, runtime.descriptors,
                                        proposal.point)
        rendered, post = [], []
        for inst in insts:
            kind = runtime.registry.get(inst.control).kind
            (rendered if kind == "rendered" else post).append(inst.to_json())
        values = {}
        for dim, value in zip(runtime.space.dimensions, proposal.point):
            if dim.kind == "discrete" and dim.values is not None:
                values[dim.name] = dim.values[int(value)]
            else:
                values[dim.name] = value
        for name, value in runtime.space.pinned_map.items():
            values[name] = value
        return {
            "id": config_id,
            "instance": instance.index,
            "local_id": proposal.configuration_id,
            "environment": instance.environment,
            "mesh": instance.mesh,
            "point": list(proposal.point),
            "values": values,
            "seed": _configuration_seed(runtime.experiment_seed, config_id),
            "resolution": list(runtime.resolution),
            "rendered": rendered,
            "post": post,
        }

    # -- networking ----------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._done.is_set():
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_worker, args=(conn,),
                                      daemon=True)
            thread.start()
            self._threads.append(thread)

    def _serve_worker(self, conn: socket.socket) -> None:
        worker = None
        try:
            hello = protocol.recv_message(conn)
            if hello.get("type") != protocol.REGISTER:
                protocol.send_message(conn, {
                    "type": protocol.ERROR, "error": "expected REGISTER",
                })
                conn.close()
                return
            capabilities = hello.get("capabilities", {})
            try:
                protocol.check_capabilities(
                    capabilities, self.runtime.required_controls,
                    self.runtime.required_modalities,
                )
            except ProtocolError as exc:
                protocol.send_message(conn, {
                    "type": protocol.ERROR, "error": str(exc),
                })
                conn.close()
                return
            with self._lock:
                self._worker_seq += 1
                worker_id = f"{hello.get('worker', 'worker')}#{self._worker_seq}"
                worker = _WorkerState(
                    worker_id, conn, max(1, int(hello.get("slots", 1))),
                    capabilities, self.clock(),
                )
                self._workers[worker_id] = worker
                self._all_workers.append(worker)
                self._ever_registered = True
            self._pump()
            while not self._done.is_set():
                message = protocol.recv_message(conn)
                worker.last_seen = self.clock()
                mtype = message["type"]
                if mtype == protocol.HEARTBEAT:
                    continue
                if mtype == protocol.RENDER_RESPONSE:
                    self._on_response(worker, message)
                elif mtype == protocol.ERROR:
                    self._on_item_error(worker, message)
        except ProtocolError:
            pass  # disconnect; eviction below
        except OSError:
            pass
        finally:
            if worker is not None:
                self._evict_worker(worker, reason="connection closed")

    # -- scheduling ----------------------------------------------------------

    def _pump(self) -> None:
        """Assign ready items to free worker slots; sends happen outside the
        lock so a slow consumer cannot stall state transitions."""
        sends = []
        try:
            with self._lock:
                while True:
                    self._ensure_ready_locked()
                    if not self._ready:
                        break
                    worker = self._pick_worker_locked()
                    if worker is None:
                        break
                    item = self._ready.popleft()
                    config_id = item["id"]
                    self._in_flight[config_id] = item
                    self._assignment[config_id] = worker.worker_id
                    worker.in_flight.add(config_id)
                    worker.max_in_flight = max(worker.max_in_flight,
                                               len(worker.in_flight))
                    sends.append((worker, item))
                self._check_done_locked()
        except OrchestratorError as exc:
            self._failure = exc
            self._done.set()
            return
        for worker, item in sends:
            try:
                protocol.send_message(worker.conn, {
                    "type": protocol.RENDER_REQUEST, "item": item,
                })
            except OSError:
                self._evict_worker(worker, reason="send failed")

    def _ensure_ready_locked(self) -> None:
        """Keep the frontier bounded: at most the active instances' next
        batches are materialized, refilled only once the queue runs dry."""
        self._activate_instances_locked()
        if self._ready:
            return
        for instance in list(self._active):
            if not instance.exhausted:
                self._refill_instance_locked(instance)
                if self._ready:
                    break
        self._activate_instances_locked()

    def _pick_worker_locked(self):
        best = None
        for worker in self._workers.values():
            if worker.evicted or len(worker.in_flight) >= worker.slots:
                continue
            if best is None or len(worker.in_flight) < len(best.in_flight):
                best = worker
        return best

    def _check_done_locked(self) -> None:
        if self._failure is not None:
            self._done.set()
            return
        if (self._next_instance >= len(self._instances)
                and not self._active and not self._ready
                and not self._in_flight):
            self._done.set()

    # -- result handling -----------------------------------------------------

    def _on_response(self, worker: _WorkerState, message: dict) -> None:
        config_id = message.get("id")
        record = None
        with self._lock:
            if config_id in self._completed or config_id in self._errored:
                self._duplicates += 1  # idempotence: second response discarded
                return
            item = self._in_flight.pop(config_id, None)
            if item is None:
                self._duplicates += 1
                return
            self._assignment.pop(config_id, None)
            worker.in_flight.discard(config_id)
            worker.completed += 1
            self._completed.add(config_id)
            instance = self._instances[item["instance"]]
            instance.outstanding -= 1
            status = message.get("status", "ok")
            is_correct = message.get("is_correct")
            instance.history.append(HistoryEntry(
                proposal=PolicyProposal(item["local_id"], tuple(item["point"])),
                is_correct=is_correct,
                score=1.0 if is_correct else 0.0,
            ))
            record = {
                "id": config_id,
                "instance": item["instance"],
                "environment": message.get("environment", item["environment"]),
                "mesh": item["mesh"],
                "values": item["values"],
                "point": item["point"],
                "seed": item["seed"],
                "status": status,
                "is_correct": is_correct,
                "prediction": message.get("prediction"),
                "warnings": message.get("warnings", []),
                "timing": message.get("timing", {}),
                "worker": worker.worker_id,
            }
            if message.get("buffers_zeroed"):
                record["buffers_zeroed"] = True
            if message.get("buffers"):
                try:
                    record["buffers"] = self._writer.save_buffers(
                        config_id, message["buffers"]
                    )
                except ProtocolError as exc:
                    # a corrupt buffer payload must not cost the record
                    record["warnings"] = record.get("warnings", []) + [
                        f"buffers discarded: {exc}"
                    ]
            if message.get("reason"):
                record["reason"] = message["reason"]
            self.meter.record()
            self._writer.write_record(record)
        self._pump()

    def _on_item_error(self, worker: _WorkerState, message: dict) -> None:
        config_id = message.get("id")
        if config_id is None:
            return
        with self._lock:
            item = self._in_flight.pop(config_id, None)
            if item is None:
                return
            self._assignment.pop(config_id, None)
            worker.in_flight.discard(config_id)
            self._handle_failure_locked(
                item, message.get("error_class", "worker"),
                message.get("error", ""),
            )
        self._pump()

    def _handle_failure_locked(self, item, error_class, error_message) -> None:
        config_id = item["id"]
        self._attempts[config_id] += 1
        if self._attempts[config_id] > self.retry_limit:
            self._errored[config_id] = {
                "class": error_class, "message": error_message,
            }
            instance = self._instances[item["instance"]]
            instance.outstanding -= 1
            # errored configurations are logged, never silently dropped
            self._writer.write_record({
                "id": config_id,
                "instance": item["instance"],
                "environment": item["environment"],
                "mesh": item["mesh"],
                "values": item["values"],
                "point": item["point"],
                "seed": item["seed"],
                "status": "errored",
                "is_correct": None,
                "error": {"class": error_class, "message": error_message,
                          "attempts": self._attempts[config_id]},
            })
        else:
            self._ready.append(item)

    def _evict_worker(self, worker: _WorkerState, reason: str) -> None:
        with self._lock:
            if worker.evicted:
                return
            worker.evicted = True
            self._workers.pop(worker.worker_id, None)
            orphans = [self._in_flight.pop(cid) for cid in sorted(worker.in_flight)
                       if cid in self._in_flight]
            for cid in worker.in_flight:
                self._assignment.pop(cid, None)
            worker.in_flight.clear()
            for item in orphans:
                self._handle_failure_locked(item, "worker_lost", reason)
        try:
            worker.conn.close()
        except OSError:
            pass
        self._pump()

    # -- monitoring ----------------------------------------------------------

    def _monitor_loop(self) -> None:
        while not self._done.wait(self.heartbeat_s / 2.0):
            self.check_worker_timeouts()

    def check_worker_timeouts(self, now=None) -> list[str]:
        """Evict workers silent for 3 heartbeat intervals; factored out (and
        clock-injectable) so eviction is testable without real waiting."""
        now = self.clock() if now is None else now
        cutoff = now - MISSED_HEARTBEATS_TO_EVICT * self.heartbeat_s
        with self._lock:
            stale = [w for w in self._workers.values() if w.last_seen < cutoff]
        for worker in stale:
            self._evict_worker(worker, reason="missed heartbeats")
        return [w.worker_id for w in stale]

    # -- reporting ------------------------------------------------------------

    def status(self) -> dict:
        """Live snapshot: the throughput endpoint used by the CLI headline."""
        with self._lock:
            return {
                "scheduled": len(self._scheduled_ids),
                "completed": len(self._completed),
                "errored": len(self._errored),
                "in_flight": len(self._in_flight),
                "workers": len(self._workers),
                "fps": self.meter.rate(),
            }

    def _build_manifest(self) -> RunManifest:
        runtime = self.runtime
        elapsed = max(self.clock() - self._started_monotonic, 1e-9)
        pending = (len(self._scheduled_ids) - len(self._completed)
                   - len(self._errored))
        return RunManifest(
            experiment=runtime.name,
            config_hash=runtime.config_hash,
            asset_checksums=runtime.asset_checksums,
            started_at=self._started_at,
            finished_at=utc_now(),
            scheduled=len(self._scheduled_ids),
            completed=len(self._completed),
            errored=len(self._errored),
            pending=pending,
            search_space=runtime.space.to_json(),
            instances=[
                {"index": i.index, "environment": i.environment, "mesh": i.mesh}
                for i in self._instances
            ],
            throughput={
                "average_fps": self.meter.total / elapsed,
                "peak_fps": self.meter.peak_fps,
            },
            workers=[
                {"id": w.worker_id, "slots": w.slots, "completed": w.completed,
                 "max_in_flight": w.max_in_flight, "evicted": w.evicted}
                for w in self._all_workers
            ],
            stats={
                "max_active_instances": self._max_active_seen,
                "duplicate_responses": self._duplicates,
                "retries": sum(1 for a in self._attempts.values() if a > 0),
            },
            config=runtime.config_echo,
        )


def _instance_seed(experiment_seed: int, instance_index: int) -> int:
    import numpy as np

    return int(np.random.SeedSequence(
        [int(experiment_seed), int(instance_index)]
    ).generate_state(1)[0])


def _configuration_seed(experiment_seed: int, config_id: int) -> int:
    import numpy as np

    return int(np.random.SeedSequence(
        [int(experiment_seed), 0x5EED, int(config_id)]
    ).generate_state(1)[0])


def run_experiment(runtime, run_dir, local_workers=0, bind=("127.0.0.1", 0),
                   dummy=False, dummy_latency=None,
                   kill_after_accepts=None, **orchestrator_kwargs) -> RunManifest:
    """Start an orchestrator, optionally spawn in-process workers against
    it, and block until the run finishes."""
    from .worker import DUMMY_LATENCY_S, start_local_workers

    orchestrator = Orchestrator(runtime, run_dir, bind=bind,
                                **orchestrator_kwargs)
    address = orchestrator.start()
    if local_workers:
        start_local_workers(
            address, runtime, local_workers, dummy=dummy,
            dummy_latency=DUMMY_LATENCY_S if dummy_latency is None else dummy_latency,
            kill_after_accepts=kill_after_accepts,
            heartbeat_interval=orchestrator.heartbeat_s,
        )
    return orchestrator.wait()


def dry_run_count(runtime) -> int:
    """Proposal count a fault-free run would complete; open-loop policies
    are drained with an empty history."""
    total = 0
    for index in range(len(runtime.instance_pairs)):
        policy = make_policy(
            runtime.policy_name, runtime.space, runtime.policy_params,
            instance_seed=_instance_seed(runtime.experiment_seed, index),
        )
        if hasattr(policy, "total"):
            total += policy.total
            continue
        while True:
            batch = policy.next_batch([])
            if not batch:
                break
            total += len(batch)
    return total
