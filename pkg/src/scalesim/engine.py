"""Discrete-event core: simulated clock, event queue, and the cluster state machine.

Time is integer seconds. All state transitions happen by popping the earliest
pending event, so two runs fed identical inputs replay identical histories.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

from .errors import EmptyQueueError, SimulationError, UnknownPoolError


class NodeState(Enum):
    PROVISIONING = "Provisioning"
    READY = "Ready"
    DRAINING = "Draining"
    DELETED = "Deleted"


class PodState(Enum):
    PENDING = "Pending"
    STARTING = "Starting"
    RUNNING = "Running"
    TERMINATING = "Terminating"
    DELETED = "Deleted"


# Forward-only ordering of node lifecycle states. A transition may skip a
# state (a cancelled Provisioning node drains without ever serving) but may
# never move backwards.
_NODE_ORDER = {
    NodeState.PROVISIONING: 0,
    NodeState.READY: 1,
    NodeState.DRAINING: 2,
    NodeState.DELETED: 3,
}


class EventKind(Enum):
    NODE_READY = "NodeReady"
    POD_STARTED = "PodStarted"
    POD_TERMINATED = "PodTerminated"
    WORKLOAD_PHASE_CHANGE = "WorkloadPhaseChange"
    POLICY_SWITCH = "PolicySwitch"
    CONTROL_TICK = "ControlTick"


# Tie-break rank for events sharing a fire_at second.
_KIND_RANK = {
    EventKind.NODE_READY: 0,
    EventKind.POD_STARTED: 1,
    EventKind.POD_TERMINATED: 2,
    EventKind.WORKLOAD_PHASE_CHANGE: 3,
    EventKind.POLICY_SWITCH: 4,
    EventKind.CONTROL_TICK: 5,
}


@dataclass
class SimClock:
    now: int = 0

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise SimulationError(f"clock would move backwards: {self.now} -> {t}")
        self.now = t


@dataclass
class SimEvent:
    fire_at: int
    kind: EventKind
    payload: dict
    seq: int = 0

    def sort_key(self) -> tuple[int, int, int]:
        return (self.fire_at, _KIND_RANK[self.kind], self.seq)


@dataclass
class Node:
    node_id: str
    pool_id: str
    state: NodeState = NodeState.PROVISIONING
    ready_at: int = 0
    bound_pods: set[str] = field(default_factory=set)

    def transition(self, new_state: NodeState) -> None:
        if _NODE_ORDER[new_state] < _NODE_ORDER[self.state]:
            raise SimulationError(
                f"node {self.node_id}: illegal transition {self.state.value} -> {new_state.value}"
            )
        self.state = new_state


@dataclass
class NodePool:
    pool_id: str
    machine_type: str
    node_capacity_millicores: int
    cost_rate: float           # currency units per node-second
    provisioning_delay: int    # seconds from resize to Ready
    nodes: list[Node] = field(default_factory=list)
    _next_node: int = 1

    def live_nodes(self) -> list[Node]:
        """Nodes that count toward the pool's size (Provisioning or Ready)."""
        return [n for n in self.nodes if n.state in (NodeState.PROVISIONING, NodeState.READY)]

    def ready_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.state is NodeState.READY]


@dataclass
class Pod:
    pod_id: str
    workload_id: str
    cpu_request_millicores: int
    state: PodState = PodState.PENDING
    bound_node: str | None = None
    startup_delay: int = 10
    created_at: int = 0
    creation_seq: int = 0
    pending_since: int = 0
    # Incremented on every bind so a stale PodStarted event from an earlier
    # binding cannot promote the pod after it was evicted and rescheduled.
    binding_seq: int = 0


class ClusterState:
    """Mutable cluster snapshot: pools, pods, clock, and the event queue."""

    def __init__(self, pools: list[NodePool], pod_startup_delay: int = 10):
        self.clock = SimClock()
        self.pools: dict[str, NodePool] = {p.pool_id: p for p in pools}
        self.pool_order: list[str] = [p.pool_id for p in pools]
        self.pods: dict[str, Pod] = {}
        self.pod_startup_delay = pod_startup_delay
        # Pool preferred by the scheduler; controllers keep it pointed at the
        # active policy's pool.
        self.preferred_pool_id: str | None = None
        self._queue: list[tuple[tuple[int, int, int], SimEvent]] = []
        self._next_seq = 0
        self._pod_counters: dict[str, int] = {}

    # ------------------------------------------------------------------ events

    def enqueue(self, fire_at: int, kind: EventKind, payload: dict) -> SimEvent:
        if fire_at < self.clock.now:
            raise SimulationError(
                f"event {kind.value} scheduled in the past ({fire_at} < {self.clock.now})"
            )
        ev = SimEvent(fire_at=fire_at, kind=kind, payload=payload, seq=self._next_seq)
        self._next_seq += 1
        heapq.heappush(self._queue, (ev.sort_key(), ev))
        return ev

    def has_events(self) -> bool:
        return bool(self._queue)

    def peek_time(self) -> int:
        if not self._queue:
            raise EmptyQueueError("event queue empty: scenario end")
        return self._queue[0][1].fire_at

    def add_ready_node(self, pool_id: str) -> Node:
        """Bootstrap helper: a node that exists and is Ready at scenario start."""
        pool = self.pools.get(pool_id)
        if pool is None:
            raise UnknownPoolError(f"unknown pool {pool_id!r}")
        node = Node(
            node_id=f"{pool_id}-n{pool._next_node}",
            pool_id=pool_id,
            state=NodeState.READY,
            ready_at=self.clock.now,
        )
        pool._next_node += 1
        pool.nodes.append(node)
        return node

    def step(self) -> SimEvent:
        """Pop the earliest event, advance the clock, apply its transition.

        NodeReady / PodStarted / PodTerminated mutate the cluster here;
        controller-facing kinds are returned untouched for the driver.
        """
        if not self._queue:
            raise EmptyQueueError("event queue empty: scenario end")
        _, ev = heapq.heappop(self._queue)
        self.clock.advance_to(ev.fire_at)

        if ev.kind is EventKind.NODE_READY:
            self._apply_node_ready(ev)
        elif ev.kind is EventKind.POD_STARTED:
            self._apply_pod_started(ev)
        elif ev.kind is EventKind.POD_TERMINATED:
            self._apply_pod_terminated(ev)
        return ev

    def _apply_node_ready(self, ev: SimEvent) -> None:
        node = self._find_node(ev.payload["node"])
        if node is None or node.state is not NodeState.PROVISIONING:
            ev.payload["stale"] = True
            return
        node.transition(NodeState.READY)
        self.schedule_pending_pods()

    def _apply_pod_started(self, ev: SimEvent) -> None:
        pod = self.pods.get(ev.payload["pod"])
        if pod is None or pod.state is not PodState.STARTING \
                or pod.binding_seq != ev.payload["binding"]:
            ev.payload["stale"] = True
            return
        pod.state = PodState.RUNNING

    def _apply_pod_terminated(self, ev: SimEvent) -> None:
        pod = self.pods.get(ev.payload["pod"])
        if pod is None or pod.state is not PodState.TERMINATING:
            ev.payload["stale"] = True
            return
        self._unbind(pod)
        pod.state = PodState.DELETED

    # ------------------------------------------------------------------- pods

    def create_pod(self, workload_id: str, cpu_request: int, pod_id: str | None = None) -> Pod:
        if pod_id is None:
            n = self._pod_counters.get(workload_id, 0) + 1
            self._pod_counters[workload_id] = n
            pod_id = f"{workload_id}-p{n}"
        if pod_id in self.pods:
            raise SimulationError(f"duplicate pod id {pod_id}")
        pod = Pod(
            pod_id=pod_id,
            workload_id=workload_id,
            cpu_request_millicores=cpu_request,
            startup_delay=self.pod_startup_delay,
            created_at=self.clock.now,
            creation_seq=len(self.pods),
            pending_since=self.clock.now,
        )
        self.pods[pod_id] = pod
        return pod

    def terminate_pod(self, pod_id: str) -> None:
        """Begin pod teardown. Pending pods vanish immediately (nothing runs);
        bound pods pass through Terminating and keep their reservation until
        the PodTerminated event fires."""
        pod = self.pods[pod_id]
        if pod.state is PodState.PENDING:
            pod.state = PodState.DELETED
            return
        if pod.state in (PodState.TERMINATING, PodState.DELETED):
            return
        pod.state = PodState.TERMINATING
        self.enqueue(self.clock.now, EventKind.POD_TERMINATED, {"pod": pod.pod_id})

    def replicas(self, workload_id: str) -> int:
        """R_w: pods of the workload not yet on their way out."""
        return sum(
            1 for p in self.pods.values()
            if p.workload_id == workload_id
            and p.state not in (PodState.TERMINATING, PodState.DELETED)
        )

    def pods_of(self, workload_id: str) -> list[Pod]:
        return [p for p in self.pods.values() if p.workload_id == workload_id]

    def running_replicas(self, workload_id: str) -> int:
        return sum(
            1 for p in self.pods.values()
            if p.workload_id == workload_id and p.state is PodState.RUNNING
        )

    # -------------------------------------------------------------- scheduling

    def free_capacity(self, node: Node) -> int:
        pool = self.pools[node.pool_id]
        used = sum(self.pods[pid].cpu_request_millicores for pid in node.bound_pods)
        return pool.node_capacity_millicores - used

    def schedule_pending_pods(self) -> list[tuple[str, str]]:
        """Bind Pending pods to Ready nodes.

        Each pod goes to the Ready node with the most free request capacity
        that still fits it, considering the preferred pool's nodes first and
        falling back to any other pool. Pods that fit nowhere stay Pending.
        """
        bindings: list[tuple[str, str]] = []
        pending = sorted(
            (p for p in self.pods.values() if p.state is PodState.PENDING),
            key=lambda p: p.creation_seq,
        )
        for pod in pending:
            node = self._pick_node(pod.cpu_request_millicores)
            if node is None:
                continue
            self._bind(pod, node)
            bindings.append((pod.pod_id, node.node_id))
        return bindings

    def _pick_node(self, request: int) -> Node | None:
        def candidates(pool_ids: list[str]) -> list[Node]:
            found = []
            for pid in pool_ids:
                for node in self.pools[pid].ready_nodes():
                    if self.free_capacity(node) >= request:
                        found.append(node)
            return found

        preferred = [self.preferred_pool_id] if self.preferred_pool_id in self.pools else []
        rest = [pid for pid in self.pool_order if pid not in preferred]
        for group in (preferred, rest):
            nodes = candidates(group)
            if nodes:
                return min(nodes, key=lambda n: (-self.free_capacity(n), n.node_id))
        return None

    def _bind(self, pod: Pod, node: Node) -> None:
        pod.bound_node = node.node_id
        pod.state = PodState.STARTING
        pod.binding_seq += 1
        node.bound_pods.add(pod.pod_id)
        self.enqueue(
            self.clock.now + pod.startup_delay,
            EventKind.POD_STARTED,
            {"pod": pod.pod_id, "binding": pod.binding_seq},
        )

    def _unbind(self, pod: Pod) -> None:
        if pod.bound_node is None:
            return
        node = self._find_node(pod.bound_node)
        if node is not None:
            node.bound_pods.discard(pod.pod_id)
            self._maybe_finish_drain(node)
        pod.bound_node = None

    # ------------------------------------------------------------------- nodes

    def resize_pool(self, pool_id: str, target: int) -> None:
        """Grow or shrink a pool toward `target` live nodes.

        Growth adds Provisioning nodes that become Ready after the pool's
        provisioning delay. Shrinking drains the nodes hosting the fewest
        pods (ties: highest node id); their pods return to Pending for
        rescheduling and an emptied node is deleted on the spot.
        """
        if target < 0:
            raise SimulationError(f"resize target must be >= 0, got {target}")
        pool = self.pools.get(pool_id)
        if pool is None:
            raise UnknownPoolError(f"unknown pool {pool_id!r}")
        live = pool.live_nodes()
        if target > len(live):
            for _ in range(target - len(live)):
                node = Node(
                    node_id=f"{pool_id}-n{pool._next_node}",
                    pool_id=pool_id,
                    ready_at=self.clock.now + pool.provisioning_delay,
                )
                pool._next_node += 1
                pool.nodes.append(node)
                self.enqueue(node.ready_at, EventKind.NODE_READY, {"node": node.node_id})
        elif target < len(live):
            victims = sorted(live, key=lambda n: (len(n.bound_pods), -_node_index(n.node_id)))
            for node in victims[: len(live) - target]:
                self._drain(node)
            self.schedule_pending_pods()

    def _drain(self, node: Node) -> None:
        node.transition(NodeState.DRAINING)
        for pod_id in sorted(node.bound_pods):
            pod = self.pods[pod_id]
            if pod.state is PodState.TERMINATING:
                # Already dying; finish immediately so the node can go away.
                pod.state = PodState.DELETED
            else:
                pod.state = PodState.PENDING
                pod.pending_since = self.clock.now
            pod.bound_node = None
        node.bound_pods.clear()
        self._maybe_finish_drain(node)

    def _maybe_finish_drain(self, node: Node) -> None:
        if node.state is NodeState.DRAINING and not node.bound_pods:
            node.transition(NodeState.DELETED)

    def _find_node(self, node_id: str) -> Node | None:
        for pool in self.pools.values():
            for node in pool.nodes:
                if node.node_id == node_id:
                    return node
        return None


def _node_index(node_id: str) -> int:
    return int(node_id.rsplit("n", 1)[-1])
