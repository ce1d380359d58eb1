"""Live structural invariants, checked after every fired event during a run.

A failed check raises InvariantViolation with the property name first, and the
run aborts with a nonzero exit instead of writing partial outputs.
"""

from __future__ import annotations

from .engine import ClusterState, NodeState, PodState
from .errors import InvariantViolation


class InvariantChecker:
    """Checks cluster-wide invariants; counts how many checks ran."""

    def __init__(self) -> None:
        self.checks_run = 0
        self._last_t = 0
        self._last_node_cost = 0
        self._last_pod_cost = 0

    def check(self, state: ClusterState, desired: dict[str, int] | None = None,
              migration_active: bool = False) -> None:
        self.checks_run += 1
        self._check_clock(state)
        self._check_capacity(state)
        self._check_bindings(state)
        if desired is not None and not migration_active:
            self._check_replica_accounting(state, desired)

    def check_costs(self, node_cost: int, pod_cost: int) -> None:
        if node_cost < self._last_node_cost or pod_cost < self._last_pod_cost:
            raise InvariantViolation(
                "cost-monotonicity: cumulative cost decreased "
                f"(node {self._last_node_cost}->{node_cost}, pod {self._last_pod_cost}->{pod_cost})"
            )
        self._last_node_cost = node_cost
        self._last_pod_cost = pod_cost

    def _check_clock(self, state: ClusterState) -> None:
        if state.clock.now < self._last_t:
            raise InvariantViolation(
                f"clock-monotonicity: {self._last_t} -> {state.clock.now}"
            )
        self._last_t = state.clock.now

    def _check_capacity(self, state: ClusterState) -> None:
        for pool in state.pools.values():
            for node in pool.nodes:
                used = sum(
                    state.pods[pid].cpu_request_millicores for pid in node.bound_pods
                )
                if used > pool.node_capacity_millicores:
                    raise InvariantViolation(
                        f"capacity-conservation: node {node.node_id} holds {used}m "
                        f"> capacity {pool.node_capacity_millicores}m"
                    )
                if node.bound_pods and node.state not in (NodeState.READY, NodeState.DRAINING):
                    raise InvariantViolation(
                        f"no-teleportation: node {node.node_id} in state {node.state.value} "
                        "has bound pods"
                    )

    def _check_bindings(self, state: ClusterState) -> None:
        bound_by_node: dict[str, set[str]] = {}
        for pool in state.pools.values():
            for node in pool.nodes:
                bound_by_node[node.node_id] = node.bound_pods
        for pod in state.pods.values():
            should_be_bound = pod.state in (
                PodState.STARTING, PodState.RUNNING, PodState.TERMINATING
            )
            if should_be_bound != (pod.bound_node is not None):
                raise InvariantViolation(
                    f"binding-consistency: pod {pod.pod_id} state {pod.state.value} "
                    f"with bound_node={pod.bound_node}"
                )
            if pod.bound_node is not None:
                if pod.pod_id not in bound_by_node.get(pod.bound_node, set()):
                    raise InvariantViolation(
                        f"binding-consistency: pod {pod.pod_id} missing from "
                        f"node {pod.bound_node} bound set"
                    )
        for node_id, pods in bound_by_node.items():
            for pid in pods:
                if state.pods[pid].bound_node != node_id:
                    raise InvariantViolation(
                        f"binding-consistency: node {node_id} lists pod {pid} "
                        f"bound elsewhere ({state.pods[pid].bound_node})"
                    )

    def _check_replica_accounting(self, state: ClusterState, desired: dict[str, int]) -> None:
        for workload_id, want in desired.items():
            have = sum(
                1 for p in state.pods.values()
                if p.workload_id == workload_id
                and p.state in (PodState.PENDING, PodState.STARTING, PodState.RUNNING)
            )
            if have != want:
                raise InvariantViolation(
                    f"replica-accounting: workload {workload_id} desired {want} "
                    f"but Pending+Starting+Running = {have}"
                )
