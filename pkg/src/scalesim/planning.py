"""Tactical planning: replica plans from forecast peaks, node plans from
one-dimensional bin packing (first-fit-decreasing), and an exhaustive
branch-and-bound packer for small instances used as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Policy:
    """Strategic parameter tuple constraining the lower planning tiers."""

    name: str
    node_pool: str
    node_capacity_millicores: int
    min_replicas: int
    w_perf: float
    w_cost: float

    def __post_init__(self) -> None:
        if self.min_replicas < 1:
            raise ValueError(f"policy {self.name}: min_replicas must be >= 1")
        if self.w_perf < 0 or self.w_cost < 0 or abs(self.w_perf + self.w_cost - 1.0) > 1e-9:
            raise ValueError(f"policy {self.name}: weights must be non-negative and sum to 1")


@dataclass(frozen=True)
class Request:
    owner: str
    millicores: int


@dataclass
class RequestSet:
    items: list[Request] = field(default_factory=list)

    def add(self, owner: str, millicores: int) -> None:
        self.items.append(Request(owner, millicores))

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class PodPlan:
    workload_id: str
    raw_replicas: int
    planned_replicas: int
    basis_peak_millicores: int
    pod_request_millicores: int


@dataclass
class NodePlan:
    pool_id: str
    required_nodes: int
    assignment: list[tuple[Request, int]]   # (request, bin index)


class OversizedRequestError(ValueError):
    pass


class InstanceTooLargeError(ValueError):
    pass


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def plan_replicas(
    forecast_peak: int, pod_request: int, policy: Policy, workload_id: str = ""
) -> PodPlan:
    """Replica count for a predicted peak: ceil(peak / per-pod request),
    at least 1, floored by the policy's strategic minimum."""
    if pod_request <= 0:
        raise ValueError(f"pod_request must be positive, got {pod_request}")
    raw = max(1, ceil_div(max(0, forecast_peak), pod_request))
    planned = max(raw, policy.min_replicas)
    return PodPlan(
        workload_id=workload_id,
        raw_replicas=raw,
        planned_replicas=planned,
        basis_peak_millicores=max(0, forecast_peak),
        pod_request_millicores=pod_request,
    )


def _check_sizes(requests: RequestSet, bin_capacity: int) -> None:
    if bin_capacity <= 0:
        raise ValueError("bin_capacity must be positive")
    for req in requests.items:
        if req.millicores > bin_capacity:
            raise OversizedRequestError(
                f"request {req.owner} ({req.millicores}m) exceeds bin capacity {bin_capacity}m"
            )


def _validate_assignment(
    requests: RequestSet, assignment: list[tuple[Request, int]], bin_capacity: int
) -> None:
    # Structural checks mirroring the packing constraints: every request in
    # exactly one bin, no bin over capacity.
    if sorted((r.owner, r.millicores) for r, _ in assignment) != sorted(
        (r.owner, r.millicores) for r in requests.items
    ):
        raise AssertionError("packing assignment does not cover the request multiset exactly")
    loads: dict[int, int] = {}
    for req, b in assignment:
        loads[b] = loads.get(b, 0) + req.millicores
    for b, load in loads.items():
        if load > bin_capacity:
            raise AssertionError(f"bin {b} overfull: {load} > {bin_capacity}")


def pack_ffd(requests: RequestSet, bin_capacity: int, pool_id: str = "") -> NodePlan:
    """First-fit-decreasing: items by size descending (ties: owner ascending),
    each into the lowest-index bin with room, opening bins as needed."""
    _check_sizes(requests, bin_capacity)
    order = sorted(requests.items, key=lambda r: (-r.millicores, r.owner))
    free: list[int] = []
    assignment: list[tuple[Request, int]] = []
    for req in order:
        for b, slack in enumerate(free):
            if slack >= req.millicores:
                free[b] -= req.millicores
                assignment.append((req, b))
                break
        else:
            free.append(bin_capacity - req.millicores)
            assignment.append((req, len(free) - 1))
    plan = NodePlan(pool_id=pool_id, required_nodes=len(free), assignment=assignment)
    _validate_assignment(requests, plan.assignment, bin_capacity)
    return plan


MAX_EXACT_ITEMS = 12


def pack_exact(requests: RequestSet, bin_capacity: int, pool_id: str = "") -> NodePlan:
    """Provably minimal bin count by branch and bound. Only for small
    instances (<= 12 items); larger ones must use the FFD heuristic."""
    _check_sizes(requests, bin_capacity)
    if len(requests) > MAX_EXACT_ITEMS:
        raise InstanceTooLargeError(
            f"{len(requests)} items exceeds exact-solver limit of {MAX_EXACT_ITEMS}"
        )
    items = sorted(requests.items, key=lambda r: (-r.millicores, r.owner))
    if not items:
        return NodePlan(pool_id=pool_id, required_nodes=0, assignment=[])

    ffd = pack_ffd(requests, bin_capacity)
    best_count = ffd.required_nodes
    best_assign = {id(r): b for r, b in ffd.assignment}
    total = sum(r.millicores for r in items)
    current: list[int] = []          # free space per open bin
    placed: dict[int, int] = {}      # id(request) -> bin

    def recurse(i: int, remaining: int) -> None:
        nonlocal best_count, best_assign
        if i == len(items):
            if len(current) < best_count:
                best_count = len(current)
                best_assign = dict(placed)
            return
        # Even a perfect fill of current slack cannot beat the incumbent.
        slack = sum(current)
        lower = len(current) + max(0, ceil_div(remaining - slack, bin_capacity))
        if lower >= best_count:
            return
        req = items[i]
        seen: set[int] = set()
        for b in range(len(current)):
            if current[b] >= req.millicores and current[b] not in seen:
                seen.add(current[b])
                current[b] -= req.millicores
                placed[id(req)] = b
                recurse(i + 1, remaining - req.millicores)
                current[b] += req.millicores
        if len(current) + 1 < best_count:
            current.append(bin_capacity - req.millicores)
            placed[id(req)] = len(current) - 1
            recurse(i + 1, remaining - req.millicores)
            current.pop()
        placed.pop(id(req), None)

    recurse(0, total)
    assignment = [(r, best_assign[id(r)]) for r in items]
    plan = NodePlan(pool_id=pool_id, required_nodes=best_count, assignment=assignment)
    _validate_assignment(requests, plan.assignment, bin_capacity)
    return plan


def plan_nodes(
    pod_plans: list[PodPlan], other_requests: RequestSet, policy: Policy
) -> NodePlan:
    """Node count for the policy's pool: planned replicas of every workload
    plus all unmanaged requests, first-fit-decreasing into policy-sized bins."""
    combined = RequestSet()
    for plan in sorted(pod_plans, key=lambda p: p.workload_id):
        for i in range(plan.planned_replicas):
            combined.add(f"{plan.workload_id}-r{i + 1}", plan.pod_request_millicores)
    combined.items.extend(other_requests.items)
    return pack_ffd(combined, policy.node_capacity_millicores, pool_id=policy.node_pool)


def ffd_bound_holds(ffd_bins: int, exact_bins: int) -> bool:
    """Classical FFD guarantee: ffd <= (11/9) * optimum + 1, in exact integers."""
    return 9 * ffd_bins <= 11 * exact_bins + 9
