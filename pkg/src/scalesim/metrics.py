"""Per-tick observation, exact cost accounting, utility scoring, CSV export,
and side-by-side run comparison.

Costs are integrated between consecutive events in integer micro-units, so the
accounting identity (node-seconds x rate == cumulative cost) holds exactly.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .engine import ClusterState, NodeState, PodState
from .planning import Policy

MICRO = 1_000_000


def to_micro(rate: float) -> int:
    return round(rate * MICRO)


@dataclass
class CostModel:
    node_rate_micro: dict[str, int]   # pool id -> micro-units per node-second
    pod_rate_micro: int               # micro-units per pod-second


@dataclass
class Normalizers:
    perf_scale: float = 1.0
    cost_scale: float = 5.0   # units/second that count as "full" cost pressure

    def __post_init__(self) -> None:
        if self.perf_scale <= 0 or self.cost_scale <= 0:
            raise ValueError("normalizers must be positive")


@dataclass
class MetricSample:
    t: int
    demand_millicores: int
    running_replicas: int
    pending_pods: int
    nodes_by_pool: dict[str, tuple[int, int, int]]   # pool -> (provisioning, ready, draining)
    utilization: float
    cpu_waste_millicores: int
    cumulative_pod_cost: int    # micro-units
    cumulative_node_cost: int   # micro-units
    packing_efficiency: float
    utility: float


class CostAccumulator:
    """Integrates cost rates over event-to-event intervals.

    Nodes accrue from Provisioning onward (capacity you pay for before it
    serves); pods accrue only while bound to a node. Pending pods are free.
    """

    def __init__(self, cost_model: CostModel):
        self.model = cost_model
        self.node_cost: int = 0
        self.pod_cost: int = 0
        self._last_t: int = 0

    def node_rate(self, state: ClusterState) -> int:
        rate = 0
        for pool in state.pools.values():
            live = sum(
                1 for n in pool.nodes
                if n.state in (NodeState.PROVISIONING, NodeState.READY, NodeState.DRAINING)
            )
            rate += live * self.model.node_rate_micro[pool.pool_id]
        return rate

    def pod_rate(self, state: ClusterState) -> int:
        bound = sum(1 for p in state.pods.values() if p.bound_node is not None)
        return bound * self.model.pod_rate_micro

    def advance(self, state: ClusterState, now: int) -> None:
        """Accrue costs for (last_t, now] at the rates that held before any
        transition at `now` is applied."""
        dt = now - self._last_t
        if dt < 0:
            raise ValueError("cost accumulator cannot move backwards")
        if dt:
            self.node_cost += dt * self.node_rate(state)
            self.pod_cost += dt * self.pod_rate(state)
        self._last_t = now


def utility_score(
    utilization: float,
    cost_rate_units_per_s: float,
    policy: Policy,
    normalizers: Normalizers,
) -> float:
    """Weighted headroom-minus-cost score: perf is 1 at zero utilization and
    0 at or beyond perf_scale; cost is the instantaneous rate normalized."""
    perf = 1.0 - min(1.0, utilization / normalizers.perf_scale)
    cost = cost_rate_units_per_s / normalizers.cost_scale
    return policy.w_perf * perf - policy.w_cost * cost


class Observer:
    def __init__(
        self,
        pod_requests: dict[str, int],
        cost: CostAccumulator,
        normalizers: Normalizers,
        saturation_ceiling: Fraction = Fraction(11, 10),
    ):
        self.pod_requests = pod_requests
        self.cost = cost
        self.normalizers = normalizers
        self.saturation_ceiling = saturation_ceiling
        self.samples: list[MetricSample] = []

    def observe(self, state: ClusterState, demand: int, policy: Policy, t: int) -> MetricSample:
        running_capacity = 0
        running = 0
        for workload_id, request in self.pod_requests.items():
            n = state.running_replicas(workload_id)
            running += n
            running_capacity += n * request
        pending = sum(1 for p in state.pods.values() if p.state is PodState.PENDING)

        if running_capacity > 0:
            utilization = min(
                Fraction(demand, running_capacity), self.saturation_ceiling
            )
        else:
            utilization = Fraction(0)

        bound_requests = 0
        ready_capacity = 0
        nodes_by_pool: dict[str, tuple[int, int, int]] = {}
        for pool_id in state.pool_order:
            pool = state.pools[pool_id]
            prov = sum(1 for n in pool.nodes if n.state is NodeState.PROVISIONING)
            ready = sum(1 for n in pool.nodes if n.state is NodeState.READY)
            drain = sum(1 for n in pool.nodes if n.state is NodeState.DRAINING)
            nodes_by_pool[pool_id] = (prov, ready, drain)
            for node in pool.ready_nodes():
                ready_capacity += pool.node_capacity_millicores
                bound_requests += sum(
                    state.pods[pid].cpu_request_millicores for pid in node.bound_pods
                )
        packing = bound_requests / ready_capacity if ready_capacity else 0.0

        cost_rate = (self.cost.node_rate(state) + self.cost.pod_rate(state)) / MICRO
        sample = MetricSample(
            t=t,
            demand_millicores=demand,
            running_replicas=running,
            pending_pods=pending,
            nodes_by_pool=nodes_by_pool,
            utilization=round(float(utilization), 6),
            cpu_waste_millicores=max(0, running_capacity - demand),
            cumulative_pod_cost=self.cost.pod_cost,
            cumulative_node_cost=self.cost.node_cost,
            packing_efficiency=round(packing, 6),
            utility=round(
                utility_score(float(utilization), cost_rate, policy, self.normalizers), 6
            ),
        )
        self.samples.append(sample)
        return sample


# --------------------------------------------------------------------- files

def metrics_header(pool_order: list[str]) -> list[str]:
    cols = ["t", "demand_millicores", "running_replicas", "pending_pods"]
    for pool_id in pool_order:
        cols += [
            f"nodes_{pool_id}_provisioning",
            f"nodes_{pool_id}_ready",
            f"nodes_{pool_id}_draining",
        ]
    cols += [
        "utilization",
        "cpu_waste_millicores",
        "cumulative_pod_cost",
        "cumulative_node_cost",
        "packing_efficiency",
        "utility",
    ]
    return cols


def sample_row(sample: MetricSample, pool_order: list[str]) -> list[str]:
    row = [
        str(sample.t),
        str(sample.demand_millicores),
        str(sample.running_replicas),
        str(sample.pending_pods),
    ]
    for pool_id in pool_order:
        prov, ready, drain = sample.nodes_by_pool[pool_id]
        row += [str(prov), str(ready), str(drain)]
    row += [
        f"{sample.utilization:.6f}",
        str(sample.cpu_waste_millicores),
        str(sample.cumulative_pod_cost),
        str(sample.cumulative_node_cost),
        f"{sample.packing_efficiency:.6f}",
        f"{sample.utility:.6f}",
    ]
    return row


def write_metrics_csv(samples: list[MetricSample], pool_order: list[str], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(metrics_header(pool_order))
        for sample in samples:
            writer.writerow(sample_row(sample, pool_order))


def read_metrics_csv(path: Path) -> tuple[list[str], list[MetricSample]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        pool_order = sorted(
            {c[len("nodes_"):-len("_ready")] for c in header if c.endswith("_ready")},
            key=lambda p: header.index(f"nodes_{p}_provisioning"),
        )
        samples = []
        for row in reader:
            vals = dict(zip(header, row))
            nodes = {
                p: (
                    int(vals[f"nodes_{p}_provisioning"]),
                    int(vals[f"nodes_{p}_ready"]),
                    int(vals[f"nodes_{p}_draining"]),
                )
                for p in pool_order
            }
            samples.append(MetricSample(
                t=int(vals["t"]),
                demand_millicores=int(vals["demand_millicores"]),
                running_replicas=int(vals["running_replicas"]),
                pending_pods=int(vals["pending_pods"]),
                nodes_by_pool=nodes,
                utilization=float(vals["utilization"]),
                cpu_waste_millicores=int(vals["cpu_waste_millicores"]),
                cumulative_pod_cost=int(vals["cumulative_pod_cost"]),
                cumulative_node_cost=int(vals["cumulative_node_cost"]),
                packing_efficiency=float(vals["packing_efficiency"]),
                utility=float(vals["utility"]),
            ))
    return header, samples


@dataclass
class RunSummary:
    scenario_id: str
    controller: str
    seed: int
    duration: int
    mean_utilization: float
    median_utilization: float
    p95_utilization: float
    max_utilization: float
    max_replicas: int
    total_node_cost: int       # micro-units
    total_pod_cost: int        # micro-units
    time_above_threshold: int  # seconds with utilization > threshold
    utilization_threshold: float
    utility_integral: float    # sum of per-sample utility x sampling interval
    migration_downtime: int    # seconds of capacity deficit during switches
    migrations: int
    fields_order = [
        "scenario_id", "controller", "seed", "duration",
        "mean_utilization", "median_utilization", "p95_utilization", "max_utilization",
        "max_replicas", "total_node_cost", "total_pod_cost",
        "time_above_threshold", "utilization_threshold", "utility_integral",
        "migration_downtime", "migrations",
    ]


def summarize(
    scenario_id: str,
    controller: str,
    seed: int,
    duration: int,
    samples: list[MetricSample],
    sampling_interval: int,
    migration_downtime: int,
    migrations: int,
    total_node_cost: int,
    total_pod_cost: int,
    threshold: float = 0.8,
) -> RunSummary:
    utils = [s.utilization for s in samples] or [0.0]
    ordered = sorted(utils)
    p95 = ordered[min(len(ordered) - 1, max(0, -(-95 * len(ordered) // 100) - 1))]
    return RunSummary(
        scenario_id=scenario_id,
        controller=controller,
        seed=seed,
        duration=duration,
        mean_utilization=round(statistics.fmean(utils), 6),
        median_utilization=round(statistics.median(utils), 6),
        p95_utilization=round(p95, 6),
        max_utilization=round(max(utils), 6),
        max_replicas=max((s.running_replicas for s in samples), default=0),
        total_node_cost=total_node_cost,
        total_pod_cost=total_pod_cost,
        time_above_threshold=sampling_interval * sum(1 for u in utils if u > threshold),
        utilization_threshold=threshold,
        utility_integral=round(sampling_interval * sum(s.utility for s in samples), 6),
        migration_downtime=migration_downtime,
        migrations=migrations,
    )


def write_summary(summary: RunSummary, path: Path) -> None:
    lines = []
    for name in RunSummary.fields_order:
        lines.append(f"{name}: {getattr(summary, name)}")
    path.write_text("\n".join(lines) + "\n")


def read_summary(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in path.read_text().splitlines():
        if ": " in line:
            key, value = line.split(": ", 1)
            out[key] = value
    return out


# ----------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    deltas: dict[str, float]
    sustained_stress_ratio: float   # mean utilization of run B over run A
    peak_load_ratio: float          # max utilization of run B over run A
    text: str
    aligned_rows: list[list[str]] = field(default_factory=list)
    aligned_header: list[str] = field(default_factory=list)


_NUMERIC_SUMMARY_FIELDS = [
    "mean_utilization", "median_utilization", "p95_utilization", "max_utilization",
    "max_replicas", "total_node_cost", "total_pod_cost",
    "time_above_threshold", "utility_integral", "migration_downtime",
]


def compare_runs(run_a: Path, run_b: Path) -> ComparisonReport:
    """Compare two completed run directories produced from the same scenario
    and seed. Deltas are B minus A; ratios are B over A."""
    run_a, run_b = Path(run_a), Path(run_b)
    summary_a = read_summary(run_a / "summary.txt")
    summary_b = read_summary(run_b / "summary.txt")
    if summary_a.get("scenario_id") != summary_b.get("scenario_id"):
        raise ValueError(
            "scenario mismatch: "
            f"{summary_a.get('scenario_id')!r} vs {summary_b.get('scenario_id')!r}"
        )
    if summary_a.get("seed") != summary_b.get("seed"):
        raise ValueError(
            f"seed mismatch: {summary_a.get('seed')} vs {summary_b.get('seed')}"
        )

    deltas = {
        name: float(summary_b[name]) - float(summary_a[name])
        for name in _NUMERIC_SUMMARY_FIELDS
    }
    mean_a = float(summary_a["mean_utilization"])
    max_a = float(summary_a["max_utilization"])
    stress_ratio = float(summary_b["mean_utilization"]) / mean_a if mean_a else 0.0
    peak_ratio = float(summary_b["max_utilization"]) / max_a if max_a else 0.0

    _, samples_a = read_metrics_csv(run_a / "metrics.csv")
    _, samples_b = read_metrics_csv(run_b / "metrics.csv")
    by_t_b = {s.t: s for s in samples_b}
    header = [
        "t", "demand_millicores",
        "utilization_a", "utilization_b",
        "running_replicas_a", "running_replicas_b",
        "pending_pods_a", "pending_pods_b",
        "cumulative_node_cost_a", "cumulative_node_cost_b",
        "cumulative_pod_cost_a", "cumulative_pod_cost_b",
    ]
    rows = []
    for sa in samples_a:
        sb = by_t_b.get(sa.t)
        if sb is None:
            continue
        rows.append([
            str(sa.t), str(sa.demand_millicores),
            f"{sa.utilization:.6f}", f"{sb.utilization:.6f}",
            str(sa.running_replicas), str(sb.running_replicas),
            str(sa.pending_pods), str(sb.pending_pods),
            str(sa.cumulative_node_cost), str(sb.cumulative_node_cost),
            str(sa.cumulative_pod_cost), str(sb.cumulative_pod_cost),
        ])

    lines = [
        f"run A: {summary_a['controller']} | run B: {summary_b['controller']} "
        f"| scenario {summary_a['scenario_id']} seed {summary_a['seed']}",
        "",
        f"{'metric':<28}{'A':>16}{'B':>16}{'delta (B-A)':>16}",
    ]
    for name in _NUMERIC_SUMMARY_FIELDS:
        lines.append(
            f"{name:<28}{summary_a[name]:>16}{summary_b[name]:>16}{deltas[name]:>16.6f}"
        )
    lines += [
        "",
        "headline ratios (interpretation-dependent; definitions documented in README):",
        f"  sustained_stress_ratio (mean util B/A): {stress_ratio:.6f}",
        f"  peak_load_ratio (max util B/A): {peak_ratio:.6f}",
    ]
    return ComparisonReport(
        deltas=deltas,
        sustained_stress_ratio=round(stress_ratio, 6),
        peak_load_ratio=round(peak_ratio, 6),
        text="\n".join(lines) + "\n",
        aligned_rows=rows,
        aligned_header=header,
    )


def write_comparison(report: ComparisonReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "comparison.txt").write_text(report.text)
    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(report.aligned_header)
        writer.writerows(report.aligned_rows)
