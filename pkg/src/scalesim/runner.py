"""Run orchestration: build the cluster from a scenario, drive the event loop,
check invariants live, and emit the run artifacts.

Outputs are buffered in memory and flushed only after a clean completion, so
an aborted run leaves no partial files behind.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .control import (
    ControllerDecision,
    HierarchicalController,
    MigrationPhase,
    ReactiveController,
)
from .engine import ClusterState, EventKind, NodePool, SimEvent
from .invariants import InvariantChecker
from .metrics import (
    CostAccumulator,
    CostModel,
    MetricSample,
    Observer,
    RunSummary,
    summarize,
    to_micro,
    write_metrics_csv,
    write_summary,
)
from .planning import Policy
from .scenario import ScenarioConfig

OUTPUT_FILES = ("events.log", "decisions.log", "metrics.csv", "summary.txt")


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: RunSummary
    samples: list[MetricSample]
    event_lines: list[str]
    decision_lines: list[str]
    out_dir: Path | None = None
    checks_run: int = 0
    completed_migrations: list[dict] = field(default_factory=list)


def format_event(ev: SimEvent) -> str:
    payload = " ".join(f"{k}={v}" for k, v in sorted(ev.payload.items()))
    return f"t={ev.fire_at} kind={ev.kind.value}" + (f" {payload}" if payload else "")


class _DowntimeMeter:
    """Seconds during migrations where some managed workload ran below its
    pre-switch replica floor, integrated over event boundaries."""

    def __init__(self, state: ClusterState):
        self.state = state
        self.seconds = 0
        self._last_t = 0

    def advance(self, now: int, floor: dict[str, int] | None) -> None:
        dt = now - self._last_t
        self._last_t = now
        if dt <= 0 or floor is None:
            return
        for workload_id, want in floor.items():
            if self.state.running_replicas(workload_id) < want:
                self.seconds += dt
                return


def run_scenario(config: ScenarioConfig, out_dir: str | Path | None = None) -> RunResult:
    trace = config.build_trace()
    duration = config.duration if config.duration is not None else trace.duration

    pools = [
        NodePool(
            pool_id=spec.pool_id,
            machine_type=spec.machine_type,
            node_capacity_millicores=spec.capacity,
            cost_rate=spec.cost_rate,
            provisioning_delay=spec.provisioning_delay,
        )
        for spec in config.pools
    ]
    state = ClusterState(pools, pod_startup_delay=config.pod_startup_delay)
    for spec in config.pools:
        for _ in range(spec.initial_nodes):
            state.add_ready_node(spec.pool_id)

    traces = {config.workload_id: trace}
    pod_requests = {config.workload_id: config.pod_request}
    schedule = config.schedule
    active_policy: Policy = config.policies[schedule.active_at(0)]

    mas: HierarchicalController | None = None
    hpa: ReactiveController | None = None
    if config.controller == "mas_h2":
        mas = HierarchicalController(
            policies=config.policies,
            schedule=schedule,
            traces=traces,
            pod_requests=pod_requests,
            other_requests=config.other_requests,
            config=config.mas,
        )
        controller = mas
        state.preferred_pool_id = active_policy.node_pool
        initial = config.initial_replicas
        if initial is None:
            initial = active_policy.min_replicas
        tick_times = range(0, duration + 1, config.mas.control_interval)
    else:
        # hpa_pool is empty when a scenario written for mas_h2 is run with a
        # controller override; fall back to the first pool.
        baseline_pool = config.hpa_pool or config.pools[0].pool_id
        hpa = ReactiveController(
            traces=traces,
            pod_requests=pod_requests,
            pool_id=baseline_pool,
            config=config.hpa,
        )
        controller = hpa
        state.preferred_pool_id = baseline_pool
        initial = config.initial_replicas
        if initial is None:
            initial = config.hpa.min_replicas
        tick_times = range(0, duration, config.hpa.tick_interval)

    # Unmanaged pods exist from the start and occupy whatever fits.
    for req in config.other_requests.items:
        state.create_pod(req.owner, req.millicores, pod_id=req.owner)
    for _ in range(initial):
        state.create_pod(config.workload_id, config.pod_request)
    controller.desired[config.workload_id] = initial
    state.schedule_pending_pods()

    for t in tick_times:
        state.enqueue(t, EventKind.CONTROL_TICK, {"controller": config.controller})
    for t, policy_name in schedule.entries:
        if t <= duration:
            state.enqueue(t, EventKind.POLICY_SWITCH, {"policy": policy_name})
    for t, phase_name in trace.phase_boundaries:
        if t <= duration:
            state.enqueue(t, EventKind.WORKLOAD_PHASE_CHANGE, {"phase": phase_name})
    for t in range(0, duration, config.sampling_interval):
        state.enqueue(t, EventKind.CONTROL_TICK, {"controller": "sampler"})

    cost_model = CostModel(
        node_rate_micro={spec.pool_id: to_micro(spec.cost_rate) for spec in config.pools},
        pod_rate_micro=to_micro(config.pod_cost_rate),
    )
    cost = CostAccumulator(cost_model)
    observer = Observer(
        pod_requests=pod_requests,
        cost=cost,
        normalizers=config.normalizers,
        saturation_ceiling=config.hpa.saturation_ceiling,
    )
    checker = InvariantChecker()
    downtime = _DowntimeMeter(state)

    event_lines: list[str] = []
    decision_lines: list[str] = []

    def record_decision(decision: ControllerDecision) -> None:
        decision_lines.append(json.dumps({
            "t": decision.tick_at,
            "controller": decision.controller,
            "phases": decision.phases,
            "actions": [(a.kind, a.target, a.delta) for a in decision.actions],
        }))

    while state.has_events() and state.peek_time() <= duration:
        t_next = state.peek_time()
        # Accrue costs and downtime at the rates that held before this event.
        cost.advance(state, t_next)
        downtime.advance(t_next, mas.active_floor() if mas else None)

        ev = state.step()
        now = ev.fire_at

        if ev.kind is EventKind.CONTROL_TICK:
            who = ev.payload["controller"]
            if who == "sampler":
                demand = trace.demand_at(now) if now < trace.duration else 0
                active_policy = config.policies[schedule.active_at(now)]
                observer.observe(state, demand, active_policy, now)
            else:
                record_decision(controller.tick(state, now))
        elif ev.kind is EventKind.POLICY_SWITCH:
            if mas is not None:
                record = mas.on_policy_switch(state, now, ev.payload["policy"])
                decision_lines.append(json.dumps({"event": "policy_switch", **record}))

        if mas is not None and mas.migration.phase is not MigrationPhase.IDLE:
            mas.advance_migration(state, now)

        event_lines.append(format_event(ev))
        checker.check(
            state,
            desired=controller.desired,
            migration_active=(
                mas is not None and mas.migration.phase is not MigrationPhase.IDLE
            ),
        )
        checker.check_costs(cost.node_cost, cost.pod_cost)

    cost.advance(state, duration)
    downtime.advance(duration, mas.active_floor() if mas else None)

    migrations = mas.completed_migrations if mas else []
    summary = summarize(
        scenario_id=config.scenario_id,
        controller=config.controller,
        seed=config.seed,
        duration=duration,
        samples=observer.samples,
        sampling_interval=config.sampling_interval,
        migration_downtime=downtime.seconds,
        migrations=len(migrations),
        total_node_cost=cost.node_cost,
        total_pod_cost=cost.pod_cost,
    )

    result = RunResult(
        config=config,
        summary=summary,
        samples=observer.samples,
        event_lines=event_lines,
        decision_lines=decision_lines,
        checks_run=checker.checks_run,
        completed_migrations=migrations,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "events.log").write_text("\n".join(event_lines) + "\n")
        (out_dir / "decisions.log").write_text("\n".join(decision_lines) + "\n")
        write_metrics_csv(observer.samples, state.pool_order, out_dir / "metrics.csv")
        write_summary(summary, out_dir / "summary.txt")
        result.out_dir = out_dir
    return result
