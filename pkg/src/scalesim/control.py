"""Closed-loop controllers driving the simulated cluster.

HierarchicalController runs the slow strategic/planning/execution cycle:
resolve the active policy, forecast demand per workload, plan replicas and
nodes jointly, then reconcile the cluster (nodes before pods). Policy switches
that change node pool run a two-phase make-before-break migration.

ReactiveController is the fast baseline: a horizontal pod autoscaler driven by
observed utilization against a target, plus a cluster autoscaler that adds a
node when pods sit unschedulable and removes nodes idle for too long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .engine import ClusterState, NodeState, PodState
from .forecasting import (
    MovingAverage,
    Naive,
    SeasonalPeak,
    detect_period,
    forecast,
    smoothed_history,
)
from .planning import (
    NodePlan,
    PodPlan,
    Policy,
    RequestSet,
    pack_ffd,
    plan_nodes,
    plan_replicas,
)
from .workload import DemandTrace


@dataclass
class StrategicSchedule:
    """Scenario-scripted policy timeline: the active policy at time t is the
    last entry at or before t, or the default before any entry."""

    default_policy: str
    entries: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.entries.sort(key=lambda e: e[0])
        times = [at for at, _ in self.entries]
        if len(set(times)) != len(times):
            raise ValueError("strategic schedule entries must have unique times")

    def active_at(self, t: int) -> str:
        name = self.default_policy
        for at, policy_name in self.entries:
            if at <= t:
                name = policy_name
            else:
                break
        return name


class MigrationPhase(Enum):
    IDLE = "Idle"
    PROVISIONING_NEW = "ProvisioningNew"
    MIGRATING_WORKLOAD = "MigratingWorkload"
    DECOMMISSIONING_OLD = "DecommissioningOld"


@dataclass
class MigrationState:
    phase: MigrationPhase = MigrationPhase.IDLE
    from_pool: str = ""
    to_pool: str = ""
    started_at: int = 0
    target_nodes: int = 0
    # Pre-switch planned replicas per workload: the capacity floor that must
    # hold at every instant of the migration.
    floor: dict[str, int] = field(default_factory=dict)
    replacements: dict[str, list[str]] = field(default_factory=dict)
    old_pods: dict[str, list[str]] = field(default_factory=dict)
    terminated_old: int = 0
    pending_switch: str | None = None


@dataclass
class HpaConfig:
    target_utilization: Fraction = Fraction(4, 5)
    min_replicas: int = 1
    max_replicas: int = 20
    scale_down_stabilization: int = 300
    tick_interval: int = 15
    saturation_ceiling: Fraction = Fraction(11, 10)
    ca_trigger_delay: int = 30
    ca_idle_delay: int = 600

    def __post_init__(self) -> None:
        if not 0 < self.target_utilization <= 1:
            raise ValueError("target_utilization must be in (0, 1]")
        if self.min_replicas > self.max_replicas:
            raise ValueError("min_replicas must not exceed max_replicas")


@dataclass
class MasConfig:
    control_interval: int = 300
    horizon: int | None = None              # None -> control_interval
    smoothing_half_life: int = 30
    forecaster: str = "seasonal_peak"       # naive | moving_average | seasonal_peak
    moving_average_window: int = 60
    seasonal_quantile: float = 0.95
    seasonal_period: int | None = None      # None -> autocorrelation detection
    period_min_lag: int = 60
    period_min_correlation: float = 0.5


@dataclass
class Action:
    kind: str     # "pods" | "nodes"
    target: str   # workload id or pool id
    delta: int


@dataclass
class ControllerDecision:
    tick_at: int
    controller: str
    phases: list[dict]
    pod_plans: dict[str, PodPlan] = field(default_factory=dict)
    node_plan: NodePlan | None = None
    actions: list[Action] = field(default_factory=list)


def _terminate_order(pods: list) -> list:
    """Victim order for shrinking a workload: Pending pods first, then the
    youngest bound pods."""
    return sorted(pods, key=lambda p: (0 if p.state is PodState.PENDING else 1, -p.creation_seq))


class HierarchicalController:
    def __init__(
        self,
        policies: dict[str, Policy],
        schedule: StrategicSchedule,
        traces: dict[str, DemandTrace],
        pod_requests: dict[str, int],
        other_requests: RequestSet,
        config: MasConfig,
    ):
        self.policies = policies
        self.schedule = schedule
        self.traces = traces
        self.pod_requests = pod_requests
        self.other_requests = other_requests
        self.config = config
        self.migration = MigrationState()
        self.desired: dict[str, int] = {}
        self.completed_migrations: list[dict] = []
        self._current_policy_name = schedule.default_policy
        # The pool the managed workload lives on (or is migrating onto);
        # a dequeued switch compares against this, not the schedule.
        self._active_pool = policies[schedule.default_policy].node_pool

    # ----------------------------------------------------------------- ticks

    def tick(self, state: ClusterState, now: int) -> ControllerDecision:
        policy = self.policies[self.schedule.active_at(now)]
        self._current_policy_name = policy.name
        state.preferred_pool_id = policy.node_pool
        deferred = self.migration.phase is not MigrationPhase.IDLE
        phases: list[dict] = [
            {"phase": "strategic", "policy": policy.name, "migration": self.migration.phase.value}
        ]

        plans: dict[str, PodPlan] = {}
        wpa: list[dict] = []
        for workload_id in sorted(self.traces):
            trace = self.traces[workload_id]
            end = min(now, trace.duration)
            history = trace.demand_window(0, end)
            if not history:
                wpa.append({"workload": workload_id, "skipped": "no history"})
                continue
            smoothed = smoothed_history(
                [(t, float(d)) for t, d in history], self.config.smoothing_half_life
            )
            kind = self._forecaster_for([v for _, v in smoothed])
            fc = forecast(kind, smoothed, now, self.config.horizon or self.config.control_interval)
            plan = plan_replicas(
                fc.peak_demand_millicores, self.pod_requests[workload_id], policy, workload_id
            )
            plans[workload_id] = plan
            wpa.append({
                "workload": workload_id,
                "forecaster": type(kind).__name__,
                "forecast_peak": fc.peak_demand_millicores,
                "raw_replicas": plan.raw_replicas,
                "planned_replicas": plan.planned_replicas,
            })
        phases.append({"phase": "workload-planning", "plans": wpa})

        decision = ControllerDecision(tick_at=now, controller="mas_h2", phases=phases,
                                      pod_plans=plans)
        if not plans:
            phases.append({"phase": "node-planning", "skipped": "no plans"})
            phases.append({"phase": "execution", "actions": []})
            return decision

        node_plan = plan_nodes(list(plans.values()), self.other_requests, policy)
        current_nodes = len(state.pools[policy.node_pool].live_nodes())
        phases.append({
            "phase": "node-planning",
            "pool": policy.node_pool,
            "required_nodes": node_plan.required_nodes,
            "current_nodes": current_nodes,
        })
        decision.node_plan = node_plan

        if deferred:
            phases.append({"phase": "execution", "deferred": "migration active", "actions": []})
            return decision

        # Node scaling is issued before pod scaling within the same tick.
        if node_plan.required_nodes != current_nodes:
            state.resize_pool(policy.node_pool, node_plan.required_nodes)
            decision.actions.append(
                Action("nodes", policy.node_pool, node_plan.required_nodes - current_nodes)
            )
        for workload_id, plan in sorted(plans.items()):
            delta = plan.planned_replicas - state.replicas(workload_id)
            if delta != 0:
                self._apply_replica_delta(state, workload_id, delta)
                decision.actions.append(Action("pods", workload_id, delta))
            self.desired[workload_id] = plan.planned_replicas
        state.schedule_pending_pods()
        phases.append({
            "phase": "execution",
            "actions": [(a.kind, a.target, a.delta) for a in decision.actions],
        })
        return decision

    def _forecaster_for(self, values: list[float]):
        cfg = self.config
        if cfg.forecaster == "naive":
            return Naive()
        if cfg.forecaster == "moving_average":
            return MovingAverage(cfg.moving_average_window)
        period = cfg.seasonal_period
        if period is None:
            period = detect_period(values, cfg.period_min_lag, cfg.period_min_correlation)
        if period is None:
            return Naive()
        return SeasonalPeak(period=period, quantile=cfg.seasonal_quantile)

    def _apply_replica_delta(self, state: ClusterState, workload_id: str, delta: int) -> None:
        if delta > 0:
            for _ in range(delta):
                state.create_pod(workload_id, self.pod_requests[workload_id])
        else:
            victims = _terminate_order([
                p for p in state.pods_of(workload_id)
                if p.state in (PodState.PENDING, PodState.STARTING, PodState.RUNNING)
            ])
            for pod in victims[: -delta]:
                state.terminate_pod(pod.pod_id)

    # ------------------------------------------------------------- migration

    def on_policy_switch(self, state: ClusterState, now: int, new_policy_name: str) -> dict:
        new = self.policies[new_policy_name]
        if self.migration.phase is not MigrationPhase.IDLE:
            self.migration.pending_switch = new_policy_name
            return {"t": now, "switch": new.name, "migration": "queued (switch in flight)"}
        self._current_policy_name = new.name
        if new.node_pool == self._active_pool:
            return {"t": now, "switch": new.name, "migration": "none (same pool)"}
        return self._begin_migration(state, now, self._active_pool, new)

    def _begin_migration(self, state: ClusterState, now: int, old_pool: str, new: Policy) -> dict:
        floor = {
            w: self.desired.get(w, state.replicas(w)) for w in sorted(self.traces)
        }
        sizing_plans = [
            PodPlan(
                workload_id=w,
                raw_replicas=max(1, floor[w]),
                planned_replicas=max(1, floor[w]),
                basis_peak_millicores=0,
                pod_request_millicores=self.pod_requests[w],
            )
            for w in sorted(floor)
        ]
        node_plan = plan_nodes(sizing_plans, self.other_requests, new)
        self.migration = MigrationState(
            phase=MigrationPhase.PROVISIONING_NEW,
            from_pool=old_pool,
            to_pool=new.node_pool,
            started_at=now,
            target_nodes=node_plan.required_nodes,
            floor=floor,
            old_pods={
                w: [
                    p.pod_id for p in state.pods_of(w)
                    if p.state in (PodState.PENDING, PodState.STARTING, PodState.RUNNING)
                ]
                for w in sorted(floor)
            },
        )
        state.preferred_pool_id = new.node_pool
        self._active_pool = new.node_pool
        state.resize_pool(new.node_pool, node_plan.required_nodes)
        self.advance_migration(state, now)
        return {
            "t": now,
            "switch": new.name,
            "migration": "make-before-break started",
            "from_pool": old_pool,
            "to_pool": new.node_pool,
            "new_pool_nodes": node_plan.required_nodes,
            "floor": dict(self.migration.floor),
        }

    def advance_migration(self, state: ClusterState, now: int) -> None:
        """Move the migration forward as far as current cluster state allows.
        Called after every fired event; phases only ever advance."""
        mig = self.migration
        if mig.phase is MigrationPhase.PROVISIONING_NEW:
            pool = state.pools[mig.to_pool]
            ready = len(pool.ready_nodes())
            if ready >= mig.target_nodes:
                mig.phase = MigrationPhase.MIGRATING_WORKLOAD
                for w in sorted(mig.floor):
                    mig.replacements[w] = [
                        state.create_pod(w, self.pod_requests[w]).pod_id
                        for _ in range(mig.floor[w])
                    ]
                state.schedule_pending_pods()
        if mig.phase is MigrationPhase.MIGRATING_WORKLOAD:
            self._handoff_replicas(state)
            still_old = any(
                state.pods[pid].state
                in (PodState.PENDING, PodState.STARTING, PodState.RUNNING)
                for pods in mig.old_pods.values()
                for pid in pods
            )
            if not still_old:
                mig.phase = MigrationPhase.DECOMMISSIONING_OLD
        if mig.phase is MigrationPhase.DECOMMISSIONING_OLD:
            residual = self._residual_old_pool_nodes(state)
            state.resize_pool(mig.from_pool, residual)
            self.completed_migrations.append({
                "started_at": mig.started_at,
                "completed_at": now,
                "from_pool": mig.from_pool,
                "to_pool": mig.to_pool,
                "floor": dict(mig.floor),
            })
            pending = mig.pending_switch
            self.migration = MigrationState()
            if pending is not None:
                self.on_policy_switch(state, now, pending)

    def _handoff_replicas(self, state: ClusterState) -> None:
        """Per-replica make-before-break: one old pod is released for every
        replacement that reached Running."""
        mig = self.migration
        running_new = sum(
            1 for pods in mig.replacements.values()
            for pid in pods if state.pods[pid].state is PodState.RUNNING
        )
        to_release = running_new - mig.terminated_old
        if to_release <= 0:
            return
        alive_old = _terminate_order([
            state.pods[pid]
            for pods in mig.old_pods.values()
            for pid in pods
            if state.pods[pid].state in (PodState.PENDING, PodState.STARTING, PodState.RUNNING)
        ])
        for pod in alive_old[:to_release]:
            state.terminate_pod(pod.pod_id)
            mig.terminated_old += 1

    def _residual_old_pool_nodes(self, state: ClusterState) -> int:
        old_pool = state.pools[self.migration.from_pool]
        unmanaged = RequestSet()
        for node in old_pool.nodes:
            for pid in sorted(node.bound_pods):
                pod = state.pods[pid]
                if pod.workload_id not in self.traces and pod.state is not PodState.TERMINATING:
                    unmanaged.add(pod.pod_id, pod.cpu_request_millicores)
        if not unmanaged.items:
            return 0
        return pack_ffd(unmanaged, old_pool.node_capacity_millicores).required_nodes

    def active_floor(self) -> dict[str, int] | None:
        """Replica floor that must hold right now, or None outside migrations."""
        if self.migration.phase is MigrationPhase.IDLE:
            return None
        return dict(self.migration.floor)


class ReactiveController:
    """HPA + cluster-autoscaler baseline, ticking on a fast fixed cadence."""

    def __init__(
        self,
        traces: dict[str, DemandTrace],
        pod_requests: dict[str, int],
        pool_id: str,
        config: HpaConfig,
    ):
        self.traces = traces
        self.pod_requests = pod_requests
        self.pool_id = pool_id
        self.config = config
        self.desired: dict[str, int] = {}
        self._below_since: dict[str, int | None] = {w: None for w in traces}
        self._empty_since: dict[str, int] = {}

    def tick(self, state: ClusterState, now: int) -> ControllerDecision:
        cfg = self.config
        phases: list[dict] = []
        decision = ControllerDecision(tick_at=now, controller="hpa_ca", phases=phases)

        hpa_records = []
        for workload_id in sorted(self.traces):
            trace = self.traces[workload_id]
            demand = trace.demand_at(now) if now < trace.duration else 0
            running = state.running_replicas(workload_id)
            current = state.replicas(workload_id)
            request = self.pod_requests[workload_id]
            if running > 0:
                utilization = min(Fraction(demand, running * request), cfg.saturation_ceiling)
            else:
                utilization = Fraction(0)
            # Pods without a node yet report no usage, so the scale-up basis
            # is the running count; the result reconciles the full replica set.
            desired = math.ceil(running * utilization / cfg.target_utilization)
            desired = max(cfg.min_replicas, min(cfg.max_replicas, desired))
            applied = current
            if desired > current:
                for _ in range(desired - current):
                    state.create_pod(workload_id, request)
                self._below_since[workload_id] = None
                applied = desired
            elif desired < current:
                since = self._below_since[workload_id]
                if since is None:
                    since = now
                    self._below_since[workload_id] = now
                if now - since >= cfg.scale_down_stabilization:
                    victims = _terminate_order([
                        p for p in state.pods_of(workload_id)
                        if p.state in (PodState.PENDING, PodState.STARTING, PodState.RUNNING)
                    ])
                    for pod in victims[: current - desired]:
                        state.terminate_pod(pod.pod_id)
                    self._below_since[workload_id] = None
                    applied = desired
            else:
                self._below_since[workload_id] = None
            if applied != current:
                decision.actions.append(Action("pods", workload_id, applied - current))
            self.desired[workload_id] = applied
            hpa_records.append({
                "workload": workload_id,
                "demand": demand,
                "running": running,
                "utilization": float(utilization),
                "desired": desired,
                "applied": applied,
            })
        phases.append({"phase": "hpa", "workloads": hpa_records})

        ca_record = self._cluster_autoscaler(state, now)
        for action in ca_record.pop("_actions"):
            decision.actions.append(action)
        phases.append({"phase": "ca", **ca_record})
        state.schedule_pending_pods()
        return decision

    def _cluster_autoscaler(self, state: ClusterState, now: int) -> dict:
        cfg = self.config
        pool = state.pools[self.pool_id]
        actions: list[Action] = []
        record: dict = {"_actions": actions}

        pending_ages = [
            now - p.pending_since
            for p in state.pods.values() if p.state is PodState.PENDING
        ]
        provisioning = any(n.state is NodeState.PROVISIONING for n in pool.nodes)
        if pending_ages and max(pending_ages) > cfg.ca_trigger_delay and not provisioning:
            # One node at a time; wait for in-flight capacity before adding more.
            state.resize_pool(self.pool_id, len(pool.live_nodes()) + 1)
            actions.append(Action("nodes", self.pool_id, 1))
            record["added_node"] = True

        ready = pool.ready_nodes()
        ready_ids = {n.node_id for n in ready}
        for stale in [nid for nid in self._empty_since if nid not in ready_ids]:
            del self._empty_since[stale]
        idle_expired = False
        for node in ready:
            if node.bound_pods:
                self._empty_since.pop(node.node_id, None)
                continue
            since = self._empty_since.setdefault(node.node_id, now)
            if now - since > cfg.ca_idle_delay:
                idle_expired = True
        if idle_expired and len(pool.live_nodes()) > 1:
            # Shrink by one; the resize victim rule picks an empty node.
            state.resize_pool(self.pool_id, len(pool.live_nodes()) - 1)
            actions.append(Action("nodes", self.pool_id, -1))
            record["removed_idle_node"] = True
        return record
