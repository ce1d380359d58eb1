"""Scenario files: a flat key = value format with dotted groups.

Unknown keys are hard errors, and every parse or validation error names the
offending field and line. See docs/scenario-format.md for the annotated
reference example.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .control import HpaConfig, MasConfig, StrategicSchedule
from .errors import ScenarioError
from .metrics import Normalizers
from .planning import Policy, RequestSet
from .workload import (
    DemandTrace,
    Ramp,
    WorkloadPhase,
    build_trace,
    build_flash_sale_trace,
    build_heartbeat_trace,
    FLASH_SALE_NOISY_PHASES,
)

WORKLOADS = ("heartbeat", "flash_sale", "custom")
CONTROLLERS = ("mas_h2", "hpa_ca")


@dataclass
class PoolSpec:
    pool_id: str
    machine_type: str = "e2-medium"
    capacity: int = 1000
    cost_rate: float = 1.0
    provisioning_delay: int = 120
    initial_nodes: int = 0


@dataclass
class ScenarioConfig:
    scenario_id: str
    workload: str
    controller: str
    seed: int = 1
    vu_cost: float = 2.0
    noise_amplitude: float | None = None   # None -> workload's own default
    pod_request: int = 250
    workload_id: str = "web"
    pod_startup_delay: int = 10
    sampling_interval: int = 5
    duration: int | None = None
    initial_replicas: int | None = None
    pod_cost_rate: float = 0.1
    pools: list[PoolSpec] = field(default_factory=list)
    policies: dict[str, Policy] = field(default_factory=dict)
    schedule: StrategicSchedule | None = None
    mas: MasConfig = field(default_factory=MasConfig)
    hpa: HpaConfig = field(default_factory=HpaConfig)
    hpa_pool: str = ""
    other_requests: RequestSet = field(default_factory=RequestSet)
    normalizers: Normalizers = field(default_factory=Normalizers)
    custom_phases: list[WorkloadPhase] = field(default_factory=list)
    custom_noisy_phases: set[int] | None = None

    def build_trace(self) -> DemandTrace:
        if self.workload == "heartbeat":
            amplitude = self.noise_amplitude if self.noise_amplitude is not None else 0.0
            return build_heartbeat_trace(
                self.vu_cost, self.seed, amplitude, workload_id=self.workload_id
            )
        if self.workload == "flash_sale":
            amplitude = self.noise_amplitude if self.noise_amplitude is not None else 0.10
            return build_flash_sale_trace(
                self.vu_cost, self.seed, amplitude, workload_id=self.workload_id
            )
        amplitude = self.noise_amplitude if self.noise_amplitude is not None else 0.0
        return build_trace(
            self.workload_id, self.custom_phases, self.vu_cost, self.seed,
            noise_amplitude=amplitude, noisy_phases=self.custom_noisy_phases,
        )


def default_mas_pools() -> list[PoolSpec]:
    return [
        PoolSpec("staging", "e2-medium", 1000, 1.0, 120, initial_nodes=1),
        PoolSpec("performance", "n2-standard-2", 2000, 3.0, 120, initial_nodes=0),
    ]


def default_hpa_pools() -> list[PoolSpec]:
    return [PoolSpec("baseline", "e2-medium", 1000, 1.0, 120, initial_nodes=1)]


def _default_policies(controller: str, pools: dict[str, PoolSpec]) -> dict[str, Policy]:
    if controller == "mas_h2":
        if "staging" not in pools or "performance" not in pools:
            raise ScenarioError(
                "policy.* entries are required when mas_h2 runs on custom pools"
            )
        return {
            "COST_SAVING": Policy(
                "COST_SAVING", "staging", pools["staging"].capacity, 1, 0.2, 0.8
            ),
            "PERFORMANCE": Policy(
                "PERFORMANCE", "performance", pools["performance"].capacity, 2, 0.8, 0.2
            ),
        }
    pool_id = next(iter(pools))
    return {"BASELINE": Policy("BASELINE", pool_id, pools[pool_id].capacity, 1, 0.5, 0.5)}


# ------------------------------------------------------------------- parsing

_SCALAR_KEYS = {
    "workload": str,
    "controller": str,
    "seed": int,
    "vu_cost": float,
    "noise_amplitude": float,
    "pod_request": int,
    "workload_id": str,
    "pod_startup_delay": int,
    "sampling_interval": int,
    "duration": int,
    "initial_replicas": int,
    "pod_cost_rate": float,
    "perf_scale": float,
    "cost_scale": float,
}

_POOL_KEYS = {
    "machine_type": str,
    "capacity": int,
    "cost_rate": float,
    "provisioning_delay": int,
    "initial_nodes": int,
}

_POLICY_KEYS = {"pool": str, "min_replicas": int, "w_perf": float, "w_cost": float}

_MAS_KEYS = {
    "control_interval": int,
    "horizon": int,
    "smoothing_half_life": int,
    "forecaster": str,
    "moving_average_window": int,
    "seasonal_quantile": float,
    "seasonal_period": int,
    "period_min_lag": int,
    "period_min_correlation": float,
}

_HPA_KEYS = {
    "target_utilization": Fraction,
    "min_replicas": int,
    "max_replicas": int,
    "scale_down_stabilization": int,
    "tick_interval": int,
    "saturation_ceiling": Fraction,
    "ca_trigger_delay": int,
    "ca_idle_delay": int,
    "pool": str,
}

_PHASE_KEYS = {"duration": int, "target_vus": int, "ramp": str, "noisy": bool}


def _convert(raw: str, typ, key: str, line: int):
    try:
        if typ is bool:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(f"field {key!r}: cannot parse {raw!r} as {typ.__name__}", line)


def parse_scenario_text(text: str, scenario_id: str) -> ScenarioConfig:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {rawline.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ScenarioError(f"empty key or value in {rawline.strip()!r}", lineno)
        if key in entries:
            raise ScenarioError(f"duplicate key {key!r} (first set on line {entries[key][1]})", lineno)
        entries[key] = (value, lineno)

    scalars: dict = {}
    pools: dict[str, PoolSpec] = {}
    policy_fields: dict[str, dict] = {}
    policy_lines: dict[str, int] = {}
    schedule_default: str | None = None
    schedule_entries: list[tuple[int, str, int]] = []
    mas_kwargs: dict = {}
    hpa_kwargs: dict = {}
    hpa_pool = ""
    other = RequestSet()
    phase_fields: dict[int, dict] = {}

    for key, (value, line) in entries.items():
        parts = key.split(".")
        if key in _SCALAR_KEYS:
            scalars[key] = _convert(value, _SCALAR_KEYS[key], key, line)
        elif parts[0] == "pool" and len(parts) == 3 and parts[2] in _POOL_KEYS:
            pool = pools.setdefault(parts[1], PoolSpec(pool_id=parts[1]))
            setattr(pool, parts[2], _convert(value, _POOL_KEYS[parts[2]], key, line))
        elif parts[0] == "policy" and len(parts) == 3 and parts[2] in _POLICY_KEYS:
            policy_fields.setdefault(parts[1], {})[parts[2]] = _convert(
                value, _POLICY_KEYS[parts[2]], key, line
            )
            policy_lines.setdefault(parts[1], line)
        elif key == "schedule.default":
            schedule_default = value
        elif parts[0] == "schedule" and len(parts) == 3 and parts[1] == "at":
            at = _convert(parts[2], int, key, line)
            schedule_entries.append((at, value, line))
        elif parts[0] == "mas" and len(parts) == 2 and parts[1] in _MAS_KEYS:
            mas_kwargs[parts[1]] = _convert(value, _MAS_KEYS[parts[1]], key, line)
        elif parts[0] == "hpa" and len(parts) == 2 and parts[1] in _HPA_KEYS:
            if parts[1] == "pool":
                hpa_pool = value
            else:
                hpa_kwargs[parts[1]] = _convert(value, _HPA_KEYS[parts[1]], key, line)
        elif parts[0] == "other" and len(parts) == 2:
            other.add(parts[1], _convert(value, int, key, line))
        elif parts[0] == "phase" and len(parts) == 3 and parts[2] in _PHASE_KEYS:
            idx = _convert(parts[1], int, key, line)
            phase_fields.setdefault(idx, {"_line": line})[parts[2]] = _convert(
                value, _PHASE_KEYS[parts[2]], key, line
            )
        else:
            raise ScenarioError(f"unknown field {key!r}", line)

    for required in ("workload", "controller"):
        if required not in scalars:
            raise ScenarioError(f"missing required field {required!r}")
    if scalars["workload"] not in WORKLOADS:
        raise ScenarioError(
            f"field 'workload': {scalars['workload']!r} is not one of {WORKLOADS}",
            entries["workload"][1],
        )
    if scalars["controller"] not in CONTROLLERS:
        raise ScenarioError(
            f"field 'controller': {scalars['controller']!r} is not one of {CONTROLLERS}",
            entries["controller"][1],
        )

    controller = scalars["controller"]
    if not pools:
        pools = {
            p.pool_id: p
            for p in (default_mas_pools() if controller == "mas_h2" else default_hpa_pools())
        }

    policies: dict[str, Policy] = {}
    for name, fields_ in policy_fields.items():
        line = policy_lines[name]
        if "pool" not in fields_:
            raise ScenarioError(f"policy {name!r} missing 'pool'", line)
        if fields_["pool"] not in pools:
            raise ScenarioError(
                f"field 'policy.{name}.pool': undefined pool {fields_['pool']!r}", line
            )
        w_perf = fields_.get("w_perf")
        w_cost = fields_.get("w_cost")
        if w_perf is None and w_cost is None:
            w_perf = w_cost = 0.5
        elif w_perf is None:
            w_perf = round(1.0 - w_cost, 9)
        elif w_cost is None:
            w_cost = round(1.0 - w_perf, 9)
        try:
            policies[name] = Policy(
                name=name,
                node_pool=fields_["pool"],
                node_capacity_millicores=pools[fields_["pool"]].capacity,
                min_replicas=fields_.get("min_replicas", 1),
                w_perf=w_perf,
                w_cost=w_cost,
            )
        except ValueError as exc:
            raise ScenarioError(f"policy {name!r}: {exc}", line)
    if not policies:
        policies = _default_policies(controller, pools)

    if schedule_default is None:
        schedule_default = next(iter(policies))
    if schedule_default not in policies:
        line = entries.get("schedule.default", ("", 0))[1] or None
        raise ScenarioError(
            f"field 'schedule.default': undefined policy {schedule_default!r}", line
        )
    for at, name, line in schedule_entries:
        if name not in policies:
            raise ScenarioError(f"field 'schedule.at.{at}': undefined policy {name!r}", line)
    if schedule_entries and controller != "mas_h2":
        raise ScenarioError(
            "schedule.at entries require controller = mas_h2",
            schedule_entries[0][2],
        )
    schedule = StrategicSchedule(
        default_policy=schedule_default,
        entries=[(at, name) for at, name, _ in schedule_entries],
    )

    if controller == "hpa_ca":
        if not hpa_pool:
            hpa_pool = next(iter(pools))
        if hpa_pool not in pools:
            raise ScenarioError(
                f"field 'hpa.pool': undefined pool {hpa_pool!r}", entries["hpa.pool"][1]
            )

    phases: list[WorkloadPhase] = []
    noisy: set[int] = set()
    if scalars["workload"] == "custom":
        if not phase_fields:
            raise ScenarioError("workload = custom requires phase.N.* entries")
        for i, idx in enumerate(sorted(phase_fields)):
            fields_ = phase_fields[idx]
            line = fields_.pop("_line")
            if "duration" not in fields_ or "target_vus" not in fields_:
                raise ScenarioError(
                    f"phase.{idx} needs both 'duration' and 'target_vus'", line
                )
            ramp_raw = fields_.get("ramp", "linear")
            if ramp_raw not in ("linear", "step"):
                raise ScenarioError(
                    f"field 'phase.{idx}.ramp': {ramp_raw!r} is not linear|step", line
                )
            phases.append(WorkloadPhase(
                name=f"phase-{idx}",
                duration_seconds=fields_["duration"],
                target_vus=fields_["target_vus"],
                ramp=Ramp.STEP if ramp_raw == "step" else Ramp.LINEAR,
            ))
            if fields_.get("noisy"):
                noisy.add(i)
    elif phase_fields:
        line = min(f["_line"] for f in phase_fields.values())
        raise ScenarioError("phase.N.* entries are only valid for workload = custom", line)

    try:
        mas = MasConfig(**mas_kwargs)
        hpa = HpaConfig(**hpa_kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc))

    config = ScenarioConfig(
        scenario_id=scenario_id,
        workload=scalars["workload"],
        controller=controller,
        seed=scalars.get("seed", 1),
        vu_cost=scalars.get("vu_cost", 2.0),
        noise_amplitude=scalars.get("noise_amplitude"),
        pod_request=scalars.get("pod_request", 250),
        workload_id=scalars.get("workload_id", "web"),
        pod_startup_delay=scalars.get("pod_startup_delay", 10),
        sampling_interval=scalars.get("sampling_interval", 5),
        duration=scalars.get("duration"),
        initial_replicas=scalars.get("initial_replicas"),
        pod_cost_rate=scalars.get("pod_cost_rate", 0.1),
        pools=[pools[p] for p in pools],
        policies=policies,
        schedule=schedule,
        mas=mas,
        hpa=hpa,
        hpa_pool=hpa_pool,
        other_requests=other,
        normalizers=Normalizers(
            perf_scale=scalars.get("perf_scale", 1.0),
            cost_scale=scalars.get("cost_scale", 5.0),
        ),
        custom_phases=phases,
        custom_noisy_phases=noisy if noisy else None,
    )
    _validate(config, entries)
    return config


def _validate(config: ScenarioConfig, entries: dict[str, tuple[str, int]]) -> None:
    def line_of(key: str) -> int | None:
        return entries.get(key, ("", None))[1]

    if config.pod_request <= 0:
        raise ScenarioError("field 'pod_request': must be positive", line_of("pod_request"))
    if config.vu_cost <= 0:
        raise ScenarioError("field 'vu_cost': must be positive", line_of("vu_cost"))
    if config.noise_amplitude is not None and not 0 <= config.noise_amplitude < 1:
        raise ScenarioError(
            "field 'noise_amplitude': must be in [0, 1)", line_of("noise_amplitude")
        )
    if config.sampling_interval <= 0:
        raise ScenarioError(
            "field 'sampling_interval': must be positive", line_of("sampling_interval")
        )
    for policy in config.policies.values():
        if config.pod_request > policy.node_capacity_millicores:
            raise ScenarioError(
                f"pod_request {config.pod_request}m exceeds capacity of pool "
                f"{policy.node_pool!r} ({policy.node_capacity_millicores}m)",
                line_of("pod_request"),
            )
    pool_caps = {p.pool_id: p.capacity for p in config.pools}
    for req in config.other_requests.items:
        if req.millicores > max(pool_caps.values()):
            raise ScenarioError(
                f"field 'other.{req.owner}': request {req.millicores}m exceeds "
                "every pool's node capacity",
                line_of(f"other.{req.owner}"),
            )
        if req.owner == config.workload_id:
            raise ScenarioError(
                f"field 'other.{req.owner}': owner collides with managed workload id",
                line_of(f"other.{req.owner}"),
            )
    trace_len = config.build_trace().duration
    if config.duration is not None and config.duration < trace_len:
        raise ScenarioError(
            f"field 'duration': {config.duration} is shorter than the "
            f"workload trace ({trace_len}s)",
            line_of("duration"),
        )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario_text(path.read_text(), scenario_id=path.stem)
