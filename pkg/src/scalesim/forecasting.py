"""Pluggable demand forecasters producing peak-demand estimates over a horizon.

Three transparent models stand behind one interface: a naive last-value
forecaster, a trailing moving average, and a seasonal peak predictor that
replays the quantile of same-phase history. All are deterministic functions
of (history, now, horizon, parameters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Sample = tuple[int, float]


@dataclass(frozen=True)
class Naive:
    pass


@dataclass(frozen=True)
class MovingAverage:
    window: int

    def __post_init__(self) -> None:
        if self.window <= 0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class SeasonalPeak:
    period: int
    quantile: float = 1.0

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("period must be positive")
        if not 0.0 < self.quantile <= 1.0:
            raise ValueError("quantile must be in (0, 1]")


ForecasterKind = Naive | MovingAverage | SeasonalPeak


@dataclass
class Forecast:
    issued_at: int
    horizon_seconds: int
    predicted: list[tuple[int, int]]   # covers (issued_at, issued_at + horizon]
    peak_demand_millicores: int


def forecast(kind: ForecasterKind, history: list[Sample], now: int, horizon: int) -> Forecast:
    """Predict demand for every second in (now, now + horizon]."""
    if not history:
        raise ValueError("history must be non-empty")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if history[-1][0] >= now:
        raise ValueError(f"history reaches t={history[-1][0]}, not strictly before now={now}")

    future = range(now + 1, now + horizon + 1)
    if isinstance(kind, Naive):
        level = _round(history[-1][1])
        predicted = [(t, level) for t in future]
    elif isinstance(kind, MovingAverage):
        tail = [v for _, v in history[-kind.window:]]
        level = _round(sum(tail) / len(tail))
        predicted = [(t, level) for t in future]
    elif isinstance(kind, SeasonalPeak):
        predicted = _seasonal(kind, history, future)
    else:
        raise TypeError(f"unknown forecaster kind {kind!r}")

    peak = max(v for _, v in predicted)
    return Forecast(
        issued_at=now,
        horizon_seconds=horizon,
        predicted=predicted,
        peak_demand_millicores=peak,
    )


def _seasonal(kind: SeasonalPeak, history: list[Sample], future: range) -> list[tuple[int, int]]:
    span = history[-1][0] - history[0][0] + 1
    last = _round(history[-1][1])
    if span < kind.period:
        # Not a full period observed yet; behave like Naive.
        return [(t, last) for t in future]
    by_offset: dict[int, list[float]] = {}
    for t, v in history:
        by_offset.setdefault(t % kind.period, []).append(v)
    predicted = []
    for t in future:
        values = by_offset.get(t % kind.period)
        predicted.append((t, _round(_quantile(values, kind.quantile)) if values else last))
    return predicted


def _quantile(values: list[float], q: float) -> float:
    """Order statistic at index ceil(q*n)-1 (q=1.0 is the max)."""
    ordered = sorted(values)
    idx = min(len(ordered) - 1, max(0, math.ceil(q * len(ordered)) - 1))
    return ordered[idx]


def _round(x: float) -> int:
    return int(round(x))


def smoothed_history(history: list[Sample], half_life: int) -> list[tuple[int, float]]:
    """Exponentially weighted smoothing: half of any level gap closes every
    half_life seconds. Constant input is a fixed point; the output never
    exceeds the input's max nor undercuts its min."""
    if half_life <= 0:
        raise ValueError("half_life must be positive")
    if not history:
        return []
    alpha = 1.0 - 2.0 ** (-1.0 / half_life)
    out: list[tuple[int, float]] = []
    level = float(history[0][1])
    out.append((history[0][0], level))
    for t, v in history[1:]:
        level = alpha * v + (1.0 - alpha) * level
        out.append((t, level))
    return out


def detect_period(values: list[float], min_lag: int = 60, min_correlation: float = 0.5) -> int | None:
    """Dominant autocorrelation lag in [min_lag, len/2], or None when no lag
    correlates at least min_correlation (cold start, aperiodic signals)."""
    n = len(values)
    max_lag = n // 2
    if max_lag < min_lag:
        return None
    x = np.asarray(values, dtype=float)
    best_lag, best_corr = None, min_correlation
    for lag in range(min_lag, max_lag + 1):
        a, b = x[:-lag], x[lag:]
        sa, sb = a.std(), b.std()
        if sa == 0.0 or sb == 0.0:
            continue
        corr = float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))
        if corr > best_corr:
            best_lag, best_corr = lag, corr
    return best_lag
