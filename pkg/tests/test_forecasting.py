"""Forecaster and smoothing tests, including the zero-error seasonal replay."""

import random

import pytest

from scalesim.forecasting import (
    MovingAverage,
    Naive,
    SeasonalPeak,
    detect_period,
    forecast,
    smoothed_history,
)
from scalesim.workload import build_heartbeat_trace


def series(values, start=0):
    return [(start + i, v) for i, v in enumerate(values)]


class TestForecasters:
    def test_naive_flat_line_at_last_value(self):
        fc = forecast(Naive(), series([600, 700, 800]), now=3, horizon=5)
        assert fc.peak_demand_millicores == 800
        assert [v for _, v in fc.predicted] == [800] * 5
        assert [t for t, _ in fc.predicted] == [4, 5, 6, 7, 8]

    def test_moving_average_mean_of_window(self):
        fc = forecast(MovingAverage(window=3), series([200, 600, 800, 1000]), now=4, horizon=3)
        assert fc.peak_demand_millicores == 800

    def test_moving_average_short_history_uses_all(self):
        fc = forecast(MovingAverage(window=10), series([100, 300]), now=2, horizon=2)
        assert fc.peak_demand_millicores == 200

    def test_seasonal_peak_replays_prior_cycle(self):
        # History: one full heartbeat cycle plus change; horizon spans the
        # next peak. The realized next-cycle max is the oracle.
        trace = build_heartbeat_trace(vu_cost=2, noise_seed=1)
        history = [(t, float(d)) for t, d in trace.demand_window(0, 300)]
        fc = forecast(SeasonalPeak(period=300, quantile=1.0), history, now=300, horizon=300)
        realized_peak = max(d for _, d in trace.demand_window(301, 601))
        assert realized_peak == 800
        assert fc.peak_demand_millicores == realized_peak

    def test_seasonal_peak_zero_error_after_one_period(self):
        # Post-first-cycle peaks of the noise-free heartbeat are predicted
        # exactly once one 240 s period of history exists.
        trace = build_heartbeat_trace(vu_cost=2, noise_seed=1)
        for now in (240, 480):
            history = [(t, float(d)) for t, d in trace.demand_window(0, now)]
            fc = forecast(SeasonalPeak(period=240, quantile=0.95), history, now=now, horizon=240)
            realized = max(d for _, d in trace.demand_window(now, now + 240))
            assert fc.peak_demand_millicores == realized == 800

    def test_seasonal_exact_on_perfectly_periodic_trace(self):
        pattern = [100, 400, 900, 400, 100, 50]
        values = pattern * 4
        history = series(values)
        fc = forecast(
            SeasonalPeak(period=6, quantile=1.0), history, now=len(values), horizon=12
        )
        for t, v in fc.predicted:
            assert v == pattern[t % 6]
        assert fc.peak_demand_millicores == 900

    def test_seasonal_falls_back_to_naive_below_one_period(self):
        fc = forecast(SeasonalPeak(period=100, quantile=1.0), series([10, 20, 999]), now=3, horizon=4)
        assert [v for _, v in fc.predicted] == [999] * 4

    def test_peak_equals_max_of_predicted(self):
        rng = random.Random(11)
        for _ in range(20):
            values = [rng.randint(0, 2000) for _ in range(rng.randint(3, 120))]
            kind = rng.choice([
                Naive(),
                MovingAverage(rng.randint(1, 10)),
                SeasonalPeak(rng.randint(2, 30), rng.choice([0.5, 0.9, 0.95, 1.0])),
            ])
            fc = forecast(kind, series(values), now=len(values), horizon=rng.randint(1, 50))
            assert fc.peak_demand_millicores == max(v for _, v in fc.predicted)
            assert len(fc.predicted) == fc.horizon_seconds

    def test_deterministic(self):
        values = series([random.Random(3).randint(0, 999) for _ in range(50)])
        a = forecast(SeasonalPeak(10, 0.9), values, now=50, horizon=20)
        b = forecast(SeasonalPeak(10, 0.9), values, now=50, horizon=20)
        assert a == b

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            forecast(Naive(), [], now=5, horizon=10)

    def test_history_must_precede_now(self):
        with pytest.raises(ValueError):
            forecast(Naive(), series([1, 2, 3]), now=2, horizon=10)

    def test_bad_parameters_rejected(self):
        with pytest.raises(ValueError):
            MovingAverage(0)
        with pytest.raises(ValueError):
            SeasonalPeak(0)
        with pytest.raises(ValueError):
            SeasonalPeak(10, 0.0)
        with pytest.raises(ValueError):
            SeasonalPeak(10, 1.5)


class TestSmoothing:
    def test_constant_series_is_fixed_point(self):
        smoothed = smoothed_history(series([500.0] * 40), half_life=7)
        assert all(v == 500.0 for _, v in smoothed)

    def test_single_spike_attenuated(self):
        values = [100.0] * 20 + [1000.0] + [100.0] * 20
        smoothed = smoothed_history(series(values), half_life=10)
        peak = max(v for _, v in smoothed)
        assert peak < 1000.0
        assert peak > 100.0

    def test_step_closes_half_gap_per_half_life(self):
        half_life = 8
        values = [0.0] + [1000.0] * 100
        smoothed = smoothed_history(series(values), half_life=half_life)
        by_t = dict(smoothed)
        # After exactly k half-lives the remaining gap is 1000 / 2^k.
        for k in (1, 2, 3):
            expected = 1000.0 * (1.0 - 0.5 ** k)
            assert by_t[k * half_life] == pytest.approx(expected, abs=1e-9)

    def test_never_exceeds_max_nor_undercuts_min(self):
        rng = random.Random(23)
        for _ in range(20):
            values = [float(rng.randint(0, 5000)) for _ in range(rng.randint(2, 200))]
            smoothed = smoothed_history(series(values), half_life=rng.randint(1, 60))
            assert max(v for _, v in smoothed) <= max(values)
            assert min(v for _, v in smoothed) >= min(values)

    def test_length_preserved(self):
        smoothed = smoothed_history(series([1.0, 2.0, 3.0]), half_life=5)
        assert len(smoothed) == 3

    def test_bad_half_life_rejected(self):
        with pytest.raises(ValueError):
            smoothed_history(series([1.0]), half_life=0)


class TestPeriodDetection:
    def test_detects_heartbeat_cycle(self):
        trace = build_heartbeat_trace(vu_cost=2, noise_seed=1)
        values = [float(d) for _, d in trace.demand_window(0, 480)]
        assert detect_period(values) == 240

    def test_detects_with_more_history(self):
        trace = build_heartbeat_trace(vu_cost=2, noise_seed=1)
        values = [float(d) for _, d in trace.demand_window(0, 600)]
        assert detect_period(values) == 240

    def test_cold_start_returns_none(self):
        assert detect_period([1.0, 2.0, 3.0]) is None

    def test_aperiodic_returns_none(self):
        rng = random.Random(5)
        values = [float(rng.randint(0, 1000)) for _ in range(400)]
        assert detect_period(values, min_correlation=0.5) is None

    def test_constant_signal_returns_none(self):
        assert detect_period([7.0] * 400) is None
