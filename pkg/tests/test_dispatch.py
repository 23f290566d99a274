import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hnl.data import SyntheticSpec, synthesize_energy
from hnl.dispatch import (
    BatterySpec,
    ComplementarityError,
    DispatchInfeasible,
    GeneratorSpec,
    SystemSpec,
    day_ahead_pipeline,
    day_ahead_schedule,
    default_system,
    integrated_day_ahead,
    integrated_schedule,
    intraday_battery,
    load_system,
    pwl_linearize,
    realtime_imbalance,
    realtime_settle,
    save_system,
    scale_wind,
)
from hnl.metrics import block_downsample

SYSTEM = default_system()


@pytest.fixture(scope="module")
def day():
    d = synthesize_energy(SyntheticSpec(duration=2, seed=3))
    load = d["load"].values[:288]
    wind = scale_wind(d["wind"].values[:288], 100.0, 0.5, load.max())
    return load, wind


# ---------------------------------------------------------------- PWL costs

def test_pwl_linear_cost_is_one_segment():
    pwl = pwl_linearize(0.0, 3.0, 1.0, 50.0, K=8)
    assert pwl.K == 1
    P = np.linspace(0, 50, 11)
    np.testing.assert_allclose(pwl.evaluate(P), 1.0 + 3.0 * P)


@pytest.mark.parametrize("K", [1, 2, 5, 8, 16])
def test_pwl_matches_at_breakpoints_and_obeys_bound(K):
    pwl = pwl_linearize(0.04, 2.0, 5.0, 120.0, K)
    knots = np.arange(K + 1) * pwl.width
    np.testing.assert_allclose(pwl.evaluate(knots), pwl.quadratic(knots), rtol=1e-12)
    P = np.linspace(0, 120, 4001)
    err = pwl.evaluate(P) - pwl.quadratic(P)
    assert err.min() >= -1e-9  # chords lie above a convex function
    assert err.max() <= pwl.error_bound + 1e-9
    assert err.max() == pytest.approx(0.04 * (120.0 / K) ** 2 / 4, rel=1e-3)


def test_pwl_doubling_segments_quarters_error():
    e = [pwl_linearize(0.1, 0.0, 0.0, 10.0, K).error_bound for K in (4, 8, 16)]
    assert e[1] == pytest.approx(e[0] / 4) and e[2] == pytest.approx(e[1] / 4)


def test_pwl_rejects_concave():
    with pytest.raises(ValueError):
        pwl_linearize(-1.0, 0.0, 0.0, 1.0)


# ---------------------------------------------------------------- day-ahead

def test_zero_load_costs_nothing():
    s = day_ahead_schedule(np.zeros(24), SYSTEM)
    assert s.total_cost == pytest.approx(0.0, abs=1e-9)


def test_over_capacity_is_infeasible():
    L = np.full(24, 100.0)
    L[5] = SYSTEM.total_capacity + SYSTEM.battery.power + 1.0
    with pytest.raises(DispatchInfeasible) as info:
        day_ahead_schedule(L, SYSTEM)
    assert info.value.report["steps"] == [5]


def test_day_ahead_constraints(day):
    load, _ = day
    L = block_downsample(load, 12, 1)
    s = day_ahead_schedule(L, SYSTEM)
    np.testing.assert_allclose(s.balance_residual(L), 0.0, atol=1e-8)
    assert s.complementarity().max() <= 1e-6
    bat = SYSTEM.battery
    assert np.all(s.soc >= bat.soc_low - 1e-9) and np.all(s.soc <= bat.soc_high + 1e-9)
    for j, g in enumerate(SYSTEM.generators):
        assert np.all(np.diff(s.generators[:, j]) <= g.ramp_up + 1e-8)
        assert np.all(-np.diff(s.generators[:, j]) <= g.ramp_down + 1e-8)
        assert np.all(s.generators[:, j] <= g.capacity + 1e-8)
    soc = np.concatenate([[bat.soc_init], s.soc])
    np.testing.assert_allclose(np.diff(soc) * bat.capacity,
                               bat.eta_c * s.charge - s.discharge / bat.eta_d, atol=1e-8)


def test_day_ahead_backends_agree(day):
    L = block_downsample(day[0], 12, 1)
    a = day_ahead_schedule(L, SYSTEM, backend="simplex")
    b = day_ahead_schedule(L, SYSTEM, backend="highs")
    assert a.total_cost == pytest.approx(b.total_cost, rel=1e-9)


def test_day_ahead_grid_search_oracle():
    """Three steps, one generator, brute force over the battery's net output."""
    gen = GeneratorSpec(0.05, 2.0, 0.0, 100.0, 40.0, 40.0)
    bat = BatterySpec(capacity=20.0, soc_low=0.2, soc_high=0.8, soc_init=0.5,
                      eta_c=0.9, eta_d=0.9, power=10.0, degradation=0.3)
    system = SystemSpec((gen,), bat, segments=4)
    L = np.array([30.0, 80.0, 50.0])
    lp = day_ahead_schedule(L, system).total_cost

    pwl = pwl_linearize(gen.a, gen.b, gen.c, gen.capacity, system.segments)
    grid = np.arange(-10.0, 10.0 + 1e-12, 0.125)
    u = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), -1).reshape(-1, 3)  # discharge - charge
    P = L - u
    pd, pc = np.maximum(u, 0), np.maximum(-u, 0)
    soc = bat.soc_init + np.cumsum(bat.eta_c * pc - pd / bat.eta_d, axis=1) / bat.capacity
    ok = ((P >= 0).all(1) & (P <= gen.capacity).all(1) & (np.abs(np.diff(P, axis=1)) <= 40.0).all(1)
          & (soc >= bat.soc_low - 1e-12).all(1) & (soc <= bat.soc_high + 1e-12).all(1))
    cost = pwl.evaluate(P).sum(1) + bat.degradation * np.sum(bat.eta_c * pc + pd / bat.eta_d, axis=1)
    best = cost[ok].min()
    assert lp <= best + 1e-9
    # Largest marginal slope times grid step bounds the discretisation gap.
    assert best - lp <= 3 * 0.125 * (pwl.slopes.max() + bat.degradation / bat.eta_d)


# ---------------------------------------------------------------- real-time

def test_perfect_forecast_identity(day):
    L = block_downsample(day[0], 12, 1)
    r = day_ahead_pipeline(L, L, SYSTEM)
    assert abs(r.c_rt - r.c_da) / r.c_da <= 1e-6
    assert abs(r.additional_cost) <= 1e-6 * r.c_da
    assert r.flags == []


def test_perturbed_forecast_costs_more(day):
    L = block_downsample(day[0], 12, 1)
    r = day_ahead_pipeline(L * 1.01, L, SYSTEM)
    assert r.additional_cost > 0


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from([0.01, 0.03, 0.1]))
def test_additional_cost_non_negative(seed, sigma):
    rng = np.random.default_rng(seed)
    L = 120 + 60 * np.sin(np.arange(24) * 2 * np.pi / 24) + rng.normal(0, 5, 24)
    F = L * (1 + sigma * rng.normal(size=24))
    assert day_ahead_pipeline(F, L, SYSTEM).additional_cost >= -1e-6


def test_realtime_falls_back_to_imbalance(day):
    L = block_downsample(day[0], 12, 1)
    s = day_ahead_schedule(L, SYSTEM)
    rt = realtime_settle(s, L * 1.5, SYSTEM)
    assert rt.status == "flagged" and rt.flags
    assert rt.costs["imbalance"] > 0
    np.testing.assert_allclose(rt.balance_residual(L * 1.5), 0.0, atol=1e-7)


def test_realtime_length_mismatch(day):
    L = block_downsample(day[0], 12, 1)
    with pytest.raises(ValueError):
        realtime_settle(day_ahead_schedule(L, SYSTEM), L[:-1], SYSTEM)


def test_simultaneous_charge_and_discharge_detected():
    from hnl.dispatch import _check_complementarity

    x = np.array([0.5, 0.5, 0.0, 1e-9])
    with pytest.raises(ComplementarityError) as info:
        _check_complementarity(x, np.array([0, 2]), np.array([1, 3]), "test", hard=True)
    assert info.value.steps == [0]
    assert _check_complementarity(x, np.array([0, 2]), np.array([1, 3]), "test", hard=False).tolist() == [0]


# ---------------------------------------------------------------- wind stages

def test_integrated_day_ahead_curtails_excess_wind():
    L = np.full(24, 50.0)
    W = np.full(24, 80.0)
    s = integrated_day_ahead(L, W, SYSTEM)
    np.testing.assert_allclose(s.wind_used, 50.0, atol=1e-8)
    np.testing.assert_allclose(s.curtailed, 30.0, atol=1e-8)
    np.testing.assert_allclose(s.generators, 0.0, atol=1e-8)
    assert s.costs["wind"] == pytest.approx(24 * 30.0 * SYSTEM.wind_penalty)


def test_free_curtailment_prices_nothing():
    free = SystemSpec(SYSTEM.generators, SYSTEM.battery, wind_penalty=0.0)
    s = integrated_day_ahead(np.full(24, 50.0), np.full(24, 80.0), free)
    assert s.costs["wind"] == 0.0 and s.total_cost == pytest.approx(0.0, abs=1e-9)


def test_zero_wind_matches_plain_generation(day):
    L = block_downsample(day[0], 12, 1)
    a = integrated_day_ahead(L, np.zeros(24), SYSTEM)
    no_bat = SystemSpec(SYSTEM.generators, BatterySpec(100.0, 0.1, 0.9, 0.5, 0.95, 0.95, 0.0, 0.5))
    b = day_ahead_schedule(L, no_bat)
    assert a.total_cost == pytest.approx(b.total_cost, rel=1e-9)


def test_intraday_windows_chain_soc(day):
    load, wind = day
    da = integrated_day_ahead(block_downsample(load, 12, 1), block_downsample(wind, 12, 1), SYSTEM)
    idy = intraday_battery(da, load * 1.02, wind * 0.95, SYSTEM, on_infeasible="slack")
    assert idy.N == 288
    assert idy.complementarity().max() <= 1e-6
    bat = SYSTEM.battery
    soc = np.concatenate([[bat.soc_init], idy.soc])
    dt = 1 / 12
    np.testing.assert_allclose(np.diff(soc) * bat.capacity,
                               dt * (bat.eta_c * idy.charge - idy.discharge / bat.eta_d), atol=1e-9)
    # Generators hold their hourly set points across each hour.
    np.testing.assert_array_equal(idy.generators, np.repeat(da.generators, 12, axis=0))


def test_intraday_rejects_misaligned_windows(day):
    load, wind = day
    da = integrated_day_ahead(block_downsample(load, 12, 1), block_downsample(wind, 12, 1), SYSTEM)
    with pytest.raises(ValueError):
        intraday_battery(da, load, wind, SYSTEM, window_hours=5.0)
    with pytest.raises(ValueError):
        intraday_battery(da, load[:-12], wind[:-12], SYSTEM)


def test_intraday_infeasible_window_modes(day):
    load, wind = day
    da = integrated_day_ahead(block_downsample(load, 12, 1), block_downsample(wind, 12, 1), SYSTEM)
    spike = load.copy()
    spike[60:72] += 500.0
    with pytest.raises(DispatchInfeasible) as info:
        intraday_battery(da, spike, wind, SYSTEM, on_infeasible="raise")
    assert info.value.report["window"] == 2
    idy = intraday_battery(da, spike, wind, SYSTEM, on_infeasible="slack")
    assert idy.status == "flagged" and idy.costs["imbalance"] > 0


def test_imbalance_closed_form():
    gens = (GeneratorSpec(0.0, 1.0, 0.0, 100.0, 100.0, 100.0),)
    system = SystemSpec(gens, BatterySpec(10.0, 0.0, 1.0, 0.5, 0.9, 0.9, 0.0, 0.0),
                        wind_penalty=5.0, price_pos=10.0, price_neg=15.0)
    da = integrated_day_ahead(np.full(1, 40.0), np.full(1, 10.0), system)
    idy = intraday_battery(da, np.full(12, 40.0), np.full(12, 10.0), system, window_hours=1.0)
    # Short by 5 with no wind surplus: all shortfall is bought.
    rt = realtime_imbalance(idy, np.full(12, 45.0), np.full(12, 10.0), system)
    np.testing.assert_allclose(rt.imbalance_pos, 5.0, atol=1e-9)
    np.testing.assert_allclose(rt.imbalance_neg, 0.0, atol=1e-9)
    # Long by 3 with wind available: curtail wind (5) rather than sell surplus (15).
    rt = realtime_imbalance(idy, np.full(12, 37.0), np.full(12, 10.0), system)
    np.testing.assert_allclose(rt.curtailed, 3.0, atol=1e-9)
    np.testing.assert_allclose(rt.imbalance_neg, 0.0, atol=1e-9)
    assert rt.costs["wind"] == pytest.approx(3.0 * 5.0, rel=1e-9)  # 12 steps of 1/12 h
    np.testing.assert_allclose(np.minimum(rt.imbalance_pos, rt.imbalance_neg), 0.0)


def test_integrated_perfect_information(day):
    load, wind = day
    lo, wo = block_downsample(load, 12, 1), block_downsample(wind, 12, 1)
    res = integrated_schedule(lo, wo, load, wind, load, wind, SYSTEM)
    assert res.realtime.imbalance_pos.max() <= 1e-6
    assert res.realtime.imbalance_neg.max() <= 1e-6
    assert res.realtime.complementarity().max() <= 1e-6
    assert res.total_cost == pytest.approx(res.intraday.total_cost, rel=1e-9)


# ---------------------------------------------------------------- I/O

def test_schedule_csv_columns(day):
    s = day_ahead_schedule(block_downsample(day[0], 12, 1), SYSTEM)
    lines = s.to_csv().splitlines()
    assert lines[0] == "step,P1,P2,P3,Pc,Pd,SOC,W,Wc,Pp,Pn"
    assert len(lines) == 25
    assert "total" in s.summary()


def test_system_yaml_round_trip(tmp_path):
    path = save_system(SYSTEM, tmp_path / "system.yaml")
    assert load_system(path) == SYSTEM
    d = SYSTEM.to_dict()
    d["surprise"] = 1
    with pytest.raises(ValueError):
        SystemSpec.from_dict(d)


@pytest.mark.parametrize("kw", [dict(soc_low=0.6), dict(eta_c=1.0), dict(capacity=0.0)])
def test_battery_validation(kw):
    base = dict(capacity=10.0, soc_low=0.1, soc_high=0.9, soc_init=0.5, eta_c=0.9, eta_d=0.9,
                power=1.0, degradation=0.1)
    with pytest.raises(ValueError):
        BatterySpec(**{**base, **kw})


def test_scale_wind():
    w = scale_wind(np.array([0.0, 50.0, 100.0]), 100.0, 0.5, 200.0)
    np.testing.assert_allclose(w, [0.0, 50.0, 100.0])
    with pytest.raises(ValueError):
        scale_wind(w, 0.0, 0.5, 1.0)


def test_free_curtailment_equals_residual_generation():
    free = SystemSpec(SYSTEM.generators, SYSTEM.battery, wind_penalty=0.0)
    rng = np.random.default_rng(2)
    L = rng.uniform(60, 200, 24)
    W = rng.uniform(0, 120, 24)
    s = integrated_day_ahead(L, W, free)
    residual = np.maximum(L - W, 0.0)
    no_bat = SystemSpec(SYSTEM.generators, BatterySpec(100.0, 0.1, 0.9, 0.5, 0.95, 0.95, 0.0, 0.5))
    assert s.total_cost == pytest.approx(day_ahead_schedule(residual, no_bat).total_cost, rel=1e-9)


def test_intraday_idle_when_forecasts_unchanged():
    L = np.full(24, 120.0)
    W = np.full(24, 30.0)
    da = integrated_day_ahead(L, W, SYSTEM)
    idy = intraday_battery(da, np.repeat(L, 12), np.repeat(W, 12), SYSTEM)
    np.testing.assert_allclose(idy.charge, 0.0, atol=1e-9)
    np.testing.assert_allclose(idy.discharge, 0.0, atol=1e-9)
    np.testing.assert_allclose(idy.soc, SYSTEM.battery.soc_init, atol=1e-12)


def test_intraday_solves_six_windows(day, monkeypatch):
    import hnl.dispatch as dispatch

    calls = []
    real = dispatch._battery_only

    def spy(gap, *args, **kw):
        calls.append(gap.size)
        return real(gap, *args, **kw)

    monkeypatch.setattr(dispatch, "_battery_only", spy)
    load, wind = day
    da = integrated_day_ahead(block_downsample(load, 12, 1), block_downsample(wind, 12, 1), SYSTEM)
    intraday_battery(da, load, wind, SYSTEM, on_infeasible="slack")
    assert calls == [48] * 6
