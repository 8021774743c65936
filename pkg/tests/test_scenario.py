from __future__ import annotations

import os

import numpy as np
import pytest

from voltvar.control import make_config
from voltvar.exceptions import ConfigurationError, DivergenceError, InputError
from voltvar.manager import ScenarioManager
from voltvar.scenario import (
    EVENING,
    DailyProfile,
    DynamicScenario,
    load_profile,
    run_dynamic,
    run_static,
    save_profile,
    sweep,
    synthetic_profile,
    var_limits_at,
)

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


def short_profile(start=1080, length=60) -> DailyProfile:
    full = synthetic_profile()
    window = slice(start, start + length)
    return DailyProfile(
        np.arange(length), full.load_kw[window], full.pv_kw[window]
    )


def test_var_limits():
    profile = DailyProfile([0, 1], [2.0, 2.0], [0.0, 3.0])
    scen = DynamicScenario(profile, homes_per_bus=np.full(2, 18), s_base_mva=1.0)
    assert scen.rating_kva == pytest.approx(3.15)
    q_min, q_max = var_limits_at(scen, 0)
    np.testing.assert_allclose(q_max, [0.0567, 0.0567])
    np.testing.assert_allclose(q_min, -q_max)
    _, q_max = var_limits_at(scen, 1)
    np.testing.assert_allclose(q_max, 18 * np.sqrt(3.15**2 - 9.0) / 1000.0)
    assert np.sqrt(3.15**2 - 9.0) == pytest.approx(0.9605, abs=1e-4)

    p, qc = scen.injections_at(1)
    np.testing.assert_allclose(p, [0.018, 0.018])
    np.testing.assert_allclose(qc, [0.018, 0.018])


def test_periods():
    profile = DailyProfile.zeros(10)
    assert DynamicScenario(profile, np.ones(3)).ticks_per_minute == 12
    assert DynamicScenario(profile, np.ones(3), control_period_s=60.0).ticks_per_minute == 1
    with pytest.raises(ConfigurationError):
        DynamicScenario(profile, np.ones(3), control_period_s=7.0)
    with pytest.raises(ConfigurationError):
        DynamicScenario(profile, np.ones(3), control_period_s=0.0)
    with pytest.raises(ConfigurationError):
        DynamicScenario(profile, -np.ones(3))


def test_synthetic_profile():
    profile = synthetic_profile()
    assert len(profile) == 1440
    h = profile.minutes / 60.0
    assert np.all(profile.pv_kw[(h <= 6) | (h >= 20)] == 0)
    assert profile.pv_kw.max() == pytest.approx(3.0, abs=1e-3)
    assert abs(int(np.argmax(profile.pv_kw)) - 780) <= 1
    assert profile.pv_kw[790] < 0.4 * profile.pv_kw[780]
    assert 18 * 60 <= int(np.argmax(profile.load_kw)) < 20 * 60
    assert profile.load_kw[1055] - profile.load_kw[1045] > 1.0
    assert profile.load_kw.min() >= 2.0


def test_bundled_profile_matches_generator():
    bundled = load_profile(os.path.join(DATA_DIR, "profile_synthetic.csv"))
    generated = synthetic_profile()
    np.testing.assert_array_equal(bundled.minutes, generated.minutes)
    np.testing.assert_allclose(bundled.load_kw, generated.load_kw, rtol=0, atol=1.5e-4)
    np.testing.assert_allclose(bundled.pv_kw, generated.pv_kw, rtol=0, atol=1.5e-4)


def test_save_profile(tmp_path):
    path = tmp_path / "profile.csv"
    save_profile(short_profile(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "minute,load_kw_per_home,pv_kw_per_home"
    assert len(lines) == 61
    assert len(lines[1].split(",")[1].split(".")[1]) == 4


@pytest.mark.parametrize(
    "content, message",
    [
        ("minute,load_kw_per_home\n0,2.0\n", "missing column"),
        ("minute,load_kw_per_home,pv_kw_per_home\n0,2.0,0.0\n2,2.0,0.0\n", "steps of exactly 1"),
        ("minute,load_kw_per_home,pv_kw_per_home\n0,2.0,-1.0\n", "nonnegative"),
        ("minute,load_kw_per_home,pv_kw_per_home\n0,abc,0.0\n", "could not convert"),
    ],
)
def test_load_profile_errors(tmp_path, content, message):
    path = tmp_path / "profile.csv"
    path.write_text(content)
    with pytest.raises(InputError, match=message):
        load_profile(path)


def test_load_profile_missing(tmp_path):
    with pytest.raises(InputError, match="not found"):
        load_profile(tmp_path / "nope.csv")


def test_static_runs(feeder):
    net, gm = feeder
    scaled = run_static(net, gm, make_config("scaled", gm, net=net), plant="ac")
    assert scaled.converged
    droop = run_static(net, gm, make_config("droop", gm, c=0.5, net=net), plant="linear")
    assert not droop.converged
    assert droop.oscillating
    delayed = run_static(
        net, gm, make_config("delayed", gm, c=0.5, alpha=0.3, net=net), plant="ac", max_iter=500
    )
    assert delayed.converged


def test_zero_profile(feeder16):
    net, gm = feeder16
    scen = DynamicScenario.for_network(net, DailyProfile.zeros(5))
    result = run_dynamic(net, scen, make_config("scaled", gm, net=net), plant="ac", gm=gm)
    assert len(result.trace) == 5 * 12
    for record in result.trace:
        np.testing.assert_allclose(record.q, np.zeros(15), rtol=0, atol=1e-12)
        assert record.mismatch_norm == pytest.approx(0.0, abs=1e-9)


@pytest.fixture(scope="module")
def daily_runs(feeder16):
    net, gm = feeder16
    profile = load_profile(os.path.join(DATA_DIR, "profile_synthetic.csv"))
    scen = DynamicScenario.for_network(net, profile)
    return {
        "none": run_dynamic(net, scen, None, plant="ac", gm=gm),
        "scaled": run_dynamic(net, scen, make_config("scaled", gm, net=net), plant="ac", gm=gm),
        "delayed": run_dynamic(
            net, scen, make_config("delayed", gm, alpha=0.3, net=net), plant="ac", gm=gm
        ),
    }


def test_baseline_evening_undervoltage(daily_runs):
    baseline = daily_runs["none"]
    summary = baseline.to_summary_dict()
    assert summary["minutes"] == 1440
    assert summary["undervoltage_minutes"] > 0
    assert 15 in summary["undervoltage_buses"]
    assert baseline.evening()["v_min"].min() < 0.95
    for record in baseline.trace[::97]:
        np.testing.assert_array_equal(record.q, np.zeros(15))


def test_controllers_beat_baseline(daily_runs):
    baseline = daily_runs["none"].summary["mismatch_norm"].mean()
    for name in ("scaled", "delayed"):
        assert daily_runs[name].summary["mismatch_norm"].mean() < baseline


def test_scaled_beats_delayed_droop_in_the_evening(daily_runs):
    scaled = daily_runs["scaled"].evening()["mismatch_norm"].to_numpy()
    delayed = daily_runs["delayed"].evening()["mismatch_norm"].to_numpy()
    assert scaled.shape == delayed.shape == (EVENING[1] - EVENING[0],)
    assert np.mean(scaled <= delayed) >= 0.9


def test_daily_setpoints_stay_feasible(daily_runs, feeder16):
    net, _ = feeder16
    profile = load_profile(os.path.join(DATA_DIR, "profile_synthetic.csv"))
    scen = DynamicScenario.for_network(net, profile)
    for record in daily_runs["scaled"].trace[::7]:
        q_min, q_max = var_limits_at(scen, record.minute)
        assert np.all(record.q >= q_min - 1e-12) and np.all(record.q <= q_max + 1e-12)


def test_baseline_ignores_control_period(feeder16):
    net, gm = feeder16
    profile = short_profile()
    fast = run_dynamic(net, DynamicScenario.for_network(net, profile), None, gm=gm)
    slow = run_dynamic(
        net, DynamicScenario.for_network(net, profile, control_period_s=60.0), None, gm=gm
    )
    assert len(fast.trace) == 12 * len(slow.trace)
    np.testing.assert_array_equal(
        fast.summary["mismatch_norm"].to_numpy(), slow.summary["mismatch_norm"].to_numpy()
    )


def test_dynamic_is_deterministic(feeder16):
    net, gm = feeder16
    scen = DynamicScenario.for_network(net, short_profile(length=20))
    cfg = make_config("scaled", gm, net=net)
    first = run_dynamic(net, scen, cfg, plant="ac", gm=gm)
    second = run_dynamic(net, scen, cfg, plant="ac", gm=gm)
    for a, b in zip(first.trace, second.trace):
        np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(a.v, b.v)


def test_dynamic_divergence_keeps_trace(feeder16):
    net, gm = feeder16
    profile = DailyProfile([0, 1, 2], [2.0, 2.0, 5000.0], [0.0, 0.0, 0.0])
    scen = DynamicScenario.for_network(net, profile)
    with pytest.raises(DivergenceError) as info:
        run_dynamic(net, scen, make_config("scaled", gm, net=net), plant="ac", gm=gm)
    assert len(info.value.trace) == 24
    assert info.value.trace[-1].minute == 1


def test_epsilon_sweep(feeder16):
    net, gm = feeder16
    cfg = make_config("scaled", gm, net=net)
    points = sweep(net, gm, cfg, "epsilon", [0.1, 0.3, 0.5], workers=2)
    assert [p.value for p in points] == [0.1, 0.3, 0.5]
    assert all(p.converged and p.stable for p in points)
    assert points[0].lambda_max_H < points[1].lambda_max_H < points[2].lambda_max_H
    assert points[0].iterations > points[1].iterations


def test_alpha_sweep(feeder16):
    net, gm = feeder16
    cfg = make_config("delayed", gm, epsilon=0.3, net=net)
    points = sweep(net, gm, cfg, "alpha", [0.01, 0.1, 0.3, 0.9, 1.0], max_iter=10000)
    assert all(p.converged for p in points)
    iterations = [p.iterations for p in points]
    assert iterations == sorted(iterations, reverse=True)

    with pytest.raises(ConfigurationError):
        sweep(net, gm, cfg, "mu", [1.0])
    with pytest.raises(ConfigurationError):
        sweep(net, gm, make_config("droop", gm, c=0.5, net=net), "epsilon", [0.3])


def test_scenario_manager_order_and_errors():
    manager = ScenarioManager(max_workers=3)
    for k in range(6):
        manager.submit(f"job{k}", lambda k=k: k * k)
    assert manager.run() == [0, 1, 4, 9, 16, 25]

    def fail():
        raise ValueError("boom")

    manager = ScenarioManager(max_workers=2)
    manager.submit("ok", lambda: 1)
    manager.submit("bad", fail)
    assert manager.run(raise_on_error=False) == [1, None]
    with pytest.raises(ValueError, match="boom"):
        manager.run()
    with pytest.raises(ValueError):
        ScenarioManager(max_workers=0)
