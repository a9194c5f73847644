"""Simulation engine against naive reimplementations of every statistic."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from nphgsd import (
    WeightSpec,
    cut_dataset,
    maxcombo_pvalue,
    milestone_statistic,
    rmst_statistic,
    run_study,
    scenario_model,
    simulate_trial,
    standard_tests,
    wlr_statistic,
)


def test_simulation_is_deterministic():
    model = scenario_model("ph", 400.0)
    a = simulate_trial(model, 400, (123, 0))
    b = simulate_trial(model, 400, (123, 0))
    np.testing.assert_array_equal(a.enroll_time, b.enroll_time)
    np.testing.assert_array_equal(a.event_time, b.event_time)
    np.testing.assert_array_equal(a.arm, b.arm)
    c = simulate_trial(model, 400, (123, 1))
    assert not np.array_equal(a.event_time, c.event_time)


def test_enrollment_and_survival_marginals():
    """20000 subjects from the benchmark generator: ramp-up entry times
    average 260/36 = 7.2222 months and the control arm has median 12."""
    model = scenario_model("weak-null", 20000.0)
    data = simulate_trial(model, 20000, (7, 0))
    mean_entry = float(data.enroll_time.mean())
    sd_entry = math.sqrt(61.3333 - (260.0 / 36.0) ** 2)
    assert mean_entry == pytest.approx(260.0 / 36.0, abs=3.0 * sd_entry / math.sqrt(20000))
    assert data.enroll_time.max() <= 12.0
    assert float(data.arm.mean()) == pytest.approx(0.5, abs=3.0 * 0.5 / math.sqrt(20000))
    surv12 = float((data.event_time > 12.0).mean())
    assert surv12 == pytest.approx(0.5, abs=3.0 * 0.5 / math.sqrt(20000))


def pooled_table(cut):
    times = np.unique(cut.observed[cut.event])
    km_left = []
    km = 1.0
    for t in times:
        km_left.append(km)
        y = np.sum(cut.observed >= t)
        d = np.sum((cut.observed == t) & cut.event)
        km *= 1.0 - d / y
    return times, np.array(km_left)


def naive_wlr(cut, weights_of):
    times, km_left = pooled_table(cut)
    w = weights_of(times, km_left)
    num = 0.0
    var = 0.0
    for i, t in enumerate(times):
        risk = cut.observed >= t
        y = float(risk.sum())
        y1 = float((risk & cut.arm).sum())
        d = float(((cut.observed == t) & cut.event).sum())
        d1 = float(((cut.observed == t) & cut.event & cut.arm).sum())
        num += w[i] * (d1 - y1 / y * d)
        if y > 1.0:
            var += w[i] ** 2 * (y1 / y) * (1.0 - y1 / y) * d * (y - d) / (y - 1.0)
    return -num / math.sqrt(var)


def test_wlr_against_naive():
    model = scenario_model("delay6", 300.0)
    data = simulate_trial(model, 300, (42, 0))
    cut = cut_dataset(data, calendar_time=36.0)
    cases = [
        (WeightSpec.logrank(), lambda t, km: np.ones_like(t)),
        (WeightSpec.fleming_harrington(0.0, 1.0), lambda t, km: 1.0 - km),
        (WeightSpec.fleming_harrington(0.5, 0.5), lambda t, km: np.sqrt(km * (1.0 - km))),
        (WeightSpec.zero_early(3.0), lambda t, km: (t >= 3.0).astype(float)),
    ]
    for spec, wf in cases:
        assert wlr_statistic(cut, spec) == pytest.approx(naive_wlr(cut, wf), abs=1e-10)


def test_fh00_matches_logrank_per_trial():
    model = scenario_model("ph", 120.0)
    for rep in range(40):
        data = simulate_trial(model, 120, (9, rep))
        cut = cut_dataset(data, calendar_time=36.0)
        assert wlr_statistic(cut, WeightSpec.fleming_harrington(0.0, 0.0)) == pytest.approx(
            wlr_statistic(cut, WeightSpec.logrank()), abs=1e-12
        )


def test_arm_swap_flips_sign():
    from dataclasses import replace

    model = scenario_model("delay3", 250.0)
    data = simulate_trial(model, 250, (11, 3))
    flipped = replace(data, arm=~data.arm)
    for spec in (WeightSpec.logrank(), WeightSpec.magirr_burman(12.0, 2.0)):
        z = wlr_statistic(cut_dataset(data, calendar_time=36.0), spec)
        z_f = wlr_statistic(cut_dataset(flipped, calendar_time=36.0), spec)
        assert z_f == pytest.approx(-z, abs=1e-12)


def naive_km(obs, ev, upto):
    s = 1.0
    gw = 0.0
    for t in np.unique(obs[ev]):
        if t > upto:
            break
        y = float(np.sum(obs >= t))
        d = float(np.sum((obs == t) & ev))
        s *= 1.0 - d / y
        gw += d / (y * (y - d))
    return s, s * s * gw


def test_milestone_against_naive():
    model = scenario_model("crossing", 300.0)
    data = simulate_trial(model, 300, (5, 2))
    cut = cut_dataset(data, calendar_time=36.0)
    s = np.empty(2)
    v = np.empty(2)
    for j, experimental in enumerate((False, True)):
        sel = cut.arm == experimental
        s[j], v[j] = naive_km(cut.observed[sel], cut.event[sel], 24.0)
    want = (s[1] - s[0]) / math.sqrt(v.sum())
    assert milestone_statistic(cut, 24.0) == pytest.approx(want, abs=1e-10)


def naive_rmst(obs, ev, horizon):
    ts = [float(t) for t in np.unique(obs[ev]) if t <= horizon]
    steps = [1.0]
    for t in ts:
        y = float(np.sum(obs >= t))
        d = float(np.sum((obs == t) & ev))
        steps.append(steps[-1] * (1.0 - d / y))
    edges = [0.0] + ts + [horizon]
    areas = [steps[i] * (edges[i + 1] - edges[i]) for i in range(len(steps))]
    var = 0.0
    for i, t in enumerate(ts):
        tail = sum(areas[i + 1 :])
        y = float(np.sum(obs >= t))
        d = float(np.sum((obs == t) & ev))
        var += tail**2 * d / (y * (y - d))
    return sum(areas), var


def test_rmst_against_naive():
    model = scenario_model("delay3", 300.0)
    data = simulate_trial(model, 300, (6, 4))
    cut = cut_dataset(data, calendar_time=36.0)
    r = np.empty(2)
    v = np.empty(2)
    for j, experimental in enumerate((False, True)):
        sel = cut.arm == experimental
        r[j], v[j] = naive_rmst(cut.observed[sel], cut.event[sel], 24.0)
    want = (r[1] - r[0]) / math.sqrt(v.sum())
    assert rmst_statistic(cut, 24.0) == pytest.approx(want, abs=1e-10)


def test_maxcombo_degenerate_pair():
    """FH(0,0) duplicates the logrank, so the pair's maximum is one normal
    and the combination p collapses to the marginal tail."""
    model = scenario_model("ph", 250.0)
    data = simulate_trial(model, 250, (3, 1))
    cut = cut_dataset(data, calendar_time=36.0)
    p, z, corr = maxcombo_pvalue(cut, [WeightSpec.logrank(), WeightSpec.fleming_harrington(0.0, 0.0)])
    assert z[0] == pytest.approx(z[1], abs=1e-12)
    assert corr[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert p == pytest.approx(float(norm.sf(z[0])), abs=3e-4)


def test_event_count_cut():
    model = scenario_model("ph", 400.0)
    data = simulate_trial(model, 400, (21, 0))
    cut = cut_dataset(data, event_count=150)
    assert int(cut.event.sum()) == 150
    again = cut_dataset(data, calendar_time=cut.time)
    np.testing.assert_array_equal(cut.observed, again.observed)
    np.testing.assert_array_equal(cut.event, again.event)


def test_run_study_worker_invariance():
    kw = dict(n=300, replicates=1000, seed=77, calendar_time=36.0, collect_z=True)
    tests = list(standard_tests()[:3])
    one = run_study("delay3", tests, workers=1, **kw)
    three = run_study("delay3", tests, workers=3, **kw)
    assert one.rejections == three.rejections
    assert one.z_mean == three.z_mean
    assert one.z_sd == three.z_sd
    assert one.z_corr == three.z_corr
    assert one.rates == pytest.approx(three.rates)


def test_run_study_report_shape():
    report = run_study("ph", standard_tests(), n=200, replicates=200, seed=5, calendar_time=36.0)
    assert len(report.labels) == 7
    assert report.labels[0] == "logrank"
    assert report.labels[-1] == "milestone(24)"
    assert all(0 <= r <= 200 for r in report.rejections)
    csv = report.to_csv()
    assert csv.splitlines()[0] == "test,rejections,replicates,rate,mc_se"
    assert len(csv.splitlines()) == 8
    import json

    payload = json.loads(report.to_json())
    assert payload["replicates"] == 200
    assert len(payload["tests"]) == 7


def test_error_paths():
    model = scenario_model("ph", 100.0)
    data = simulate_trial(model, 100, (1, 0))
    with pytest.raises(ValueError):
        cut_dataset(data)
    with pytest.raises(ValueError):
        cut_dataset(data, calendar_time=36.0, event_count=10)
    with pytest.raises(ValueError):
        cut_dataset(data, event_count=100000)
    cut = cut_dataset(data, calendar_time=36.0)
    with pytest.raises(ValueError):
        maxcombo_pvalue(cut, [WeightSpec.logrank()])
    with pytest.raises(ValueError):
        milestone_statistic(cut, 200.0)
    with pytest.raises(ValueError):
        run_study("ph", standard_tests(), n=100, replicates=0, seed=1)
    with pytest.raises(ValueError):
        run_study("no-such-scenario", standard_tests(), n=100, replicates=10, seed=1)
    with pytest.raises(ValueError):
        run_study("ph", [], n=100, replicates=10, seed=1)
