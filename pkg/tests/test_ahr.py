"""Average hazard ratio summaries and the bridge onto the WLR scale."""

import math

import pytest

from nphgsd import WeightSpec, ahr_lr, ahr_wlr, bridge_weight, estimate_ahr, simple_model


def test_proportional_hazards_recovers_hr():
    model = simple_model(50.0, math.log(2) / 12.0, 0.7, 0.001, 12.0, 30.0)
    for tau in (10.0, 20.0, 30.0):
        res = ahr_lr(model, tau)
        assert math.exp(res.log_ahr) == pytest.approx(0.7, rel=1e-12)


def test_ahr_wlr_constant_under_proportional_hazards():
    model = simple_model(50.0, math.log(2) / 12.0, 0.7, 0.001, 12.0, 30.0)
    for spec in (WeightSpec.logrank(), WeightSpec.fleming_harrington(0.0, 0.5)):
        assert ahr_wlr(model, spec, 30.0) == pytest.approx(math.log(0.7), rel=1e-12)


def test_delayed_effect_ahr_path(delayed_model, analysis_times):
    """AHR drifts from 0.8447 toward 0.6850 as later analyses accumulate
    post-delay events (delayed-effect design, HR 0.6 after month 4)."""
    want = (0.8447, 0.7420, 0.7026, 0.6850)
    got = [math.exp(ahr_lr(delayed_model, t).log_ahr) for t in analysis_times]
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=5e-4)
    assert all(b < a for a, b in zip(got, got[1:]))


def test_estimate_ahr_single_interval():
    # one interval, 40 events over 400 months vs 20 over 420:
    # log((20/420)/(40/400)) = -0.74194, variance 1/(1/(1/40+1/20)) = 0.075
    log_ahr, var = estimate_ahr([(40.0, 400.0, 20.0, 420.0)])
    assert log_ahr == pytest.approx(math.log((20.0 / 420.0) / (40.0 / 400.0)), rel=1e-12)
    assert log_ahr == pytest.approx(-0.74194, abs=1e-5)
    assert var == pytest.approx(0.075, rel=1e-12)


def test_estimate_ahr_pooling():
    rows = [(40.0, 400.0, 20.0, 420.0), (25.0, 300.0, 18.0, 310.0)]
    log_ahr, var = estimate_ahr(rows)
    num = 0.0
    info = 0.0
    for d0, t0, d1, t1 in rows:
        w = 1.0 / (1.0 / d0 + 1.0 / d1)
        num += w * (math.log(d1 / t1) - math.log(d0 / t0))
        info += w
    assert log_ahr == pytest.approx(num / info, rel=1e-12)
    assert var == pytest.approx(1.0 / info, rel=1e-12)
    # intervals without events in one arm carry no weight
    padded = rows + [(0.0, 50.0, 3.0, 55.0)]
    assert estimate_ahr(padded) == (log_ahr, var)


def test_estimate_ahr_errors():
    with pytest.raises(ValueError):
        estimate_ahr([(5.0, 0.0, 4.0, 10.0)])
    with pytest.raises(ValueError):
        estimate_ahr([(0.0, 10.0, 0.0, 10.0)])


def test_bridge_weight_reproduces_ahr(delayed_model):
    for tau in (20.0, 36.0):
        w = bridge_weight(delayed_model, tau)
        assert ahr_wlr(delayed_model, w, tau) == pytest.approx(
            ahr_lr(delayed_model, tau).log_ahr, abs=1e-10
        )


def test_bridge_weight_shape(delayed_model):
    w = bridge_weight(delayed_model, 28.0)
    assert all(v >= 0.0 for v in w.values)
    assert all(0.0 <= b <= 28.0 for b in w.breakpoints)


def test_per_interval_weights_normalized(delayed_model):
    res = ahr_lr(delayed_model, 36.0)
    assert sum(r[3] for r in res.per_interval) == pytest.approx(1.0, rel=1e-12)
    assert res.per_interval[0][0] == 0.0
    for (a0, b0, *_), (a1, *_) in zip(res.per_interval, res.per_interval[1:]):
        assert b0 == a1
    d0 = sum(r[4] for r in res.per_interval)
    d1 = sum(r[5] for r in res.per_interval)
    assert d0 > d1 > 0.0
