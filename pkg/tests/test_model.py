import math

import pytest

from nphgsd import (
    AnalysisSchedule,
    PiecewiseConstant,
    TestSpec,
    TrialModel,
    WeightSpec,
    null_model,
    simple_model,
    validate,
)
from nphgsd.model import as_piecewise


def test_piecewise_lookup_and_integral():
    pc = PiecewiseConstant((0.0, 2.0, 5.0), (1.0, 3.0, 0.5))
    assert pc(0.0) == 1.0
    assert pc(1.99) == 1.0
    assert pc(2.0) == 3.0
    assert pc(10.0) == 0.5
    assert pc.integral(0.0, 2.0) == pytest.approx(2.0)
    assert pc.integral(1.0, 6.0) == pytest.approx(1.0 + 9.0 + 0.5)
    assert pc.cumulative(6.0) == pytest.approx(2.0 + 9.0 + 0.5)


def test_piecewise_integral_additivity():
    pc = PiecewiseConstant((0.0, 1.5, 4.0), (0.2, 0.7, 0.1))
    a, b, c = 0.3, 2.2, 5.9
    assert pc.integral(a, c) == pytest.approx(pc.integral(a, b) + pc.integral(b, c), abs=1e-12)


def test_piecewise_constant_and_scaled():
    pc = PiecewiseConstant.constant(0.4)
    assert pc(123.0) == 0.4
    doubled = pc.scaled(2.0)
    assert doubled(1.0) == pytest.approx(0.8)


def test_piecewise_validation():
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0, 2.0), (1.0, 1.0))  # must start at 0
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0, 2.0, 2.0), (1.0, 1.0, 1.0))  # not increasing
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0,), (-1.0,))  # negative rate
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0, 1.0), (1.0,))  # length mismatch


def test_as_piecewise_pair_form():
    pc = as_piecewise(((4.0,), (1.0, 0.6)))
    assert pc(3.9) == 1.0
    assert pc(4.0) == 0.6
    same = as_piecewise(((0.0, 4.0), (1.0, 0.6)))
    assert same(3.9) == 1.0 and same(4.0) == 0.6
    assert as_piecewise(2.5)(100.0) == 2.5


def test_simple_model_and_nulling(delayed_model):
    assert delayed_model.p0 == 0.5
    assert delayed_model.p1 == 0.5
    assert delayed_model.hazard_ratio(2.0) == 1.0
    assert delayed_model.hazard_ratio(5.0) == 0.6
    null = null_model(delayed_model)
    assert null.hazard_ratio(1.0) == 1.0
    assert null.hazard_ratio(35.0) == 1.0
    assert null.control_hazard(10.0) == delayed_model.control_hazard(10.0)


def test_model_breakpoints_union(delayed_model):
    cuts = delayed_model.breakpoints(extra=(7.5,))
    assert 0.0 in cuts and 4.0 in cuts and 7.5 in cuts and 12.0 in cuts
    assert list(cuts) == sorted(set(cuts))


def test_validate_flags_problems():
    bad = simple_model(10.0, 0.05, 1.0, 0.0, enroll_duration=12.0, total_duration=6.0)
    report = validate(bad)
    assert not report.ok
    assert any("duration" in p for p in report.problems)
    good = simple_model(10.0, 0.05, 1.0, 0.0, enroll_duration=6.0, total_duration=12.0)
    assert validate(good).ok


def test_trial_model_rejects_bad_allocation():
    with pytest.raises(ValueError):
        TrialModel(
            enroll_rate=10.0,
            control_hazard=0.05,
            hazard_ratio=1.0,
            dropout_control=0.0,
            dropout_experimental=0.0,
            p_experimental=1.2,
            enroll_duration=6.0,
            total_duration=12.0,
        )


def test_schedule_forms():
    s = AnalysisSchedule(times=[12.0, 24.0])
    assert s.k == 2 and s.calendar_based
    e = AnalysisSchedule(event_counts=[100, 200, 300])
    assert e.k == 3 and not e.calendar_based
    with pytest.raises(ValueError):
        AnalysisSchedule(times=[12.0], event_counts=[100])
    with pytest.raises(ValueError):
        AnalysisSchedule(times=[24.0, 12.0])
    with pytest.raises(ValueError):
        AnalysisSchedule()


def test_weight_spec_labels():
    assert WeightSpec.logrank().label() == "logrank"
    assert WeightSpec.fleming_harrington(0.0, 0.5).label() == "fh(0,0.5)"
    assert WeightSpec.magirr_burman(12.0, 2.0).label() == "mb(12,2)"
    assert WeightSpec.magirr_burman(12.0).label() == "mb(12,inf)"
    assert WeightSpec.zero_early(3.0).label() == "zero_early(3)"


def test_weight_spec_validation():
    with pytest.raises(ValueError):
        WeightSpec.fleming_harrington(-0.5, 0.0)
    with pytest.raises(ValueError):
        WeightSpec.magirr_burman(-1.0)
    with pytest.raises(ValueError):
        WeightSpec.magirr_burman(12.0, w_max=0.5)
    with pytest.raises(ValueError):
        WeightSpec.zero_early(-1.0)


def test_test_spec_combo():
    lr = WeightSpec.logrank()
    fh = WeightSpec.fleming_harrington(0.0, 0.5)
    single = TestSpec.wlr(lr)
    assert not single.is_combo
    assert single.label() == "logrank"
    combo = TestSpec.maxcombo([lr, fh])
    assert combo.is_combo
    assert combo.label() == "maxcombo{logrank,fh(0,0.5)}"
    with pytest.raises(ValueError):
        TestSpec.maxcombo([])
    with pytest.raises(ValueError):
        TestSpec.maxcombo([lr, lr])
