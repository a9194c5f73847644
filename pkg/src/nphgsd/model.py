"""Trial model declaration: piecewise-constant inputs, schedules, tests, validation.

All design-time quantities in this package are driven by a small immutable
model object: piecewise-constant enrollment, control hazard, hazard ratio and
dropout, with fixed randomization probabilities and study durations. Time is
in months throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PiecewiseConstant",
    "as_piecewise",
    "simple_model",
    "TrialModel",
    "AnalysisSchedule",
    "WeightSpec",
    "TestSpec",
    "ValidationReport",
    "validate",
    "arm_hazard",
    "null_model",
]


@dataclass(frozen=True)
class PiecewiseConstant:
    """A right-continuous step function on [0, inf).

    ``breakpoints`` are strictly increasing and start at 0; ``values[m]`` is
    the value on the right-open interval [breakpoints[m], breakpoints[m+1]),
    the last interval extending to infinity.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]):
        bp = tuple(float(b) for b in breakpoints)
        vals = tuple(float(v) for v in values)
        if len(bp) == 0 or bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(vals) != len(bp):
            raise ValueError("need exactly one value per interval")
        if any(v < 0 for v in vals):
            raise ValueError("values must be non-negative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __call__(self, t: float) -> float:
        """Value of the interval containing t (t < 0 maps to the first)."""
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[max(idx, 0)]

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b]."""
        if b <= a:
            return 0.0
        total = 0.0
        bp = self.breakpoints
        for m, v in enumerate(self.values):
            lo = bp[m]
            hi = bp[m + 1] if m + 1 < len(bp) else math.inf
            seg = min(hi, b) - max(lo, a)
            if seg > 0:
                total += v * seg
        return total

    def cumulative(self, t: float) -> float:
        """Integral from 0 to t."""
        return self.integral(0.0, t)

    def scaled(self, factor: float) -> "PiecewiseConstant":
        """Pointwise multiplication by a non-negative constant."""
        return PiecewiseConstant(self.breakpoints, [v * factor for v in self.values])

    @staticmethod
    def constant(value: float) -> "PiecewiseConstant":
        return PiecewiseConstant((0.0,), (value,))


def as_piecewise(value) -> PiecewiseConstant:
    """Coerce a constant or a (breakpoints, values) pair to PiecewiseConstant."""
    if isinstance(value, PiecewiseConstant):
        return value
    if isinstance(value, (int, float)):
        return PiecewiseConstant.constant(float(value))
    try:
        breakpoints, values = value
    except (TypeError, ValueError):
        raise TypeError(f"cannot interpret {value!r} as a piecewise-constant function")
    if breakpoints and breakpoints[0] != 0.0:
        breakpoints = (0.0, *breakpoints)
    return PiecewiseConstant(breakpoints, values)


def _merge_breakpoints(*components: PiecewiseConstant, extra: Iterable[float] = ()) -> tuple[float, ...]:
    pts = {0.0}
    for comp in components:
        pts.update(comp.breakpoints)
    pts.update(float(x) for x in extra)
    return tuple(sorted(pts))


def _merged_product(a: PiecewiseConstant, b: PiecewiseConstant) -> PiecewiseConstant:
    grid = _merge_breakpoints(a, b)
    return PiecewiseConstant(grid, [a(t) * b(t) for t in grid])


@dataclass(frozen=True)
class TrialModel:
    """Piecewise trial model shared by every design-time computation.

    Fields
    ------
    enroll_rate : expected enrollment rate g(u), subjects/month
    control_hazard : lambda_0(t), events/month
    hazard_ratio : experimental-to-control hazard ratio over time
    dropout_control, dropout_experimental : dropout hazards eta(t), /month
    p_experimental : randomization probability of the experimental arm
    enroll_duration : tau_a, months of accrual
    total_duration : tau, calendar months from start to final analysis
    strata : optional ((weight, sub-model), ...) for stratified summaries
    """

    enroll_rate: PiecewiseConstant
    control_hazard: PiecewiseConstant
    hazard_ratio: PiecewiseConstant
    dropout_control: PiecewiseConstant
    dropout_experimental: PiecewiseConstant
    p_experimental: float
    enroll_duration: float
    total_duration: float
    strata: tuple = field(default=())

    def __post_init__(self) -> None:
        for name in (
            "enroll_rate",
            "control_hazard",
            "hazard_ratio",
            "dropout_control",
            "dropout_experimental",
        ):
            object.__setattr__(self, name, as_piecewise(getattr(self, name)))
        if not 0.0 < self.p_experimental < 1.0:
            raise ValueError("p_experimental must lie strictly between 0 and 1")

    @property
    def p0(self) -> float:
        return 1.0 - self.p_experimental

    @property
    def p1(self) -> float:
        return self.p_experimental

    def dropout(self, arm: str) -> PiecewiseConstant:
        return self.dropout_control if arm == "control" else self.dropout_experimental

    def breakpoints(self, *, extra: Iterable[float] = ()) -> tuple[float, ...]:
        """Union of all component breakpoints plus any extra cut points."""
        return _merge_breakpoints(
            self.enroll_rate,
            self.control_hazard,
            self.hazard_ratio,
            self.dropout_control,
            self.dropout_experimental,
            extra=tuple(extra) + (self.enroll_duration,),
        )


def simple_model(
    enroll_rate,
    control_hazard,
    hazard_ratio,
    dropout,
    enroll_duration: float,
    total_duration: float,
    p_experimental: float = 0.5,
) -> TrialModel:
    """Convenience constructor with arm-equal dropout."""
    return TrialModel(
        enroll_rate=enroll_rate,
        control_hazard=control_hazard,
        hazard_ratio=hazard_ratio,
        dropout_control=dropout,
        dropout_experimental=dropout,
        p_experimental=p_experimental,
        enroll_duration=enroll_duration,
        total_duration=total_duration,
    )


def null_model(model: TrialModel) -> TrialModel:
    """The no-effect counterpart: hazard ratio forced to 1 everywhere."""
    return replace(model, hazard_ratio=PiecewiseConstant.constant(1.0))


def arm_hazard(model: TrialModel, arm: str) -> PiecewiseConstant:
    """Event hazard of an arm on the merged breakpoint grid.

    ``control`` returns lambda_0; ``experimental`` the pointwise product
    lambda_0(t) * HR(t).
    """
    if arm == "control":
        return model.control_hazard
    if arm == "experimental":
        return _merged_product(model.control_hazard, model.hazard_ratio)
    raise ValueError(f"unknown arm {arm!r}")


@dataclass(frozen=True)
class AnalysisSchedule:
    """Planned analyses: calendar times or target pooled event counts."""

    times: tuple[float, ...] = ()
    event_counts: tuple[float, ...] = ()

    def __init__(self, times: Sequence[float] = (), event_counts: Sequence[float] = ()):
        if bool(times) == bool(event_counts):
            raise ValueError("specify exactly one of times or event_counts")
        seq = tuple(float(x) for x in (times or event_counts))
        if any(b <= a for a, b in zip(seq, seq[1:])) or seq[0] <= 0:
            raise ValueError("analysis schedule must be positive and increasing")
        object.__setattr__(self, "times", tuple(float(t) for t in times))
        object.__setattr__(self, "event_counts", tuple(float(d) for d in event_counts))

    @property
    def k(self) -> int:
        return len(self.times) or len(self.event_counts)

    @property
    def calendar_based(self) -> bool:
        return bool(self.times)


@dataclass(frozen=True)
class WeightSpec:
    """Weight function for a weighted logrank statistic (tagged union).

    kind is one of ``logrank``, ``fh`` (Fleming-Harrington rho/gamma),
    ``mb`` (bounded weight 1/S capped at w_max, frozen after t_star) or
    ``zero_early`` (weight 0 before t0, 1 after).
    """

    kind: str
    p: float = 0.0
    q: float = 0.0
    t_star: float = 0.0
    w_max: float = math.inf
    t0: float = 0.0

    @staticmethod
    def logrank() -> "WeightSpec":
        return WeightSpec(kind="logrank")

    @staticmethod
    def fleming_harrington(p: float, q: float) -> "WeightSpec":
        if p < 0 or q < 0:
            raise ValueError("FH exponents must be non-negative")
        return WeightSpec(kind="fh", p=p, q=q)

    @staticmethod
    def magirr_burman(t_star: float, w_max: float = math.inf) -> "WeightSpec":
        if t_star < 0:
            raise ValueError("t_star must be non-negative")
        if w_max < 1:
            raise ValueError("w_max must be at least 1")
        return WeightSpec(kind="mb", t_star=t_star, w_max=w_max)

    @staticmethod
    def zero_early(t0: float) -> "WeightSpec":
        if t0 < 0:
            raise ValueError("t0 must be non-negative")
        return WeightSpec(kind="zero_early", t0=t0)

    def label(self) -> str:
        if self.kind == "logrank":
            return "logrank"
        if self.kind == "fh":
            return f"fh({self.p:g},{self.q:g})"
        if self.kind == "mb":
            cap = "inf" if math.isinf(self.w_max) else f"{self.w_max:g}"
            return f"mb({self.t_star:g},{cap})"
        return f"zero_early({self.t0:g})"


@dataclass(frozen=True)
class TestSpec:
    """A test applied at an analysis: a single WLR or a MaxCombo of several."""

    __test__ = False  # keep pytest from collecting this as a test class

    weights: tuple[WeightSpec, ...]

    def __init__(self, weights: Sequence[WeightSpec]):
        ws = tuple(weights)
        if len(ws) == 0:
            raise ValueError("a test needs at least one weight")
        if len(set(ws)) != len(ws):
            raise ValueError("MaxCombo component list must be duplicate-free")
        object.__setattr__(self, "weights", ws)

    @staticmethod
    def wlr(weight: WeightSpec) -> "TestSpec":
        return TestSpec((weight,))

    @staticmethod
    def maxcombo(weights: Sequence[WeightSpec]) -> "TestSpec":
        if len(weights) < 2:
            raise ValueError("MaxCombo needs at least two components")
        return TestSpec(tuple(weights))

    @property
    def is_combo(self) -> bool:
        return len(self.weights) > 1

    def label(self) -> str:
        if not self.is_combo:
            return self.weights[0].label()
        return "maxcombo{" + ",".join(w.label() for w in self.weights) + "}"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of model/schedule validation; ok means no violations."""

    problems: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.problems


def validate(model: TrialModel, schedule: AnalysisSchedule | None = None) -> ValidationReport:
    """Check the model (and optionally a schedule) against its invariants.

    Returns a report rather than raising, so callers can surface every
    violation at once. An ok report implies the preconditions of downstream
    computations on this model hold.
    """
    problems: list[str] = []
    warnings: list[str] = []

    if not (0.0 < model.p_experimental < 1.0):
        problems.append("randomization probability must be inside (0, 1)")
    if model.enroll_duration <= 0:
        problems.append("enroll_duration must be positive")
    if model.total_duration < model.enroll_duration:
        problems.append("total_duration must be at least enroll_duration")
    if model.enroll_rate.cumulative(model.enroll_duration) <= 0:
        problems.append("expected enrollment over the accrual window is zero")

    exp_hazard = arm_hazard(model, "experimental")
    any_hazard = any(v > 0 for v in model.control_hazard.values) or any(
        v > 0 for v in exp_hazard.values
    )
    if not any_hazard:
        problems.append("all event hazards are zero in both arms")

    if model.dropout_control.breakpoints != model.dropout_experimental.breakpoints or any(
        abs(a - b) > 0
        for a, b in zip(model.dropout_control.values, model.dropout_experimental.values)
    ):
        warnings.append(
            "dropout differs by arm; average-hazard-ratio summaries assume arm-equal dropout"
        )

    if model.strata:
        total = sum(w for w, _ in model.strata)
        if abs(total - 1.0) > 1e-9:
            problems.append("strata weights must sum to 1")

    if schedule is not None:
        seq = schedule.times if schedule.calendar_based else schedule.event_counts
        if any(b <= a for a, b in zip(seq, seq[1:])):
            problems.append("analysis schedule must be strictly increasing")
        if schedule.calendar_based and seq and seq[-1] > model.total_duration + 1e-12:
            problems.append("analysis times must not exceed total_duration")

    return ValidationReport(problems=tuple(problems), warnings=tuple(warnings))


def csv_field(text: str) -> str:
    """Quote a cell for comma-separated output when it needs it (RFC 4180).

    Test labels such as ``maxcombo{logrank,fh(0,0.5)}`` carry commas, so any
    writer emitting them next to numeric columns must escape them.
    """
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text
