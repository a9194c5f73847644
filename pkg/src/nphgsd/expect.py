"""Model-implied expectations: enrollment, survival, at-risk and failure
probabilities, expected event counts, and the piecewise quadrature engine
behind every integral in the package.

Integrands here are smooth between the model's breakpoints, so segment-wise
Gauss-Legendre converges essentially to machine precision; a segment is
bisected whenever two successive orders disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PiecewiseConstant, TrialModel, arm_hazard

__all__ = [
    "piecewise_quad",
    "cumulative_enrollment",
    "enrollment_cdf",
    "survival",
    "censoring_survival",
    "at_risk_probability",
    "failure_probability",
    "failure_density",
    "pooled_survival_fn",
    "expected_events",
    "pooled_expected_events",
    "ExpectedEventsBreakdown",
]

_GL_LOW = np.polynomial.legendre.leggauss(15)
_GL_HIGH = np.polynomial.legendre.leggauss(25)


def _gauss(f, a: float, b: float, rule) -> float:
    nodes, weights = rule
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid + half * nodes
    return half * float(np.sum(weights * np.array([f(t) for t in x])))


def _segment(f, a: float, b: float, rel_tol: float, depth: int) -> float:
    lo = _gauss(f, a, b, _GL_LOW)
    hi = _gauss(f, a, b, _GL_HIGH)
    scale = max(abs(hi), 1e-12)
    if abs(hi - lo) <= rel_tol * scale or depth >= 12:
        return hi
    mid = 0.5 * (a + b)
    return _segment(f, a, mid, rel_tol, depth + 1) + _segment(f, mid, b, rel_tol, depth + 1)


def piecewise_quad(f, model: TrialModel, upper: float, *, extra_cuts=(), rel_tol: float = 1e-10) -> float:
    """Integrate f over [0, upper], cutting at every model breakpoint.

    Cut points include all hazard/dropout/enrollment breakpoints, the points
    where the enrollment window reflected at the analysis time crosses a rate
    change, and any caller-supplied extra cuts (weight knots, etc.).
    """
    if upper <= 0:
        return 0.0
    cuts = set(model.breakpoints(extra=extra_cuts))
    # censoring term H(tau_k - s) changes slope where tau_k - s hits a
    # breakpoint of the enrollment pattern
    for b in model.enroll_rate.breakpoints + (model.enroll_duration,):
        cuts.add(upper - b)
    grid = sorted(c for c in cuts if 0.0 < c < upper)
    pts = [0.0] + grid + [upper]
    return sum(_segment(f, a, b, rel_tol, 0) for a, b in zip(pts, pts[1:]) if b > a)


def cumulative_enrollment(model: TrialModel, t: float) -> float:
    """Expected number of subjects enrolled by calendar time t, G(t)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return model.enroll_rate.cumulative(min(t, model.enroll_duration))


def enrollment_cdf(model: TrialModel, t: float) -> float:
    """H(t) = G(t) / G(tau_a), the cdf of a subject's entry time."""
    total = cumulative_enrollment(model, model.enroll_duration)
    if t <= 0:
        return 0.0
    return min(cumulative_enrollment(model, t) / total, 1.0)


def survival(model: TrialModel, arm: str, t: float) -> float:
    """Event-free probability of an arm at time t since entry."""
    return float(np.exp(-arm_hazard(model, arm).cumulative(t)))


def censoring_survival(model: TrialModel, arm: str, t: float) -> float:
    """Dropout-free probability of an arm at time t since entry."""
    return float(np.exp(-model.dropout(arm).cumulative(t)))


def at_risk_probability(model: TrialModel, arm: str, t: float, analysis_time: float | None = None) -> float:
    """pi_j(t): probability a subject of arm j is enrolled, uncensored and
    event-free t months after entry, for an analysis at the given calendar
    time (defaults to the total duration)."""
    tau_k = model.total_duration if analysis_time is None else analysis_time
    if t < 0 or t > model.total_duration:
        raise ValueError("t outside [0, total_duration]")
    if t > tau_k:
        return 0.0
    h = enrollment_cdf(model, min(model.enroll_duration, tau_k - t))
    return survival(model, arm, t) * censoring_survival(model, arm, t) * h


def failure_density(model: TrialModel, arm: str, t: float, analysis_time: float | None = None) -> float:
    """v_j'(t): density of observed events at time-since-entry t."""
    return arm_hazard(model, arm)(t) * at_risk_probability(model, arm, t, analysis_time)


def failure_probability(model: TrialModel, arm: str, t: float, analysis_time: float | None = None) -> float:
    """v_j(t): probability a subject of arm j has an observed event by t."""
    if t < 0 or t > model.total_duration:
        raise ValueError("t outside [0, total_duration]")
    tau_k = model.total_duration if analysis_time is None else analysis_time
    return piecewise_quad(
        lambda s: failure_density(model, arm, s, tau_k), model, min(t, tau_k)
    )


def pooled_survival_fn(model: TrialModel):
    """Returns t -> p0*S0(t) + p1*S1(t), the design-time pooled survival."""
    lam0 = arm_hazard(model, "control")
    lam1 = arm_hazard(model, "experimental")

    def pooled(t: float) -> float:
        s0 = np.exp(-lam0.cumulative(t))
        s1 = np.exp(-lam1.cumulative(t))
        return float(model.p0 * s0 + model.p1 * s1)

    return pooled


@dataclass(frozen=True)
class ExpectedEventsBreakdown:
    """Per-interval expected event counts for one arm at one analysis.

    rows: (interval_start, interval_end, expected_events) on the merged
    breakpoint grid truncated at the analysis time; total is their sum.
    """

    arm: str
    analysis_time: float
    rows: tuple[tuple[float, float, float], ...]

    @property
    def total(self) -> float:
        return sum(r[2] for r in self.rows)


def _interval_events(model: TrialModel, arm: str, a: float, b: float, tau_k: float) -> float:
    """Closed-form expected events (per subject) on [a, b) at analysis tau_k.

    On a segment where hazard lam and dropout eta are constant, the at-risk
    probability is C * exp(-(lam+eta)(s-a)) times the enrollment cdf
    H(tau_k - s), which is piecewise linear in s; the product integrates in
    closed form. Segments are pre-cut so that H's slope is constant too.
    """
    lam = arm_hazard(model, arm)(a)
    if lam == 0.0 or b <= a:
        return 0.0
    eta = model.dropout(arm)(a)
    r = lam + eta
    g_total = cumulative_enrollment(model, model.enroll_duration)

    # survival*censoring mass carried into the segment
    c0 = float(
        np.exp(-arm_hazard(model, arm).cumulative(a) - model.dropout(arm).cumulative(a))
    )
    # H(min(tau_a, tau_k - s)) is linear with slope -g(tau_k - s)/G(tau_a);
    # segments are cut at tau_k - (enrollment breakpoints), so the reflected
    # time stays inside one enrollment interval and the slope is constant
    h_a = enrollment_cdf(model, min(model.enroll_duration, tau_k - a))
    reflected_mid = tau_k - 0.5 * (a + b)
    in_window = 0.0 < reflected_mid < model.enroll_duration
    slope = (model.enroll_rate(reflected_mid) / g_total) if in_window else 0.0
    length = b - a
    if r <= 0:
        # no attrition: plain polynomial integral
        integral = h_a * length - 0.5 * slope * length**2
    else:
        decay = np.exp(-r * length)
        integral = h_a * (1.0 - decay) / r - slope * (
            1.0 / r**2 - decay * (length / r + 1.0 / r**2)
        )
    return lam * c0 * float(integral)


def expected_events(model: TrialModel, arm: str, analysis_time: float) -> tuple[float, ExpectedEventsBreakdown]:
    """Expected observed events in one arm by an analysis, per enrolled cohort.

    Returns the absolute expected count for the model's enrollment (multiply
    by N / G(tau_a) to rescale) together with the per-interval breakdown.
    """
    if analysis_time > model.total_duration + 1e-9:
        raise ValueError("analysis_time exceeds total_duration")
    tau_k = float(analysis_time)
    cuts = set(model.breakpoints())
    for bp in model.enroll_rate.breakpoints + (model.enroll_duration,):
        cuts.add(tau_k - bp)
    grid = sorted(c for c in cuts if 0.0 < c < tau_k)
    pts = [0.0] + grid + [tau_k]

    p_arm = model.p0 if arm == "control" else model.p1
    n_arm = cumulative_enrollment(model, model.enroll_duration) * p_arm
    rows = []
    for a, b in zip(pts, pts[1:]):
        if b <= a:
            continue
        per_subject = _interval_events(model, arm, a, b, tau_k)
        rows.append((a, b, n_arm * per_subject))
    breakdown = ExpectedEventsBreakdown(arm=arm, analysis_time=tau_k, rows=tuple(rows))
    return breakdown.total, breakdown


def pooled_expected_events(model: TrialModel, analysis_time: float) -> float:
    """Expected observed events pooled over arms by an analysis."""
    total = 0.0
    for arm in ("control", "experimental"):
        t, _ = expected_events(model, arm, analysis_time)
        total += t
    return total
