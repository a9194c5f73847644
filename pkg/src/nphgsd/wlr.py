"""Design-time moments of weighted logrank statistics.

For a weight function w and an analysis at calendar time tau_k, the drift and
the variances under each hypothesis are integrals of the weight against the
model's at-risk and event-density processes. The expected Z is normalized by
the null-hypothesis standard deviation (local-alternative convention), which
is also the scale the efficacy machinery works on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .expect import at_risk_probability, enrollment_cdf, piecewise_quad, pooled_survival_fn
from .model import TrialModel, WeightSpec, arm_hazard, null_model

__all__ = [
    "WlrMoments",
    "weight_fn",
    "weight_eval",
    "wlr_moments",
    "cross_variance",
    "info_fraction",
    "anchored_info_fraction",
]


def weight_fn(spec: WeightSpec, model: TrialModel):
    """Build t -> w(t) for a weight spec on a model.

    FH and bounded-MB weights depend on the model only through its pooled
    survival (the large-sample limit of the left-continuous KM estimator).
    """
    if spec.kind == "logrank":
        return lambda t: 1.0
    if spec.kind == "zero_early":
        t0 = spec.t0
        return lambda t: 0.0 if t < t0 else 1.0
    pooled = pooled_survival_fn(model)
    if spec.kind == "fh":
        p, q = spec.p, spec.q
        return lambda t: pooled(t) ** p * (1.0 - pooled(t)) ** q
    if spec.kind == "mb":
        t_star, w_max = spec.t_star, spec.w_max
        return lambda t: min(w_max, 1.0 / pooled(min(t, t_star)))
    raise ValueError(f"unknown weight kind {spec.kind!r}")


def weight_eval(spec: WeightSpec, model: TrialModel, t: float) -> float:
    """Evaluate a design-time weight at a single time."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return weight_fn(spec, model)(t)


def _weight_cuts(spec: WeightSpec) -> tuple[float, ...]:
    if spec.kind == "mb" and spec.t_star > 0:
        return (spec.t_star,)
    if spec.kind == "zero_early" and spec.t0 > 0:
        return (spec.t0,)
    return ()


@dataclass(frozen=True)
class WlrMoments:
    """Asymptotic ingredients of one weighted logrank Z at one analysis.

    delta is oriented so that lower experimental hazard gives a positive
    drift; e_z = sqrt(n_k) * delta / sigma_h0.
    """

    analysis_time: float
    delta: float
    sigma2_h0: float
    sigma2_h1: float
    n_k: float
    e_z: float


def _raw_integrals(model: TrialModel, w, tau_k: float, cuts) -> tuple[float, float, float]:
    """(delta, sigma2_h1, pooled w^2-weighted event mass) by quadrature."""
    lam0_fn = arm_hazard(model, "control")
    lam1_fn = arm_hazard(model, "experimental")
    p0, p1 = model.p0, model.p1

    def parts(t: float):
        pi0 = at_risk_probability(model, "control", t, tau_k)
        pi1 = at_risk_probability(model, "experimental", t, tau_k)
        pib = p0 * pi0 + p1 * pi1
        vbar_prime = p0 * pi0 * lam0_fn(t) + p1 * pi1 * lam1_fn(t)
        return pi0, pi1, pib, vbar_prime

    def f_delta(t: float) -> float:
        pi0, pi1, pib, _ = parts(t)
        if pib <= 0:
            return 0.0
        return w(t) * (p0 * pi0 * p1 * pi1 / pib) * (lam0_fn(t) - lam1_fn(t))

    def f_sigma_h1(t: float) -> float:
        pi0, pi1, pib, vp = parts(t)
        if pib <= 0:
            return 0.0
        return w(t) ** 2 * (p0 * pi0 * p1 * pi1 / pib**2) * vp

    def f_event_mass(t: float) -> float:
        _, _, _, vp = parts(t)
        return w(t) ** 2 * vp

    delta = piecewise_quad(f_delta, model, tau_k, extra_cuts=cuts)
    sigma2_h1 = piecewise_quad(f_sigma_h1, model, tau_k, extra_cuts=cuts)
    mass = piecewise_quad(f_event_mass, model, tau_k, extra_cuts=cuts)
    return delta, sigma2_h1, mass


def wlr_moments(model: TrialModel, spec: WeightSpec, analysis_time: float, n_planned: float) -> WlrMoments:
    """Drift, variances and expected Z for one weight at one analysis.

    sigma2_h0 keeps the design model's event distribution but replaces the
    at-risk imbalance term by its null value p0*p1; sigma2_h1 uses the full
    alternative form. Both are per-subject; multiply by n for information.
    """
    tau_k = float(analysis_time)
    if tau_k > model.total_duration + 1e-9:
        raise ValueError("analysis_time exceeds total_duration")
    w = weight_fn(spec, model)
    cuts = _weight_cuts(spec) + (tau_k,)
    delta, sigma2_h1, mass = _raw_integrals(model, w, tau_k, cuts)
    sigma2_h0 = model.p0 * model.p1 * mass
    if sigma2_h0 <= 0:
        raise ValueError("no event probability mass before the analysis; degenerate weight")
    n_k = n_planned * enrollment_cdf(model, tau_k)  # everyone enrolled by tau_k counts
    e_z = math.sqrt(n_k) * delta / math.sqrt(sigma2_h0)
    return WlrMoments(
        analysis_time=tau_k,
        delta=delta,
        sigma2_h0=sigma2_h0,
        sigma2_h1=sigma2_h1,
        n_k=n_k,
        e_z=e_z,
    )


def cross_variance(model: TrialModel, spec_i: WeightSpec, spec_j: WeightSpec, analysis_time: float, hypothesis: str = "h0") -> float:
    """Per-subject covariance integrand of two WLR numerators at one analysis.

    Under ``h0`` this is p0*p1 * int w_i w_j dvbar; under ``h1`` the at-risk
    imbalance enters exactly as in the single-weight variance.
    """
    tau_k = float(analysis_time)
    wi = weight_fn(spec_i, model)
    wj = weight_fn(spec_j, model)
    cuts = _weight_cuts(spec_i) + _weight_cuts(spec_j) + (tau_k,)
    lam0_fn = arm_hazard(model, "control")
    lam1_fn = arm_hazard(model, "experimental")
    p0, p1 = model.p0, model.p1

    def f(t: float) -> float:
        pi0 = at_risk_probability(model, "control", t, tau_k)
        pi1 = at_risk_probability(model, "experimental", t, tau_k)
        pib = p0 * pi0 + p1 * pi1
        if pib <= 0:
            return 0.0
        vp = p0 * pi0 * lam0_fn(t) + p1 * pi1 * lam1_fn(t)
        if hypothesis == "h0":
            return wi(t) * wj(t) * p0 * p1 * vp
        return wi(t) * wj(t) * (p0 * pi0 * p1 * pi1 / pib**2) * vp

    return piecewise_quad(f, model, tau_k, extra_cuts=cuts)


def info_fraction(model: TrialModel, spec: WeightSpec, analysis_times) -> tuple[float, ...]:
    """Information fractions n*sigma2_h0(tau_k) / n*sigma2_h0(tau_K).

    For the logrank weight these are exactly the expected event fractions.
    """
    times = [float(t) for t in analysis_times]
    if not times:
        raise ValueError("need at least one analysis time")
    sig = [wlr_moments(model, spec, t, 1.0).sigma2_h0 for t in times]
    final = sig[-1]
    if final <= 0:
        raise ValueError("degenerate variance at the final analysis")
    fracs = tuple(s / final for s in sig)
    if any(b <= a for a, b in zip(fracs, fracs[1:])):
        raise ValueError("information fractions must be strictly increasing")
    return fracs
def anchored_info_fraction(model: TrialModel, spec: WeightSpec, analysis_times) -> tuple[float, ...]:
    """Information fractions with the weight frozen at its no-effect shape.

    Survival-anchored weights (Fleming-Harrington, modestly weighted) are
    rebuilt on the no-effect counterpart of ``model``, so the anchor is the
    null pooled survival curve, and the resulting w^2 mass is accumulated
    against ``model``'s own event stream. Spending calendars stay comparable
    across hypotheses this way. For the logrank weight this again reduces to
    expected event fractions.
    """
    times = [float(t) for t in analysis_times]
    if not times:
        raise ValueError("need at least one analysis time")
    w = weight_fn(spec, null_model(model))
    cuts = _weight_cuts(spec)
    mass = [_raw_integrals(model, w, t, cuts + (t,))[2] for t in times]
    final = mass[-1]
    if final <= 0:
        raise ValueError("degenerate variance at the final analysis")
    fracs = tuple(m / final for m in mass)
    if any(b <= a for a, b in zip(fracs, fracs[1:])):
        raise ValueError("information fractions must be strictly increasing")
    return fracs
