"""Average hazard ratio summaries and statistical information.

The event-weighted average HR weights each interval's log hazard ratio by the
information its expected events carry; the corresponding sample estimator and
its variance come from interval-censored exponential likelihoods. A bridging
weight maps the same average onto the weighted-logrank scale exactly.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, replace

from .expect import at_risk_probability, expected_events, piecewise_quad
from .model import PiecewiseConstant, TrialModel, WeightSpec, arm_hazard
from .wlr import weight_fn, _weight_cuts

__all__ = ["AhrResult", "ahr_lr", "estimate_ahr", "ahr_wlr", "bridge_weight"]


@dataclass(frozen=True)
class AhrResult:
    """Average-HR summary at one analysis.

    per_interval rows: (start, end, log_hr, weight, expected_d0, expected_d1).
    info_h0/info_h1 are per the model's absolute enrollment (not per subject).
    """

    log_ahr: float
    info_h0: float
    info_h1: float
    per_interval: tuple[tuple[float, float, float, float, float, float], ...]

    @property
    def ahr(self) -> float:
        return math.exp(self.log_ahr)


def _interval_table(model: TrialModel, analysis_time: float):
    """Merged-grid rows of (start, end, lam0, lam1, E[d0], E[d1])."""
    _, down0 = expected_events(model, "control", analysis_time)
    _, down1 = expected_events(model, "experimental", analysis_time)
    lam0 = arm_hazard(model, "control")
    lam1 = arm_hazard(model, "experimental")
    rows = []
    for (a, b, d0), (_, _, d1) in zip(down0.rows, down1.rows):
        rows.append((a, b, lam0(a), lam1(a), d0, d1))
    return rows


def _aligned_null(model: TrialModel) -> TrialModel:
    """No-effect counterpart that keeps the hazard-ratio grid of the design.

    Preserving the breakpoints keeps the per-interval breakdown row-aligned
    with the design model's, which the interval sums below rely on.
    """
    hr = model.hazard_ratio
    ones = PiecewiseConstant(hr.breakpoints, (1.0,) * len(hr.values))
    return replace(model, hazard_ratio=ones)


def _single_stratum_cells(model: TrialModel, analysis_time: float):
    cells = []
    for a, b, l0, l1, d0, d1 in _interval_table(model, analysis_time):
        if d0 <= 0 and d1 <= 0:
            continue
        if l0 <= 0 or l1 <= 0:
            raise ValueError(
                f"log hazard ratio undefined on [{a:g}, {b:g}): "
                f"one arm has zero hazard with event mass present"
            )
        phi = math.log(l1 / l0)
        weight = 0.0
        if d0 > 0 and d1 > 0:
            weight = 1.0 / (1.0 / d0 + 1.0 / d1)
        cells.append((a, b, phi, weight, d0, d1))
    return cells


def ahr_lr(model: TrialModel, analysis_time: float) -> AhrResult:
    """Event-weighted average hazard ratio and its information at an analysis.

    Interval weights are the inverse-variance weights of the per-interval log
    rate-ratio estimates under the design alternative; the null information
    splits each interval's expected events equally between arms.
    """
    strata = model.strata if model.strata else ((1.0, model),)
    cells: list[tuple[float, float, float, float, float, float]] = []
    info_h1 = 0.0
    info_h0 = 0.0
    num = 0.0
    for frac, sub in strata:
        nulled = _aligned_null(sub)
        for (a, b, phi, w, d0, d1), (_, _, _, _, nd0, nd1) in zip(
            _single_stratum_cells(sub, analysis_time),
            _single_stratum_cells_null(nulled, analysis_time),
            strict=True,
        ):
            w_scaled = frac * w
            num += w_scaled * phi
            info_h1 += w_scaled
            if nd0 > 0 and nd1 > 0:
                info_h0 += frac / (1.0 / nd0 + 1.0 / nd1)
            cells.append((a, b, phi, w_scaled, frac * d0, frac * d1))
    if info_h1 <= 0:
        raise ValueError("no interval carries information before the analysis")
    total_w = sum(c[3] for c in cells)
    normalized = tuple((a, b, phi, w / total_w, d0, d1) for a, b, phi, w, d0, d1 in cells)
    return AhrResult(
        log_ahr=num / info_h1,
        info_h0=info_h0,
        info_h1=info_h1,
        per_interval=normalized,
    )


def _single_stratum_cells_null(nulled: TrialModel, analysis_time: float):
    """Like _single_stratum_cells but on the no-effect model (phi irrelevant)."""
    cells = []
    for a, b, l0, l1, d0, d1 in _interval_table(nulled, analysis_time):
        if d0 <= 0 and d1 <= 0:
            continue
        cells.append((a, b, 0.0, 0.0, d0, d1))
    return cells


def estimate_ahr(interval_data) -> tuple[float, float]:
    """Sample average hazard ratio from per-interval counts.

    interval_data: iterable of (d_0, T_0, d_1, T_1) with event counts d and
    total at-risk exposure T per arm and interval. Intervals with no events
    in either arm get zero weight. Returns (log AHR estimate, variance).
    """
    num = 0.0
    info = 0.0
    for d0, t0, d1, t1 in interval_data:
        if t0 <= 0 or t1 <= 0:
            raise ValueError("exposures must be positive")
        if d0 <= 0 or d1 <= 0:
            continue
        phi_hat = math.log(d1 / t1) - math.log(d0 / t0)
        w = 1.0 / (1.0 / d0 + 1.0 / d1)
        num += w * phi_hat
        info += w
    if info <= 0:
        raise ValueError("every interval is weightless; cannot estimate")
    return num / info, 1.0 / info


def ahr_wlr(
    model: TrialModel,
    spec: WeightSpec | Callable[[float], float],
    analysis_time: float,
) -> float:
    """Log average HR implied by a weighted logrank statistic.

    The drift's hazard difference is linearized as log(lam1/lam0) against the
    same weight and at-risk mass, giving a first-order average of the log HR
    under the chosen weighting.
    """
    tau_k = float(analysis_time)
    if isinstance(spec, WeightSpec):
        w = weight_fn(spec, model)
        cuts = _weight_cuts(spec) + (tau_k,)
    else:
        # a plain callable (e.g. the bridging weight); cut at its knots if any
        w = spec
        knots = getattr(spec, "breakpoints", ())
        cuts = tuple(knots) + (tau_k,)
    lam0_fn = arm_hazard(model, "control")
    lam1_fn = arm_hazard(model, "experimental")
    p0, p1 = model.p0, model.p1

    def psi(t: float) -> float:
        pi0 = at_risk_probability(model, "control", t, tau_k)
        pi1 = at_risk_probability(model, "experimental", t, tau_k)
        pib = p0 * pi0 + p1 * pi1
        if pib <= 0:
            return 0.0
        vp = p0 * pi0 * lam0_fn(t) + p1 * pi1 * lam1_fn(t)
        return (p0 * pi0 * p1 * pi1 / pib**2) * vp

    def f_num(t: float) -> float:
        l0, l1 = lam0_fn(t), lam1_fn(t)
        if l0 <= 0 and l1 <= 0:
            return 0.0
        if l0 <= 0 or l1 <= 0:
            raise ValueError(f"log hazard ratio undefined at t={t:g}")
        return w(t) * psi(t) * math.log(l1 / l0)

    num = piecewise_quad(f_num, model, tau_k, extra_cuts=cuts)
    den = piecewise_quad(lambda t: w(t) * psi(t), model, tau_k, extra_cuts=cuts)
    if den <= 0:
        raise ValueError("zero denominator: no weighted at-risk mass")
    return num / den


def bridge_weight(model: TrialModel, analysis_time: float) -> PiecewiseConstant:
    """The piecewise weight under which ahr_wlr reproduces ahr_lr exactly.

    On each merged interval the weight is the event-weighted AHR's interval
    weight divided by that interval's weighted at-risk mass, so the weighted
    integrals collapse onto the interval sums.
    """
    tau_k = float(analysis_time)
    lam0_fn = arm_hazard(model, "control")
    lam1_fn = arm_hazard(model, "experimental")
    p0, p1 = model.p0, model.p1

    def psi(t: float) -> float:
        pi0 = at_risk_probability(model, "control", t, tau_k)
        pi1 = at_risk_probability(model, "experimental", t, tau_k)
        pib = p0 * pi0 + p1 * pi1
        if pib <= 0:
            return 0.0
        vp = p0 * pi0 * lam0_fn(t) + p1 * pi1 * lam1_fn(t)
        return (p0 * pi0 * p1 * pi1 / pib**2) * vp

    breaks: list[float] = [0.0]
    values: list[float] = []
    cursor = 0.0
    for a, b, _, w, d0, d1 in ahr_lr(model, analysis_time).per_interval:
        mass = piecewise_quad(psi, model, b) - piecewise_quad(psi, model, a)
        if mass <= 0:
            if d0 > 0 or d1 > 0:
                raise ValueError(f"interval [{a:g},{b:g}) has events but no at-risk mass")
            continue
        if a > cursor + 1e-12:
            values.append(0.0)
            breaks.append(a)
        values.append(w / mass)
        breaks.append(b)
        cursor = b
    values.append(0.0)  # weight past the analysis time never enters any integral
    return PiecewiseConstant(breaks, values)
