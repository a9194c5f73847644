"""Error spending, sequential boundaries, power, and trial sizing.

Boundaries are solved on a single canonical chain whose time axis is the
spending calendar: the per-analysis minimum of the component information
fractions, each computed with its weight frozen at the no-effect shape so
the calendar does not move with the alternative. Crossing probabilities
under the alternative then re-evaluate the solved thresholds beneath the
full joint law of every component statistic, which is where combination
tests at a subset of analyses enter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from io import StringIO

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .ahr import ahr_lr
from .dist import (
    JointDistribution,
    canonical,
    gs_crossing,
    maxcombo_corr,
    maxcombo_critical,
    mvn_rectangle,
)
from .expect import cumulative_enrollment, enrollment_cdf, pooled_expected_events
from .model import AnalysisSchedule, TestSpec, TrialModel, WeightSpec, csv_field, null_model
from .wlr import anchored_info_fraction, wlr_moments

__all__ = [
    "SpendingFunction",
    "spend",
    "cumulative_spends",
    "DesignBounds",
    "CrossingTable",
    "DesignSummary",
    "planned_n",
    "schedule_times",
    "spending_fractions",
    "efficacy_bounds",
    "futility_bounds",
    "crossing_table",
    "power",
    "mvn_crossing_decomposition",
    "asymptotic_power",
    "build_design",
    "sample_size_nd",
    "sample_size_dn",
]

_Z_CAP = 8.5  # upper-tail mass ~1e-17; spends below that solve to +inf
_INF = math.inf


# ---------------------------------------------------------------------------
# spending functions


@dataclass(frozen=True)
class SpendingFunction:
    """Cumulative error allocation over the spending calendar.

    ``total`` is the overall one-sided error to distribute. ``param`` holds
    the family parameter (power exponent, Hwang-Shih-DeCani gamma) and
    ``levels`` the explicit per-analysis cumulative spends of the fixed
    family, which has no pointwise form.
    """

    family: str
    total: float
    param: float | None = None
    levels: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.total < 1.0:
            raise ValueError("total error must lie in (0, 1)")
        if self.family == "power" and (self.param is None or self.param <= 0):
            raise ValueError("power spending needs rho > 0")
        if self.family == "hwang-shih-decani" and (self.param is None or self.param == 0):
            raise ValueError("hwang-shih-decani spending needs gamma != 0")
        if self.family == "fixed":
            lv = self.levels
            if not lv:
                raise ValueError("fixed spending needs explicit cumulative levels")
            if any(b < a for a, b in zip(lv, lv[1:])) or lv[0] < 0:
                raise ValueError("fixed spending levels must be non-decreasing and non-negative")
            if abs(lv[-1] - self.total) > 1e-12:
                raise ValueError("fixed spending must exhaust the total at the last analysis")
        elif self.family not in ("obrien-fleming", "pocock", "power", "hwang-shih-decani"):
            raise ValueError(f"unknown spending family {self.family!r}")

    @staticmethod
    def obrien_fleming(total: float) -> "SpendingFunction":
        return SpendingFunction("obrien-fleming", total)

    @staticmethod
    def pocock(total: float) -> "SpendingFunction":
        return SpendingFunction("pocock", total)

    @staticmethod
    def power(total: float, rho: float = 2.0) -> "SpendingFunction":
        return SpendingFunction("power", total, param=float(rho))

    @staticmethod
    def hwang_shih_decani(total: float, gamma: float) -> "SpendingFunction":
        return SpendingFunction("hwang-shih-decani", total, param=float(gamma))

    @staticmethod
    def fixed(total: float, levels) -> "SpendingFunction":
        return SpendingFunction("fixed", total, levels=tuple(float(x) for x in levels))

    def cumulative(self, t: float) -> float:
        """Cumulative error spent by spending time ``t``."""
        if t < 0:
            raise ValueError("spending time must be non-negative")
        if t == 0.0:
            return 0.0
        if t >= 1.0:
            return self.total
        a = self.total
        if self.family == "obrien-fleming":
            return 2.0 * float(ndtr(-float(ndtri(1.0 - 0.5 * a)) / math.sqrt(t)))
        if self.family == "pocock":
            return a * math.log1p((math.e - 1.0) * t)
        if self.family == "power":
            return a * t**self.param
        if self.family == "hwang-shih-decani":
            g = self.param
            return a * (1.0 - math.exp(-g * t)) / (1.0 - math.exp(-g))
        raise ValueError("fixed spending is defined per analysis; use cumulative_spends")

    def label(self) -> str:
        if self.param is not None:
            return f"{self.family}({self.param:g})"
        return self.family


def spend(sf: SpendingFunction, t: float) -> float:
    """Cumulative error spent by spending time ``t``."""
    return sf.cumulative(t)


def cumulative_spends(sf: SpendingFunction, fractions) -> np.ndarray:
    """Cumulative spends at each analysis of a spending calendar."""
    t = np.asarray(fractions, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("fractions must be a non-empty 1-d sequence")
    if np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
        raise ValueError("spending fractions must be positive and strictly increasing")
    if sf.family == "fixed":
        if len(sf.levels) != t.size:
            raise ValueError("fixed spending levels must match the number of analyses")
        return np.asarray(sf.levels, dtype=float)
    return np.array([sf.cumulative(x) for x in t])


# ---------------------------------------------------------------------------
# bound containers


@dataclass(frozen=True)
class DesignBounds:
    """Solved monitoring thresholds on the Z scale.

    ``futility`` entries are -inf where no lower bound applies. When type II
    spending was requested the final futility bound equals the final efficacy
    bound, so the last analysis always reaches a decision.
    """

    efficacy: tuple[float, ...]
    futility: tuple[float, ...]
    spend_fractions: tuple[float, ...]
    cumulative_alpha: tuple[float, ...]
    cumulative_beta: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        k = len(self.efficacy)
        if len(self.futility) != k or len(self.spend_fractions) != k or len(self.cumulative_alpha) != k:
            raise ValueError("bound components must share one length")
        if any(a > b for a, b in zip(self.futility, self.efficacy)):
            raise ValueError("futility bounds must not exceed efficacy bounds")

    @property
    def k(self) -> int:
        return len(self.efficacy)

    @property
    def nominal_p(self) -> tuple[float, ...]:
        return tuple(float(ndtr(-b)) for b in self.efficacy)

    @property
    def has_futility(self) -> bool:
        return any(math.isfinite(a) for a in self.futility)


# ---------------------------------------------------------------------------
# schedules and spending calendars


def planned_n(model: TrialModel) -> float:
    """Total expected enrollment at the end of accrual."""
    return cumulative_enrollment(model, model.enroll_duration)


def schedule_times(model: TrialModel, schedule: AnalysisSchedule) -> tuple[float, ...]:
    """Calendar analysis times, inverting expected event counts if needed."""
    if schedule.calendar_based:
        return tuple(schedule.times)
    final = pooled_expected_events(model, model.total_duration)
    out = []
    for d in schedule.event_counts:
        if d >= final:
            raise ValueError(f"target of {d} events exceeds {final:.1f} expected by the study end")
        out.append(brentq(lambda t: pooled_expected_events(model, t) - d, 1e-9, model.total_duration))
    return tuple(out)


def _tests_per_analysis(tests, k: int) -> list[TestSpec]:
    if isinstance(tests, WeightSpec):
        tests = TestSpec.wlr(tests)
    if isinstance(tests, TestSpec):
        return [tests] * k
    out = [TestSpec.wlr(t) if isinstance(t, WeightSpec) else t for t in tests]
    if len(out) != k or not all(isinstance(t, TestSpec) for t in out):
        raise ValueError("tests must be one TestSpec or one per analysis")
    return out


def spending_fractions(model: TrialModel, tests, analysis_times, mode: str = "union-minimum") -> tuple[float, ...]:
    """Spending calendar: minimal component information fraction per analysis.

    ``union-minimum`` minimises over every weighting appearing anywhere in
    the design, so a combination component used only at a late analysis
    already slows spending at the first look. ``at-analysis`` restricts the
    minimum to the components of each analysis's own test.
    """
    times = [float(t) for t in analysis_times]
    per = _tests_per_analysis(tests, len(times))
    paths: dict[str, tuple[float, ...]] = {}
    for ts in per:
        for w in ts.weights:
            if w.label() not in paths:
                paths[w.label()] = anchored_info_fraction(model, w, times)
    if mode == "union-minimum":
        fracs = [min(p[k] for p in paths.values()) for k in range(len(times))]
    elif mode == "at-analysis":
        fracs = [min(paths[w.label()][k] for w in per[k].weights) for k in range(len(times))]
    else:
        raise ValueError(f"unknown spending mode {mode!r}")
    if any(b <= a for a, b in zip(fracs, fracs[1:])):
        raise ValueError("spending fractions must be strictly increasing; check the analysis schedule")
    return tuple(fracs)


# ---------------------------------------------------------------------------
# boundary solving


def _principal(dist: JointDistribution, dim: int) -> JointDistribution:
    return JointDistribution(dist.labels[:dim], dist.mean[:dim], dist.corr[:dim, :dim])


def _chain_efficacy(t_spend, cum: np.ndarray) -> tuple[float, ...]:
    t = np.asarray(t_spend, dtype=float)
    b: list[float] = []
    for k in range(t.size):
        prev = cum[k - 1] if k else 0.0
        inc = cum[k] - prev
        if inc <= 0.0:
            b.append(_INF)
            continue
        if k == 0:
            b.append(-float(ndtri(inc)))
            continue
        sub = canonical(t[: k + 1])

        def resid(x: float) -> float:
            return gs_crossing(sub, [*b[:k], x]).total_upper - cum[k]

        if inc < 1e-9:
            # below the recursion's resolution; the marginal quantile is
            # conservative by at most the (negligible) continuation deficit
            b.append(-float(ndtri(inc)))
        elif resid(-4.0) <= 0.0:
            raise RuntimeError("spend increment exceeds the reachable probability mass")
        else:
            b.append(float(brentq(resid, -4.0, _Z_CAP, xtol=1e-8)))
    return tuple(b)


def _joint_efficacy(model: TrialModel, per: list[TestSpec], times, cum: np.ndarray) -> tuple[float, ...]:
    comps = [list(ts.weights) for ts in per]
    block = maxcombo_corr(null_model(model), comps, times, hypothesis="h0")
    sizes = [len(c) for c in comps]
    b: list[float] = []
    for k in range(len(times)):
        prev = cum[k - 1] if k else 0.0
        inc = cum[k] - prev
        if inc <= 0.0:
            b.append(_INF)
            continue
        dim = sum(sizes[: k + 1])
        sub = _principal(block, dim)

        def resid(x: float) -> float:
            ub = np.concatenate([np.full(sizes[j], bj) for j, bj in enumerate([*b[:k], x])])
            return (1.0 - mvn_rectangle(sub, -_INF, ub, abs_tol=1e-6).value) - cum[k]

        if resid(-2.0) <= 0.0:
            raise RuntimeError("spend increment exceeds the reachable probability mass")
        b.append(float(brentq(resid, -2.0, _Z_CAP, xtol=1e-8)))
    return tuple(b)


def efficacy_bounds(
    spend_fractions,
    alpha_spending: SpendingFunction,
    *,
    method: str = "chain",
    model: TrialModel | None = None,
    tests=None,
    analysis_times=None,
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Upper Z thresholds matching the cumulative type I spends.

    ``chain`` (default) solves every threshold on the canonical chain over
    the spending calendar, so re-integrating the solved design on that chain
    returns the spends identically; this is the construction behind the
    summary tables. ``joint`` instead equates each increment on the joint
    block of all component statistics through that analysis, which needs the
    model and tests and prices the within-analysis maximum explicitly.
    Returns (bounds, cumulative spends). Zero increments give +inf.
    """
    cum = cumulative_spends(alpha_spending, spend_fractions)
    if method == "chain":
        b = _chain_efficacy(spend_fractions, cum)
    elif method == "joint":
        if model is None or tests is None or analysis_times is None:
            raise ValueError("joint bounds need model, tests and analysis_times")
        per = _tests_per_analysis(tests, len(spend_fractions))
        b = _joint_efficacy(model, per, analysis_times, cum)
    else:
        raise ValueError(f"unknown bound method {method!r}")
    return b, tuple(float(c) for c in cum)


def futility_bounds(
    dist_h1: JointDistribution,
    beta_spending: SpendingFunction,
    efficacy,
    *,
    final_equal: bool = True,
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Lower Z thresholds spending type II error under the alternative.

    ``dist_h1`` must be a canonical chain with drift. Interim bounds solve
    the incremental lower-crossing identity with the efficacy bounds in
    force; a bound is left at -inf once the cumulative target is already
    exceeded and capped at the efficacy bound when the increment cannot be
    reached. With ``final_equal`` the last lower bound is set to the last
    efficacy bound so the design terminates with a decision.
    """
    t = dist_h1.info_fractions
    if t is None:
        raise ValueError("dist_h1 must carry information fractions (canonical chain)")
    mean = dist_h1.mean
    cum = cumulative_spends(beta_spending, t)
    b = [float(x) for x in efficacy]
    k_total = len(b)
    a: list[float] = [-_INF] * k_total
    for k in range(k_total - 1):
        sub = canonical(t[: k + 1], mean[: k + 1])

        def resid(x: float) -> float:
            return gs_crossing(sub, b[: k + 1], [*a[:k], x]).total_lower - cum[k]

        cap = min(b[k], _Z_CAP)
        if cum[k] <= 0.0 or resid(-_Z_CAP) >= 0.0:
            continue
        if resid(cap - 1e-9) <= 0.0:
            a[k] = cap
        else:
            a[k] = float(brentq(resid, -_Z_CAP, cap - 1e-9, xtol=1e-8))
    if final_equal:
        a[-1] = b[-1]
    return tuple(a), tuple(float(c) for c in cum)


# ---------------------------------------------------------------------------
# crossing probabilities


@dataclass(frozen=True)
class CrossingTable:
    """First-crossing summary of a bounded design under one model."""

    upper: tuple[float, ...]
    lower: tuple[float, ...] | None
    cumulative_upper: tuple[float, ...]
    cumulative_lower: tuple[float, ...] | None

    @property
    def total(self) -> float:
        return self.cumulative_upper[-1]


def _h1_drift(model: TrialModel, spec: WeightSpec, tau: float, n: float) -> float:
    """Mean of Z under the model, normalised by the variance the test's
    estimator converges to: sqrt(n_k) * delta / sigma_h1. This is the drift
    the simulated statistic actually exhibits; e_z carries the null-variance
    normalisation used on the spending side."""
    m = wlr_moments(model, spec, tau, n)
    return m.e_z * math.sqrt(m.sigma2_h0 / m.sigma2_h1)


def _h1_chain(model: TrialModel, spec: WeightSpec, times, n: float) -> JointDistribution:
    mom = [wlr_moments(model, spec, t, n) for t in times]
    sig = [m.sigma2_h1 for m in mom]
    fracs = [s / sig[-1] for s in sig]
    drifts = [m.e_z * math.sqrt(m.sigma2_h0 / m.sigma2_h1) for m in mom]
    return canonical(fracs, drifts)


def crossing_table(model: TrialModel, tests, analysis_times, upper, lower=None, *, n: float | None = None) -> CrossingTable:
    """Per-analysis crossing probabilities of given bounds under ``model``.

    A design monitored with one weighting throughout follows the canonical
    chain and supports futility bounds, which act as binding (continuation
    requires staying above them). Designs with combination tests or changing
    weightings are evaluated on the joint component block; futility bounds
    are not supported there beyond the decisive final equality.
    """
    times = [float(t) for t in analysis_times]
    per = _tests_per_analysis(tests, len(times))
    if n is None:
        n = planned_n(model)
    upper = [float(u) for u in upper]
    labels = {w.label() for ts in per for w in ts.weights}
    if len(labels) == 1 and not any(ts.is_combo for ts in per):
        dist = _h1_chain(model, per[0].weights[0], times, n)
        res = gs_crossing(dist, upper, lower)
        cum_u = np.cumsum(res.upper)
        cum_l = np.cumsum(res.lower)
        return CrossingTable(
            tuple(float(x) for x in res.upper),
            tuple(float(x) for x in res.lower) if lower is not None else None,
            tuple(float(x) for x in cum_u),
            tuple(float(x) for x in cum_l) if lower is not None else None,
        )
    if lower is not None:
        finite = [
            a for k, a in enumerate(lower) if math.isfinite(a) and not (k == len(times) - 1 and a == upper[k])
        ]
        if finite:
            raise ValueError("futility bounds are only supported for single-weighting designs")
    comps = [list(ts.weights) for ts in per]
    block = maxcombo_corr(model, comps, times, hypothesis="h1")
    mean = np.array([_h1_drift(model, w, times[k], n) for k, ws in enumerate(comps) for w in ws])
    block = block.with_mean(mean)
    sizes = [len(c) for c in comps]
    cum: list[float] = []
    for k in range(len(times)):
        dim = sum(sizes[: k + 1])
        ub = np.concatenate([np.full(sizes[j], upper[j]) for j in range(k + 1)])
        val = mvn_rectangle(_principal(block, dim), -_INF, ub, abs_tol=5e-6).value
        cum.append(1.0 - val)
    cum = np.maximum.accumulate(cum)
    inc = np.diff(cum, prepend=0.0)
    return CrossingTable(tuple(float(x) for x in inc), None, tuple(float(x) for x in cum), None)


def power(model: TrialModel, tests, analysis_times, bounds: DesignBounds, *, n: float | None = None) -> CrossingTable:
    """Cumulative efficacy crossing of a solved design under ``model``."""
    lower = bounds.futility if bounds.has_futility else None
    return crossing_table(model, tests, analysis_times, bounds.efficacy, lower, n=n)


def mvn_crossing_decomposition(dist: JointDistribution, upper) -> np.ndarray:
    """Incremental upper-crossing probabilities by rectangle complements.

    P(first crossing at analysis k) as the difference of consecutive
    no-crossing rectangles, one joint integral per analysis.
    """
    upper = [float(u) for u in upper]
    prev = 1.0
    out = []
    for k in range(dist.k):
        val = mvn_rectangle(_principal(dist, k + 1), -_INF, upper[: k + 1], abs_tol=1e-6).value
        out.append(prev - val)
        prev = val
    return np.array(out)


def asymptotic_power(model: TrialModel, test: TestSpec, analysis_time: float, *, n: float | None = None, alpha: float = 0.025) -> float:
    """Single-analysis rejection probability at one-sided level ``alpha``.

    The critical value is calibrated on the no-effect counterpart of the
    model (plain quantile for one weighting, joint maximum otherwise) and
    evaluated under the model's own law, so feeding a null scenario returns
    its attained type I error.
    """
    if isinstance(test, WeightSpec):
        test = TestSpec.wlr(test)
    tau = float(analysis_time)
    if n is None:
        n = planned_n(model)
    if not test.is_combo:
        drift = _h1_drift(model, test.weights[0], tau, n)
        return float(ndtr(drift + float(ndtri(alpha))))
    comps = [list(test.weights)]
    null_block = maxcombo_corr(null_model(model), comps, [tau], hypothesis="h0")
    crit = maxcombo_critical(null_block, alpha)
    block = maxcombo_corr(model, comps, [tau], hypothesis="h1")
    mean = [_h1_drift(model, w, tau, n) for w in test.weights]
    val = mvn_rectangle(block.with_mean(mean), -_INF, crit, abs_tol=5e-6).value
    return float(1.0 - val)


# ---------------------------------------------------------------------------
# design assembly


@dataclass(frozen=True)
class DesignSummary:
    """Solved design described one analysis per row, bound-table style."""

    analysis_times: tuple[float, ...]
    test_labels: tuple[str, ...]
    n_enrolled: tuple[float, ...]
    events: tuple[float, ...]
    ahr: tuple[float, ...]
    event_fractions: tuple[float, ...]
    bounds: DesignBounds
    cumulative_h0: tuple[float, ...]
    cumulative_h1: tuple[float, ...]
    n_total: float
    alpha: float
    alpha_spending: str
    beta_spending: str | None

    @property
    def k(self) -> int:
        return len(self.analysis_times)

    @property
    def power(self) -> float:
        return self.cumulative_h1[-1]

    def rows(self) -> list[dict]:
        """Flat per-bound rows carrying the per-analysis header fields."""
        out = []
        nominal = self.bounds.nominal_p
        for i in range(self.k):
            head = {
                "analysis": i + 1,
                "time": self.analysis_times[i],
                "n": self.n_enrolled[i],
                "events": self.events[i],
                "ahr": self.ahr[i],
                "event_fraction": self.event_fractions[i],
                "spend_fraction": self.bounds.spend_fractions[i],
                "test": self.test_labels[i],
            }
            out.append(
                head
                | {
                    "bound": "efficacy",
                    "z": self.bounds.efficacy[i],
                    "nominal_p": nominal[i],
                    "cumulative_h1": self.cumulative_h1[i],
                    "cumulative_h0": self.cumulative_h0[i],
                }
            )
            if math.isfinite(self.bounds.futility[i]):
                out.append(
                    head
                    | {
                        "bound": "futility",
                        "z": self.bounds.futility[i],
                        "nominal_p": float(ndtr(self.bounds.futility[i])),
                        "cumulative_h1": None,
                        "cumulative_h0": None,
                    }
                )
        return out

    def to_csv(self) -> str:
        """Report rows with four decimal places, comma separated."""
        cols = (
            "analysis",
            "time",
            "n",
            "events",
            "ahr",
            "event_fraction",
            "spend_fraction",
            "test",
            "bound",
            "z",
            "nominal_p",
            "cumulative_h1",
            "cumulative_h0",
        )
        buf = StringIO()
        buf.write(",".join(cols) + "\n")
        for row in self.rows():
            cells = []
            for c in cols:
                v = row[c]
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(f"{v:.4f}" if math.isfinite(v) else str(v))
                else:
                    cells.append(csv_field(str(v)))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        """Full-precision nested report."""
        payload = {
            "n_total": self.n_total,
            "alpha": self.alpha,
            "power": self.power,
            "alpha_spending": self.alpha_spending,
            "beta_spending": self.beta_spending,
            "analyses": [
                {
                    "time": self.analysis_times[i],
                    "test": self.test_labels[i],
                    "n": self.n_enrolled[i],
                    "events": self.events[i],
                    "ahr": self.ahr[i],
                    "event_fraction": self.event_fractions[i],
                    "spend_fraction": self.bounds.spend_fractions[i],
                    "efficacy_z": self.bounds.efficacy[i],
                    "futility_z": self.bounds.futility[i] if math.isfinite(self.bounds.futility[i]) else None,
                    "nominal_p": self.bounds.nominal_p[i],
                    "cumulative_h1": self.cumulative_h1[i],
                    "cumulative_h0": self.cumulative_h0[i],
                }
                for i in range(self.k)
            ],
        }
        return json.dumps(payload, indent=2)


def build_design(
    model: TrialModel,
    tests,
    analysis_times=None,
    *,
    schedule: AnalysisSchedule | None = None,
    n: float | None = None,
    alpha: float = 0.025,
    alpha_spending: SpendingFunction | None = None,
    beta_spending: SpendingFunction | None = None,
    spend_mode: str = "union-minimum",
    bound_method: str = "chain",
) -> DesignSummary:
    """Solve boundaries for a declared design and assemble its summary table.

    The null column of the summary is the cumulative spend by construction
    (the chain solver equates them); the alternative column re-evaluates the
    thresholds under the model's joint law. Futility needs a design
    monitored with a single weighting throughout.
    """
    if analysis_times is None:
        if schedule is None:
            raise ValueError("provide analysis_times or a schedule")
        analysis_times = schedule_times(model, schedule)
    times = [float(t) for t in analysis_times]
    per = _tests_per_analysis(tests, len(times))
    if n is None:
        n = planned_n(model)
    if alpha_spending is None:
        alpha_spending = SpendingFunction.obrien_fleming(alpha)
    elif abs(alpha_spending.total - alpha) > 1e-12:
        raise ValueError("alpha and alpha_spending.total disagree")
    t_spend = spending_fractions(model, per, times, mode=spend_mode)
    b, cum_a = efficacy_bounds(
        t_spend,
        alpha_spending,
        method=bound_method,
        model=model,
        tests=per,
        analysis_times=times,
    )
    cum_b = None
    if beta_spending is not None:
        labels = {w.label() for ts in per for w in ts.weights}
        if len(labels) != 1 or any(ts.is_combo for ts in per):
            raise ValueError("futility spending needs a single-weighting design")
        dist_h1 = _h1_chain(model, per[0].weights[0], times, n)
        a, cum_b = futility_bounds(dist_h1, beta_spending, b)
    else:
        a = (-_INF,) * len(times)
    bounds = DesignBounds(b, a, t_spend, cum_a, cum_b)
    return summarize_design(model, per, times, bounds, n=n, alpha_label=alpha_spending.label(), beta_label=beta_spending.label() if beta_spending else None)


def summarize_design(
    model: TrialModel,
    tests,
    analysis_times,
    bounds: DesignBounds,
    *,
    n: float | None = None,
    alpha_label: str = "",
    beta_label: str | None = None,
) -> DesignSummary:
    """Expected-count columns plus both crossing columns for solved bounds."""
    times = [float(t) for t in analysis_times]
    per = _tests_per_analysis(tests, len(times))
    if n is None:
        n = planned_n(model)
    scale = n / planned_n(model)
    events = [scale * pooled_expected_events(model, t) for t in times]
    fracs = [d / events[-1] for d in events]
    enrolled = [n * enrollment_cdf(model, t) for t in times]
    hr = [ahr_lr(model, t).ahr for t in times]
    h1 = power(model, per, times, bounds, n=n)
    return DesignSummary(
        analysis_times=tuple(times),
        test_labels=tuple(ts.label() for ts in per),
        n_enrolled=tuple(enrolled),
        events=tuple(events),
        ahr=tuple(hr),
        event_fractions=tuple(fracs),
        bounds=bounds,
        cumulative_h0=bounds.cumulative_alpha,
        cumulative_h1=h1.cumulative_upper,
        n_total=float(n),
        alpha=bounds.cumulative_alpha[-1],
        alpha_spending=alpha_label,
        beta_spending=beta_label,
    )


# ---------------------------------------------------------------------------
# sample size


def _bisect_increasing(fn, target: float, lo: float, hi: float, tol: float) -> float:
    flo = fn(lo)
    if flo >= target:
        return lo
    while fn(hi) < target:
        lo, hi = hi, hi * 2.0
        if hi > 1e9:
            raise RuntimeError("target unattainable: no bracket found")
    while True:
        mid = 0.5 * (lo + hi)
        val = fn(mid)
        if abs(val - target) <= tol or (hi - lo) <= 1e-9 * max(1.0, mid):
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid


def sample_size_nd(
    model: TrialModel,
    test: TestSpec,
    analysis_time: float,
    target_power: float,
    alpha: float = 0.025,
    *,
    drift: str = "design-point",
    tol: float = 1e-5,
) -> tuple[float, float, DesignSummary]:
    """Sample size first, events after: smallest N whose single-analysis
    power meets the target, then d = N times the pooled failure probability.

    ``design-point`` (default) sizes on the planning effect: the drift is
    |log AHR| at the analysis scaled by the no-effect event count, the
    classic event-driven formula evaluated by the same monotone bisection.
    ``full`` instead bisects on the test's own asymptotic power, which for
    heavily weighted statistics can ask for materially different N than the
    planning-effect calculation.
    """
    if isinstance(test, WeightSpec):
        test = TestSpec.wlr(test)
    tau = float(analysis_time)
    if not 0.0 < target_power < 1.0:
        raise ValueError("target_power must lie in (0, 1)")
    base = planned_n(model)
    if drift == "design-point":
        theta = abs(math.log(ahr_lr(model, tau).ahr))
        if theta <= 0.0:
            raise ValueError("no average effect at the analysis; power target unattainable")
        nullm = null_model(model)
        v_null = pooled_expected_events(nullm, tau) / base
        za = -float(ndtri(alpha))

        def pw(n_subjects: float) -> float:
            return float(ndtr(theta * math.sqrt(model.p0 * model.p1 * n_subjects * v_null) - za))

    elif drift == "full":

        def pw(n_subjects: float) -> float:
            return asymptotic_power(model, test, tau, n=n_subjects, alpha=alpha)

    else:
        raise ValueError(f"unknown drift mode {drift!r}")
    n = _bisect_increasing(pw, target_power, 1.0, max(4.0, 2.0 * base), tol)
    d = n * pooled_expected_events(model, tau) / base
    scaled = replace(model, enroll_rate=model.enroll_rate.scaled(n / base))
    za = -float(ndtri(alpha))
    bounds = DesignBounds((za,), (-_INF,), (1.0,), (alpha,))
    summary = summarize_design(scaled, test, (tau,), bounds, alpha_label="fixed")
    return n, d, summary


def sample_size_dn(
    model: TrialModel,
    analysis_times,
    target_power: float,
    alpha: float = 0.025,
    *,
    alpha_spending: SpendingFunction | None = None,
    beta_spending: SpendingFunction | None = None,
    spend_mode: str = "union-minimum",
) -> tuple[float, tuple[float, ...], DesignSummary]:
    """Events first, enrollment after: scale enrollment until the sequential
    logrank design attains the target power, then report the event targets.

    Spending fractions and boundaries are scale invariant, so they are
    solved once; only the drift moves with the scale. With type II spending
    the scale solves the closure residual instead: the final lower bound
    implied by the remaining budget must land exactly on the final efficacy
    bound.
    """
    times = [float(t) for t in analysis_times]
    spec = WeightSpec.logrank()
    test = TestSpec.wlr(spec)
    if alpha_spending is None:
        alpha_spending = SpendingFunction.obrien_fleming(alpha)
    t_spend = spending_fractions(model, test, times, mode=spend_mode)
    b, cum_a = efficacy_bounds(t_spend, alpha_spending)
    base = planned_n(model)
    chain0 = _h1_chain(model, spec, times, 1.0)
    if chain0.mean[-1] <= 0.0:
        raise ValueError("no average benefit by the final analysis; power target unattainable")

    if beta_spending is None:

        def fn(c: float) -> float:
            dist = chain0.with_mean(chain0.mean * math.sqrt(c * base))
            return gs_crossing(dist, b).total_upper

        scale = _bisect_increasing(fn, target_power, 1e-3, 4.0, 1e-10)
    else:
        cum_b = cumulative_spends(beta_spending, t_spend)

        def closure(c: float) -> float:
            dist = chain0.with_mean(chain0.mean * math.sqrt(c * base))
            a, _ = futility_bounds(dist, beta_spending, b, final_equal=False)
            res = gs_crossing(dist, b, [*a[:-1], b[-1]])
            # with the final lower bound forced onto the efficacy bound, the
            # total miss probability must exhaust the type II budget exactly
            return cum_b[-1] - res.total_lower

        lo, hi = 1e-3, 4.0
        while closure(hi) < 0.0:
            hi *= 2.0
            if hi > 64.0:
                raise RuntimeError("type II budget unattainable within any enrollment scale")
        scale = float(brentq(closure, lo, hi, xtol=1e-8))
    n = scale * base
    scaled = replace(model, enroll_rate=model.enroll_rate.scaled(scale))
    d = tuple(pooled_expected_events(scaled, t) for t in times)
    cum_bt = None
    if beta_spending is not None:
        dist = chain0.with_mean(chain0.mean * math.sqrt(n))
        a, cum_bt = futility_bounds(dist, beta_spending, b)
    else:
        a = (-_INF,) * len(times)
    bounds = DesignBounds(b, a, t_spend, cum_a, cum_bt)
    summary = summarize_design(
        scaled,
        test,
        times,
        bounds,
        alpha_label=alpha_spending.label(),
        beta_label=beta_spending.label() if beta_spending else None,
    )
    return n, d, summary
