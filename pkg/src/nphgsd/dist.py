"""Joint normal laws for sequential and combination test statistics.

Two kinds of correlated normal vectors appear in sequential designs: the
chain of a single statistic monitored over time, whose correlation between
analyses i <= j is sqrt(t_i / t_j) in information fractions, and blocks of
differently weighted statistics evaluated at one or more analyses, as in
max-combination tests.  This module builds those joint laws and provides the
two probability primitives everything else rests on: rectangle probabilities
of a multivariate normal and first-crossing probabilities along a monitoring
chain.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .model import TrialModel, WeightSpec
from .wlr import cross_variance, wlr_moments

log = logging.getLogger(__name__)

_PSD_FLOOR = -1e-10
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _clip_psd(corr: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(corr)
    rebuilt = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    scale = np.sqrt(np.diag(rebuilt))
    rebuilt = rebuilt / np.outer(scale, scale)
    np.fill_diagonal(rebuilt, 1.0)
    return 0.5 * (rebuilt + rebuilt.T)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Multivariate normal law of a vector of standardised test statistics.

    ``corr`` must be symmetric with unit diagonal.  Matrices that are
    indefinite by no more than a rounding margin (smallest eigenvalue above
    -1e-10, as the correlation formulas occasionally produce) are projected
    back onto the PSD cone and the clip is logged; anything worse raises.

    ``info_fractions`` is only required when the vector is a monitoring
    chain that will be fed to :func:`gs_crossing`.
    """

    labels: tuple[str, ...]
    mean: np.ndarray
    corr: np.ndarray
    info_fractions: np.ndarray | None = None

    def __post_init__(self) -> None:
        k = len(self.labels)
        mean = np.asarray(self.mean, dtype=float)
        corr = np.asarray(self.corr, dtype=float)
        if mean.shape != (k,):
            raise ValueError(f"mean must have shape ({k},), got {mean.shape}")
        if corr.shape != (k, k):
            raise ValueError(f"corr must have shape ({k}, {k}), got {corr.shape}")
        if not np.allclose(corr, corr.T, atol=1e-10):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-10):
            raise ValueError("correlation matrix must have unit diagonal")
        corr = 0.5 * (corr + corr.T)
        min_eig = float(np.linalg.eigvalsh(corr)[0])
        if min_eig < _PSD_FLOOR:
            raise ValueError(
                f"correlation matrix is indefinite (min eigenvalue {min_eig:.3e})"
            )
        if min_eig < 0.0:
            log.info("clipping correlation matrix to PSD (min eigenvalue %.3e)", min_eig)
            corr = _clip_psd(corr)
        if self.info_fractions is not None:
            t = np.asarray(self.info_fractions, dtype=float)
            if t.shape != (k,):
                raise ValueError(f"info_fractions must have shape ({k},), got {t.shape}")
            if np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
                raise ValueError("information fractions must be positive and strictly increasing")
            object.__setattr__(self, "info_fractions", t)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "corr", corr)

    @property
    def k(self) -> int:
        return len(self.labels)

    def with_mean(self, mean: Sequence[float]) -> "JointDistribution":
        """Same correlation structure with a different mean vector."""
        return replace(self, mean=np.asarray(mean, dtype=float))


def canonical(
    info_fractions: Sequence[float],
    expected_z: Sequence[float] | None = None,
) -> JointDistribution:
    """Joint law of one statistic observed at increasing information times.

    Correlations follow the square-root rule Corr(Z_i, Z_j) = sqrt(t_i / t_j)
    for i <= j.  Under a local alternative the component variances stay 1 and
    the means are the supplied drift values (zero when omitted).
    """
    t = np.asarray(info_fractions, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("info_fractions must be a non-empty 1-d sequence")
    if np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
        raise ValueError("information fractions must be positive and strictly increasing")
    k = t.size
    mean = np.zeros(k) if expected_z is None else np.asarray(expected_z, dtype=float)
    corr = np.sqrt(np.minimum.outer(t, t) / np.maximum.outer(t, t))
    labels = tuple(f"analysis {i + 1}" for i in range(k))
    return JointDistribution(labels, mean, corr, t)


def maxcombo_corr(
    model: TrialModel,
    components: Sequence[Sequence[WeightSpec]],
    analysis_times: Sequence[float],
    hypothesis: str = "h1",
) -> JointDistribution:
    """Zero-mean joint law of weighted statistics across analyses.

    ``components[k]`` lists the weightings in play at ``analysis_times[k]``.
    Within one analysis the correlation of two weightings is their normalised
    cross variance.  The same weighting at two analyses follows the
    square-root rule in its own variance function, and the mixed case chains
    the two through the later analysis:

        Corr(Zi(t1), Zj(t2)) = Corr(Zi(t1), Zi(t2)) * Corr(Zi(t2), Zj(t2)).

    ``hypothesis`` selects which variance function ("h0" or "h1") the
    normalisation uses; under the null model the two coincide.
    """
    if hypothesis not in ("h0", "h1"):
        raise ValueError(f"hypothesis must be 'h0' or 'h1', got {hypothesis!r}")
    times = tuple(float(x) for x in analysis_times)
    if len(components) != len(times):
        raise ValueError("components and analysis_times must have equal length")
    entries: list[tuple[int, WeightSpec]] = []
    for k, specs in enumerate(components):
        for spec in specs:
            entries.append((k, spec))
    if not entries:
        raise ValueError("no weightings supplied")

    var_cache: dict[tuple[str, int], float] = {}

    def variance(spec: WeightSpec, k: int) -> float:
        ck = (spec.label(), k)
        if ck not in var_cache:
            m = wlr_moments(model, spec, times[k], n_planned=1.0)
            var_cache[ck] = m.sigma2_h0 if hypothesis == "h0" else m.sigma2_h1
        return var_cache[ck]

    def within(si: WeightSpec, sj: WeightSpec, k: int) -> float:
        if si.label() == sj.label():
            return 1.0
        cov = cross_variance(model, si, sj, times[k], hypothesis=hypothesis)
        return cov / math.sqrt(variance(si, k) * variance(sj, k))

    n = len(entries)
    corr = np.eye(n)
    for a in range(n):
        ka, sa = entries[a]
        for b in range(a + 1, n):
            kb, sb = entries[b]
            if ka == kb:
                rho = within(sa, sb, ka)
            else:
                (k1, s1), (k2, s2) = ((ka, sa), (kb, sb)) if ka < kb else ((kb, sb), (ka, sa))
                rho = math.sqrt(variance(s1, k1) / variance(s1, k2)) * within(s1, s2, k2)
            corr[a, b] = corr[b, a] = rho
    labels = tuple(f"{spec.label()}@{times[k]:g}" for k, spec in entries)
    return JointDistribution(labels, np.zeros(n), corr)


# ---------------------------------------------------------------------------
# rectangle probabilities


class MvnResult(NamedTuple):
    value: float
    error: float
    points: int


_MVN_SEED = 52386
_MVN_SHIFTS = 10
_MVN_LOG2_START = 9
_MVN_LOG2_MAX = 16
_MVN_DIM_CAP = 16


def _cholesky_psd(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    rebuilt = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    jitter = 1e-14
    while jitter <= 1e-8:
        try:
            return np.linalg.cholesky(rebuilt + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("covariance matrix could not be factored")


def _genz_sample(a: np.ndarray, b: np.ndarray, chol: np.ndarray, u: np.ndarray) -> float:
    """Mean of the separation-of-variables integrand over one point set."""
    n = u.shape[0]
    k = a.size
    tiny = 1e-15
    d = np.full(n, ndtr(a[0] / chol[0, 0]))
    e = np.full(n, ndtr(b[0] / chol[0, 0]))
    f = e - d
    y = np.empty((n, k - 1))
    for i in range(1, k):
        z = np.clip(d + u[:, i - 1] * (e - d), tiny, 1.0 - 1e-16)
        y[:, i - 1] = ndtri(z)
        shift = y[:, :i] @ chol[i, :i]
        sd = chol[i, i]
        if sd <= tiny:
            inside = (shift >= a[i]) & (shift <= b[i])
            d = np.zeros(n)
            e = inside.astype(float)
        else:
            d = ndtr((a[i] - shift) / sd)
            e = ndtr((b[i] - shift) / sd)
        f = f * np.clip(e - d, 0.0, None)
    return float(f.mean())


def mvn_rectangle(
    dist: JointDistribution,
    lower: Sequence[float] | float,
    upper: Sequence[float] | float,
    abs_tol: float = 5e-5,
) -> MvnResult:
    """Probability that every component falls inside ``[lower_i, upper_i]``.

    Separation of variables: after a Cholesky factorisation the rectangle
    probability becomes an integral over the unit cube, evaluated on a
    deterministic low-discrepancy point set.  Averaging over a fixed number
    of randomly shifted copies of the point set (shifts drawn once from a
    fixed seed, so results are reproducible) yields an error estimate, and
    the point count doubles until that estimate drops below ``abs_tol``.
    Variables are visited in order of increasing marginal probability mass,
    which concentrates the variation in the early coordinates where the
    point set is most uniform.
    """
    k = dist.k
    if k > _MVN_DIM_CAP:
        raise ValueError(f"rectangle probability supports at most {_MVN_DIM_CAP} dimensions, got {k}")
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (k,)) - dist.mean
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (k,)) - dist.mean
    if np.any(hi <= lo):
        return MvnResult(0.0, 0.0, 0)
    if k == 1:
        p = float(ndtr(hi[0]) - ndtr(lo[0]))
        return MvnResult(max(p, 0.0), 0.0, 0)

    order = np.argsort(ndtr(hi) - ndtr(lo), kind="stable")
    a = lo[order]
    b = hi[order]
    chol = _cholesky_psd(dist.corr[np.ix_(order, order)])

    shifts = np.random.default_rng(_MVN_SEED).random((_MVN_SHIFTS, k - 1))
    value = 0.0
    error = math.inf
    total = 0
    m = _MVN_LOG2_START
    while True:
        pts = qmc.Sobol(k - 1, scramble=False).random_base2(m)
        estimates = np.array(
            [_genz_sample(a, b, chol, (pts + s) % 1.0) for s in shifts]
        )
        total = pts.shape[0] * _MVN_SHIFTS
        value = float(estimates.mean())
        error = 3.0 * float(estimates.std(ddof=1)) / math.sqrt(_MVN_SHIFTS)
        if error <= abs_tol or m >= _MVN_LOG2_MAX:
            break
        m += 1
    if error > abs_tol:
        log.warning("rectangle probability stopped at error %.2e > %.2e", error, abs_tol)
    return MvnResult(min(max(value, 0.0), 1.0), error, total)


# ---------------------------------------------------------------------------
# first-crossing probabilities along a monitoring chain


class CrossingProbabilities(NamedTuple):
    upper: np.ndarray
    lower: np.ndarray

    @property
    def total_upper(self) -> float:
        return float(self.upper.sum())

    @property
    def total_lower(self) -> float:
        return float(self.lower.sum())


_GRID_BASE = 181
_GRID_RANGE = 6.0
_GRID_TOL = 1e-7
_GRID_NODE_CAP = 3000


def _simpson_weights(nodes: int, step: float) -> np.ndarray:
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (step / 3.0)


def _crossing_pass(
    mu: np.ndarray,
    t: np.ndarray,
    up: np.ndarray,
    lo: np.ndarray,
    nodes: int,
) -> CrossingProbabilities:
    k = mu.size
    pup = np.zeros(k)
    plo = np.zeros(k)
    grid = wts = dens = None
    for i in range(k):
        if i == 0:
            pup[0] = float(ndtr(mu[0] - up[0]))
            plo[0] = float(ndtr(lo[0] - mu[0]))
        else:
            r = math.sqrt(t[i - 1] / t[i])
            s = math.sqrt(1.0 - r * r)
            m_cond = mu[i] + r * (grid - mu[i - 1])
            base = wts * dens
            pup[i] = float(base @ ndtr((m_cond - up[i]) / s))
            plo[i] = float(base @ ndtr((lo[i] - m_cond) / s))
        if i == k - 1:
            break
        glo = max(lo[i], mu[i] - _GRID_RANGE)
        ghi = min(up[i], mu[i] + _GRID_RANGE)
        if ghi <= glo:
            # continuation region empty: the procedure always stops here
            break
        new_grid = np.linspace(glo, ghi, nodes)
        if i == 0:
            new_dens = np.exp(-0.5 * (new_grid - mu[0]) ** 2) / _SQRT_2PI
        else:
            diff = (new_grid[None, :] - m_cond[:, None]) / s
            new_dens = (wts * dens) @ (np.exp(-0.5 * diff**2) / (s * _SQRT_2PI))
        grid = new_grid
        dens = new_dens
        wts = _simpson_weights(nodes, (ghi - glo) / (nodes - 1))
    return CrossingProbabilities(pup, plo)


def gs_crossing(
    dist: JointDistribution,
    upper: Sequence[float],
    lower: Sequence[float] | None = None,
) -> CrossingProbabilities:
    """First-crossing probabilities of a monitored statistic.

    At each analysis the statistic either crosses the upper bound, crosses
    the lower bound, or continues.  The continuation density is propagated
    over a quadrature grid (Simpson weights, range mean +/- 6 SD clipped to
    the bounds) using the conditional normal transition implied by the
    square-root correlation structure.  The grid is refined by doubling
    until successive crossing probabilities agree to within 1e-7.
    """
    if dist.info_fractions is None:
        raise ValueError("gs_crossing needs a distribution carrying information fractions")
    k = dist.k
    mu = dist.mean
    t = dist.info_fractions
    up = np.broadcast_to(np.asarray(upper, dtype=float), (k,)).astype(float)
    lo = (
        np.full(k, -np.inf)
        if lower is None
        else np.broadcast_to(np.asarray(lower, dtype=float), (k,)).astype(float)
    )
    if np.any(lo > up):
        raise ValueError("lower bounds must not exceed upper bounds")

    nodes = _GRID_BASE
    prev: CrossingProbabilities | None = None
    while True:
        cur = _crossing_pass(mu, t, up, lo, nodes)
        if prev is not None:
            delta = max(
                float(np.abs(cur.upper - prev.upper).max()),
                float(np.abs(cur.lower - prev.lower).max()),
            )
            if delta < _GRID_TOL:
                return cur
        if nodes > _GRID_NODE_CAP:
            log.warning("crossing-probability grid stopped refining at %d nodes", nodes)
            return cur
        prev = cur
        nodes = 2 * (nodes - 1) + 1


def maxcombo_critical(dist: JointDistribution, alpha: float, abs_tol: float = 1e-5) -> float:
    """Critical value c with P(max_j Z_j >= c) = alpha under ``dist``.

    Uses the complement identity P(max >= c) = 1 - P(all Z_j < c) so that a
    single rectangle probability is solved for c by root bracketing.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    lo = np.full(dist.k, -np.inf)

    def tail_excess(c: float) -> float:
        rect = mvn_rectangle(dist, lo, np.full(dist.k, c), abs_tol=abs_tol)
        return (1.0 - rect.value) - alpha

    return float(brentq(tail_excess, -2.0, 10.0, xtol=1e-6))
