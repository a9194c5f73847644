"""Joint distribution engine: closed forms, scipy cross-checks, closure."""

import math

import numpy as np
import pytest
from scipy import optimize, stats

from nphgsd import (
    JointDistribution,
    WeightSpec,
    canonical,
    gs_crossing,
    maxcombo_corr,
    maxcombo_critical,
    mvn_rectangle,
)


def test_canonical_correlation():
    dist = canonical((0.25, 0.5, 1.0))
    assert dist.corr[0, 1] == pytest.approx(math.sqrt(0.5))
    assert dist.corr[0, 2] == pytest.approx(0.5)
    assert dist.corr[1, 2] == pytest.approx(math.sqrt(0.5))
    assert np.all(dist.mean == 0.0)
    np.testing.assert_allclose(dist.info_fractions, (0.25, 0.5, 1.0))


def test_single_analysis_is_marginal_normal():
    dist = canonical([1.0])
    res = gs_crossing(dist, upper=[1.959964])
    assert res.total_upper == pytest.approx(0.025, abs=1e-6)


def test_trivariate_orthant_closed_form():
    """P(Z1>0, Z2>0, Z3>0) = 1/8 + 3 arcsin(rho) / (4 pi); 0.25 at rho=0.5."""
    rho = 0.5
    corr = np.full((3, 3), rho)
    np.fill_diagonal(corr, 1.0)
    dist = JointDistribution(("a", "b", "c"), np.zeros(3), corr)
    want = 0.125 + 3.0 * math.asin(rho) / (4.0 * math.pi)
    assert want == 0.25
    got = mvn_rectangle(dist, 0.0, np.inf)
    assert got.value == pytest.approx(want, abs=2e-4)


def test_bivariate_orthant_closed_form():
    for rho in (-0.6, 0.0, 0.3, 0.8):
        corr = np.array([[1.0, rho], [rho, 1.0]])
        dist = JointDistribution(("a", "b"), np.zeros(2), corr)
        want = 0.25 + math.asin(rho) / (2.0 * math.pi)
        assert mvn_rectangle(dist, 0.0, np.inf).value == pytest.approx(want, abs=2e-4)


def test_rectangle_against_scipy():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a = rng.normal(size=(5, 5))
        cov = a @ a.T + 5.0 * np.eye(5)
        d = np.sqrt(np.diag(cov))
        corr = cov / np.outer(d, d)
        mean = rng.normal(scale=0.5, size=5)
        lo = rng.uniform(-2.5, -0.5, size=5)
        hi = lo + rng.uniform(1.0, 3.0, size=5)
        dist = JointDistribution(tuple("abcde"), mean, corr)
        got = mvn_rectangle(dist, lo, hi, abs_tol=1e-5)
        want = stats.multivariate_normal(mean=mean, cov=corr, allow_singular=True).cdf(
            hi, lower_limit=lo
        )
        assert got.value == pytest.approx(float(want), abs=3e-4)


def test_maxcombo_critical_bivariate():
    rho = 0.5
    corr = np.array([[1.0, rho], [rho, 1.0]])
    dist = JointDistribution(("a", "b"), np.zeros(2), corr)
    c = maxcombo_critical(dist, 0.025)

    def tail(x):
        inside = stats.multivariate_normal(cov=corr).cdf([x, x])
        return (1.0 - inside) - 0.025

    want = optimize.brentq(tail, 1.5, 3.5, xtol=1e-8)
    assert c == pytest.approx(want, abs=2e-4)
    # more components can only push the critical value up
    assert c > stats.norm.ppf(0.975)


def test_crossing_closure_with_binding_final():
    """With the lower bound meeting the upper bound at the last analysis the
    statistic must be absorbed somewhere, so the totals add to one."""
    dist = canonical((0.3, 0.7, 1.0), expected_z=(0.8, 1.4, 1.8))
    res = gs_crossing(dist, upper=(3.0, 2.5, 2.0), lower=(-1.0, 0.0, 2.0))
    assert res.total_upper + res.total_lower == pytest.approx(1.0, abs=1e-6)
    assert np.all(res.upper >= 0.0) and np.all(res.lower >= 0.0)


def test_crossing_matches_rectangle_decomposition():
    dist = canonical((0.4, 1.0), expected_z=(0.5, 0.9))
    upper = (2.4, 2.0)
    lower = (-0.5, 2.0)
    res = gs_crossing(dist, upper, lower)
    # analysis 1 crossings are plain normal tails
    assert res.upper[0] == pytest.approx(1.0 - stats.norm.cdf(2.4 - 0.5), abs=1e-6)
    assert res.lower[0] == pytest.approx(stats.norm.cdf(-0.5 - 0.5), abs=1e-6)
    # analysis 2 upper crossing: continue at 1, exceed at 2
    want = mvn_rectangle(dist, (lower[0], upper[1]), (upper[0], np.inf), abs_tol=1e-5)
    assert res.upper[1] == pytest.approx(want.value, abs=1e-4)


def test_maxcombo_corr_structure(delayed_model):
    lr = WeightSpec.logrank()
    fh = WeightSpec.fleming_harrington(0.0, 0.5)
    dist = maxcombo_corr(delayed_model, [[lr], [lr, fh]], (20.0, 36.0))
    assert dist.labels == ("logrank@20", "logrank@36", "fh(0,0.5)@36")
    c = dist.corr
    assert np.allclose(np.diag(c), 1.0)
    assert np.all((c > 0.0) & (c <= 1.0))
    # mixed analysis/weight correlation chains through the later analysis
    assert c[0, 2] == pytest.approx(c[0, 1] * c[1, 2], rel=1e-9)
    h0 = maxcombo_corr(delayed_model, [[lr], [lr, fh]], (20.0, 36.0), hypothesis="h0")
    assert not np.allclose(h0.corr, c)


def test_joint_distribution_validation():
    with pytest.raises(ValueError):
        JointDistribution(("a", "b"), np.zeros(3), np.eye(2))
    with pytest.raises(ValueError):
        JointDistribution(("a", "b"), np.zeros(2), np.array([[1.0, 0.2], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        JointDistribution(("a", "b"), np.zeros(2), np.array([[2.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        JointDistribution(("a", "b"), np.zeros(2), np.array([[1.0, 1.2], [1.2, 1.0]]))
    with pytest.raises(ValueError):
        canonical((0.5, 0.4, 1.0))
    shifted = canonical((0.5, 1.0)).with_mean((1.0, 2.0))
    np.testing.assert_allclose(shifted.mean, (1.0, 2.0))
