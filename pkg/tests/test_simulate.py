"""Sample-path generators and pathwise Stratonovich integration."""

import io
import math

import numpy as np
import pytest

from hermkit import (
    HermiteSpec,
    SamplePath,
    StratonovichConfig,
    chain_rule_residual,
    covariance,
    gen_fgn,
    hermite_polynomial,
    simulate_fbm_exact,
    simulate_hermite_path,
    stratonovich_integral,
    subordinate,
)
from hermkit.simulate import fgn_covariance, partial_sum_std


def test_fgn_covariance_formula():
    # rho(j) = ((j+1)^(2H') - 2 j^(2H') + (j-1)^(2H')) / 2
    h = 0.7
    lags = np.array([0, 1, 2, 5])
    rho = fgn_covariance(h, lags)
    assert rho[0] == 1.0
    assert rho[1] == pytest.approx((2 ** (2 * h) - 2) / 2, rel=1e-14)
    j = 5.0
    assert rho[3] == pytest.approx(
        ((j + 1) ** (2 * h) - 2 * j ** (2 * h) + (j - 1) ** (2 * h)) / 2, rel=1e-14
    )


def test_fgn_sample_lag1_autocorrelation():
    # average the sample lag-1 correlation over a few substreams
    h = 0.7
    target = (2 ** (2 * h) - 2) / 2  # 0.31951...
    acc = []
    for seed in range(6):
        x = gen_fgn(h, 2 ** 14, seed).values
        acc.append(np.mean(x[1:] * x[:-1]) / np.mean(x * x))
    assert np.mean(acc) == pytest.approx(target, abs=0.01)


def test_fgn_unit_variance():
    x = gen_fgn(0.8, 2 ** 15, 11).values
    assert np.var(x) == pytest.approx(1.0, abs=0.05)


def test_hermite_polynomial_values():
    x = np.array([-1.5, 0.0, 0.3, 2.0])
    assert np.allclose(hermite_polynomial(1, x), x)
    assert np.allclose(hermite_polynomial(2, x), x ** 2 - 1)
    assert np.allclose(hermite_polynomial(3, x), x ** 3 - 3 * x)
    assert np.allclose(hermite_polynomial(4, x), x ** 4 - 6 * x ** 2 + 3)


def test_hermite_polynomial_orthogonality():
    # E H_m(xi) H_k(xi) = delta_mk m! under the standard Gaussian; check by
    # Gauss-Hermite quadrature so no sampling noise enters
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    w = weights / weights.sum()
    for m in (1, 2, 3):
        for k in (1, 2, 3):
            inner = float(np.sum(w * hermite_polynomial(m, nodes) * hermite_polynomial(k, nodes)))
            expected = math.factorial(m) if m == k else 0.0
            assert inner == pytest.approx(expected, abs=1e-8)


def test_sample_path_validation_and_csv():
    times = np.array([0.0, 0.5, 1.0])
    values = np.array([0.0, 0.2, -0.1])
    path = SamplePath(times, values, HermiteSpec(0.7, 1), "exact_fbm", 3)
    buf = io.StringIO()
    path.to_csv(buf)
    lines = buf.getvalue().split("\n")
    assert lines[0] == "t,value"
    assert lines[1] == "0.0,0.0"
    assert float(lines[2].split(",")[1]) == 0.2
    with pytest.raises(ValueError, match="start at t=0"):
        SamplePath(times + 1.0, values, None, "exact_fbm", 0)
    with pytest.raises(ValueError, match="strictly increasing"):
        SamplePath(np.array([0.0, 0.5, 0.5]), values, None, "exact_fbm", 0)
    with pytest.raises(ValueError, match="method"):
        SamplePath(times, values, None, "bogus", 0)


def test_fbm_exact_grid_law():
    # the generator is exact in law on its grid: compare sample moments
    h = 0.7
    spec = HermiteSpec(h, 1)
    n_paths = 4000
    at = np.array([0.25, 0.5, 0.75, 1.0])
    vals = np.empty((n_paths, at.size))
    for i in range(n_paths):
        p = simulate_fbm_exact(h, 16, 1.0, 1000 + i)
        idx = np.searchsorted(p.times, at)
        vals[i] = p.values[idx]
    sample = np.cov(vals.T, bias=True)
    analytic = covariance(spec, at[:, None], at[None, :])
    # moment-based standard error of each covariance entry
    se = np.sqrt((np.outer(np.diag(analytic), np.diag(analytic)) + analytic ** 2) / n_paths)
    assert np.all(np.abs(sample - analytic) < 3.5 * se)


def test_fbm_horizon_and_steps():
    p = simulate_fbm_exact(0.6, 8, 2.0, 0)
    assert p.times[-1] == pytest.approx(2.0)
    assert p.times.size == 17
    with pytest.raises(ValueError):
        simulate_fbm_exact(0.6, 0, 1.0, 0)
    with pytest.raises(ValueError):
        simulate_fbm_exact(0.6, 8, -1.0, 0)


def test_partial_sum_std_matches_simulation():
    # sigma_n^2 = Var sum_{i<n} H_k(xi_i); Monte Carlo agreement
    spec = HermiteSpec(0.7, 2)
    n = 256
    sims = []
    for seed in range(400):
        xi = gen_fgn(spec.hurst_prime, n, 5_000 + seed).values
        sims.append(hermite_polynomial(2, xi).sum())
    assert np.std(sims) == pytest.approx(partial_sum_std(spec, n), rel=0.15)


def test_hermite_path_unit_variance_at_one():
    spec = HermiteSpec(0.7, 2)
    ends = []
    for seed in range(1500):
        p = simulate_hermite_path(spec, 256, 1.0, 9_000 + seed)
        ends.append(p.values[-1])
    assert np.var(ends) == pytest.approx(1.0, abs=0.12)


def test_hermite_path_warns_for_tiny_n():
    with pytest.warns(RuntimeWarning, match="asymptotic"):
        simulate_hermite_path(HermiteSpec(0.7, 2), 16, 1.0, 0)


def test_subordinated_market_time_variance():
    # S(t) = X(t^(1/2H)) has Var S(t) = t exactly in law
    spec = HermiteSpec(0.8, 1)
    at_half, at_one = [], []
    for seed in range(1500):
        s = subordinate(spec, 32, 1.0, 20_000 + seed)
        idx = np.searchsorted(s.times, [0.5, 1.0])
        at_half.append(s.values[idx[0]])
        at_one.append(s.values[idx[1]])
    assert np.var(at_half) == pytest.approx(0.5, abs=0.06)
    assert np.var(at_one) == pytest.approx(1.0, abs=0.12)
    s = subordinate(spec, 32, 1.0, 1)
    assert s.method == "subordinated"
    assert s.times[0] == 0.0 and s.values[0] == 0.0


def test_stratonovich_midpoint_exact_for_linear_integrand():
    # sum (x_k + x_{k+1})/2 (x_{k+1} - x_k) telescopes to (x_T^2 - x_0^2)/2
    p = simulate_fbm_exact(0.7, 512, 1.0, 42)
    val = stratonovich_integral(p.values, p, StratonovichConfig(evaluation_point=0.5))
    assert val == pytest.approx((p.values[-1] ** 2 - p.values[0] ** 2) / 2, abs=1e-14)


def test_stratonovich_left_vs_mid_gap_shrinks():
    p = simulate_fbm_exact(0.7, 1024, 1.0, 7)
    gaps = []
    for refinement in (16, 1024):
        left = stratonovich_integral(p.values, p, StratonovichConfig(0.0, refinement))
        mid = stratonovich_integral(p.values, p, StratonovichConfig(0.5, refinement))
        gaps.append(abs(left - mid))
    assert gaps[1] < gaps[0] / 4


def test_stratonovich_validation():
    p = simulate_fbm_exact(0.7, 64, 1.0, 0)
    with pytest.raises(ValueError, match="shape"):
        stratonovich_integral(p.values[:-1], p)
    with pytest.raises(ValueError, match="divide"):
        stratonovich_integral(p.values, p, StratonovichConfig(0.5, 3))


@pytest.mark.parametrize("case", ["square", "exp"])
def test_chain_rule_residual_decreases_under_refinement(case):
    if case == "square":
        g = lambda x, t: x ** 2 / 2
        gx = lambda x, t: x
        gt = lambda x, t: np.zeros_like(np.asarray(t, dtype=float))
    else:
        g = lambda x, t: np.exp(x)
        gx = lambda x, t: np.exp(x)
        gt = lambda x, t: np.zeros_like(np.asarray(t, dtype=float))
    # left-point sums carry the full first-order defect (midpoint is exact
    # for the square case), so refinement must shrink it on every path
    worse = 0
    for seed in range(5):
        p = simulate_fbm_exact(0.7, 1024, 1.0, 600 + seed)
        res = [
            chain_rule_residual(g, gx, gt, p, StratonovichConfig(0.0, r))
            for r in (64, 128, 256, 512, 1024)
        ]
        worse += sum(res[i + 1] >= res[i] for i in range(len(res) - 1))
    assert worse == 0


def test_chain_rule_time_dependent_function():
    g = lambda x, t: np.asarray(t, dtype=float) * x
    gx = lambda x, t: np.asarray(t, dtype=float)
    gt = lambda x, t: np.asarray(x, dtype=float)
    p = simulate_fbm_exact(0.8, 2048, 1.0, 12)
    coarse = chain_rule_residual(g, gx, gt, p, StratonovichConfig(0.0, 128))
    fine = chain_rule_residual(g, gx, gt, p, StratonovichConfig(0.0, 2048))
    assert fine < coarse
