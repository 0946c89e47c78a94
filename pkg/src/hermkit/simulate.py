"""Sample-path generation for Hermite motions and pathwise integration.

Three generators, one integration tool:

* :func:`simulate_fbm_exact` — fractional Brownian motion with the exact
  grid law (circulant-embedding fractional Gaussian noise, cumulated);
* :func:`simulate_hermite_path` — any order k via the invariance-principle
  construction: partial sums of the order-k Hermite polynomial applied to a
  Gaussian sequence with Hurst index H' = 1 + (H-1)/k, normalized by the
  exact partial-sum standard deviation so Var(X(1)) = 1;
* :func:`subordinate` — the market-time process S(t) = X(t^(1/2H)), whose
  variance is exactly t (self-similarity index 1/2, increments not
  stationary);
* :func:`stratonovich_integral` / :func:`chain_rule_residual` — forward-type
  Riemann sums with the integrand evaluated at an arbitrary point
  (1-delta)*t_k + delta*t_{k+1} of each subinterval, and the first-order
  chain-rule defect computed with them.

All generators are deterministic functions of (inputs, seed); Monte Carlo
callers derive per-path substreams from (seed, path index) so batch results
do not depend on scheduling order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, IO

import numpy as np

from .kernel import HermiteSpec

_METHODS = ("exact_fbm", "invariance_principle", "subordinated")


@dataclass(frozen=True)
class SamplePath:
    """A simulated path on a strictly increasing time grid starting at 0."""

    times: np.ndarray
    values: np.ndarray
    spec: HermiteSpec
    method: str
    seed: int

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size != values.size or times.size < 2:
            raise ValueError("times/values must be equal-length 1-D arrays, length >= 2")
        if times[0] != 0.0 or values[0] != 0.0:
            raise ValueError("paths start at t=0 with value 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}; got {self.method!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def to_csv(self, buf: IO[str]) -> None:
        """Write the path as `t,value` rows at full double precision."""
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "value"])
        for t, v in zip(self.times, self.values):
            writer.writerow([repr(float(t)), repr(float(v))])


@dataclass(frozen=True)
class GaussianSequence:
    """Stationary zero-mean unit-variance Gaussian sequence with fGn covariance."""

    values: np.ndarray
    hurst_prime: float
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass(frozen=True)
class StratonovichConfig:
    """Where in each subinterval the integrand is read, and how finely.

    ``evaluation_point`` is the delta in [0, 1] of the sampling site
    (1-delta)*t_k + delta*t_{k+1}; the limit does not depend on it for
    Hurst > 1/2, which the integrator's callers verify by refinement.
    ``refinement`` is the number of subintervals actually used; it must
    divide the driver's interval count.
    """

    evaluation_point: float = 0.0
    refinement: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.evaluation_point <= 1.0):
            raise ValueError("evaluation_point must lie in [0, 1]")
        if self.refinement is not None and self.refinement < 1:
            raise ValueError("refinement must be a positive integer")


def _rng(seed: int, *keys: int) -> np.random.Generator:
    """Deterministic substream for (seed, keys); keys split path indices."""
    seq = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return np.random.default_rng(seq)


def fgn_covariance(hurst_prime: float, lags) -> np.ndarray:
    """Autocovariance rho(k) = 0.5*(|k+1|^2H' - 2|k|^2H' + |k-1|^2H')."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * hurst_prime
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


def gen_fgn(hurst_prime: float, n: int, seed: int) -> GaussianSequence:
    """n draws of fractional Gaussian noise by circulant embedding.

    The covariance sequence rho(0..n) is reflected into a circulant of size
    2n whose eigenvalues (an FFT of the first row) are nonnegative for all
    H' in (1/2, 1); two independent standard-normal vectors then produce an
    exact sample in O(n log n).  If an eigenvalue ever comes out negative
    beyond roundoff the function warns and falls back to dense Cholesky.
    """
    if not (0.5 < hurst_prime < 1.0):
        raise ValueError(f"hurst_prime must lie in (1/2, 1); got {hurst_prime}")
    if n < 2:
        raise ValueError(f"need n >= 2 draws; got {n}")
    rng = _rng(seed)
    rho = fgn_covariance(hurst_prime, np.arange(n + 1))
    row = np.concatenate([rho[:-1], rho[:0:-1]])  # rho_0..rho_{n-1}, rho_n..rho_1
    lam = np.fft.fft(row).real
    m = 2 * n
    if lam.min() < -1e-9 * lam.max():
        warnings.warn(
            f"circulant embedding produced a negative eigenvalue "
            f"({lam.min():.3e}); falling back to dense Cholesky",
            RuntimeWarning,
        )
        cov = fgn_covariance(hurst_prime, np.subtract.outer(np.arange(n), np.arange(n)))
        chol = np.linalg.cholesky(cov)
        return GaussianSequence(chol @ rng.standard_normal(n), hurst_prime, seed)
    lam = np.maximum(lam, 0.0)
    a = rng.standard_normal(m)
    b = rng.standard_normal(m)
    w = np.empty(m, dtype=complex)
    w[0] = math.sqrt(lam[0] / m) * a[0]
    w[n] = math.sqrt(lam[n] / m) * a[n]
    k = np.arange(1, n)
    scale = np.sqrt(lam[k] / (2.0 * m))
    w[k] = scale * (a[k] + 1j * b[k])
    w[m - k] = scale * (a[k] - 1j * b[k])
    values = np.fft.fft(w).real[:n]
    return GaussianSequence(values, hurst_prime, seed)


def hermite_polynomial(m: int, x):
    """Probabilists' Hermite polynomial He_m(x) by the three-term recurrence.

    He_0 = 1, He_1 = x, He_{m+1} = x*He_m - m*He_{m-1}; orthogonal under the
    standard Gaussian with E[He_l(Z) He_m(Z)] = m! * [l == m].  Accepts
    scalars or arrays.
    """
    if int(m) != m or m < 0:
        raise ValueError(f"order must be a nonnegative integer; got {m!r}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if m == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for j in range(1, m):
        prev, cur = cur, x * cur - j * prev
    return cur if cur.ndim else float(cur)


def partial_sum_std(spec: HermiteSpec, n: int) -> float:
    """Exact standard deviation of sum_{j<n} He_k(xi_j) for fGn xi at H'.

    Uses E[He_k(xi_0) He_k(xi_i)] = k! * rho(i)^k, so the variance is
    k! * sum_{|i|<n} (n - |i|) rho(i)^k — an O(n) computation that replaces
    the asymptotic normalizer and pins Var at one path-unit exactly.
    """
    k = spec.order
    rho = fgn_covariance(spec.hurst_prime, np.arange(n))
    weights = n - np.arange(n, dtype=float)
    var = math.factorial(k) * (n * 1.0 + 2.0 * float(weights[1:] @ rho[1:] ** k))
    return math.sqrt(var)


def simulate_hermite_path(
    spec: HermiteSpec, n: int, horizon: float, seed: int
) -> SamplePath:
    """Invariance-principle Hermite path on the grid k/n, k = 0..ceil(n*T).

    Draws fractional Gaussian noise at H' = 1 + (H-1)/k (so the correlation
    decay exponent 2H'-2 equals (2H-2)/k), applies the order-k Hermite
    polynomial, and cumulates, dividing by the exact n-term partial-sum
    standard deviation: the value at t=1 has unit variance by construction,
    and the process converges in law to the unit-variance Hermite motion.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive; got {horizon}")
    if n <= 0:
        raise ValueError(f"steps per unit time must be positive; got {n}")
    if n < 64:
        warnings.warn(
            f"n={n} steps per unit time is small; the invariance-principle "
            "law is asymptotic and finite-n bias will be noticeable",
            RuntimeWarning,
        )
    m = math.ceil(n * horizon)
    xi = gen_fgn(spec.hurst_prime, m, seed).values
    blocks = hermite_polynomial(spec.order, xi)
    values = np.concatenate([[0.0], np.cumsum(blocks)]) / partial_sum_std(spec, n)
    times = np.arange(m + 1) / n
    return SamplePath(times, values, spec, "invariance_principle", seed)


def simulate_fbm_exact(hurst: float, n: int, horizon: float, seed: int) -> SamplePath:
    """Fractional Brownian motion with the exact finite-dimensional grid law.

    Fractional Gaussian noise increments scaled by (1/n)^H cumulate to a
    Gaussian vector whose covariance matches
    (t^2H + s^2H - |t-s|^2H)/2 exactly on the grid.
    """
    if horizon <= 0 or n <= 0:
        raise ValueError("n and horizon must be positive")
    spec = HermiteSpec(hurst, 1)
    m = math.ceil(n * horizon)
    xi = gen_fgn(hurst, m, seed).values
    values = np.concatenate([[0.0], np.cumsum(xi)]) * (1.0 / n) ** hurst
    times = np.arange(m + 1) / n
    return SamplePath(times, values, spec, "exact_fbm", seed)


def subordinate(
    source: HermiteSpec | SamplePath,
    n: int,
    horizon: float,
    seed: int,
    oversample: int = 8,
) -> SamplePath:
    """Market-time process S(t) = X(t^(1/2H)) on a uniform t-grid.

    Given a spec, the driver X is simulated on a fine uniform grid covering
    the warped horizon T^(1/2H) (``oversample`` times denser than the output
    grid needs) and each output time reads the nearest fine-grid sample; the
    snapping error vanishes as oversample grows.  Given an existing path,
    its own grid is used as the fine grid.  Var S(t) = t exactly in law,
    but increments are not stationary.
    """
    if horizon <= 0 or n <= 0:
        raise ValueError("n and horizon must be positive")
    if isinstance(source, SamplePath):
        driver, spec = source, source.spec
    else:
        spec = source
        warped_horizon = horizon ** (1.0 / (2.0 * spec.hurst))
        fine_n = max(64, math.ceil(oversample * n * horizon / warped_horizon))
        if spec.order == 1:
            driver = simulate_fbm_exact(spec.hurst, fine_n, warped_horizon, seed)
        else:
            driver = simulate_hermite_path(spec, fine_n, warped_horizon, seed)
    times = np.arange(math.ceil(n * horizon) + 1) / n
    warped = times ** (1.0 / (2.0 * spec.hurst))
    if warped[-1] > driver.times[-1] * (1.0 + 1e-12):
        raise ValueError("driver path is shorter than the warped horizon")
    idx = np.clip(
        np.searchsorted(driver.times, warped, side="left"), 0, driver.times.size - 1
    )
    back = np.maximum(idx - 1, 0)
    use_back = np.abs(driver.times[back] - warped) < np.abs(driver.times[idx] - warped)
    idx = np.where(use_back, back, idx)
    values = driver.values[idx].copy()
    values[0] = 0.0  # warped[0] = 0 maps to the driver origin exactly
    return SamplePath(times, values, spec, "subordinated", seed)


def _subgrid(length: int, refinement: int | None) -> np.ndarray:
    intervals = length - 1
    n = intervals if refinement is None else refinement
    if n < 1 or intervals % n != 0:
        raise ValueError(
            f"refinement {n} does not divide the {intervals} driver intervals"
        )
    return np.arange(0, length, intervals // n)


def stratonovich_integral(
    f, driver: SamplePath, config: StratonovichConfig | None = None
) -> float:
    """Riemann sum sum_k f((1-d)t_k + d t_{k+1}) (X_{k+1} - X_k).

    ``f`` holds integrand values on the driver grid; off-node evaluation
    sites are read by linear interpolation, i.e. the k-th summand weight is
    (1-d) f_k + d f_{k+1}.  The sum is taken over ``config.refinement``
    equal subintervals of the grid (all of it by default); convergence as
    the refinement grows is the caller's concern.
    """
    cfg = config or StratonovichConfig()
    f = np.asarray(f, dtype=float)
    if f.shape != driver.times.shape:
        raise ValueError(
            f"integrand has shape {f.shape}, driver grid {driver.times.shape}"
        )
    idx = _subgrid(driver.times.size, cfg.refinement)
    d = cfg.evaluation_point
    fk = f[idx]
    site = (1.0 - d) * fk[:-1] + d * fk[1:]
    return float(site @ np.diff(driver.values[idx]))


def chain_rule_residual(
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    dg_dx: Callable[[np.ndarray, np.ndarray], np.ndarray],
    dg_dt: Callable[[np.ndarray, np.ndarray], np.ndarray],
    driver: SamplePath,
    config: StratonovichConfig | None = None,
) -> float:
    """First-order chain-rule defect of G along the driver path.

    Returns |G(X_T, T) - G(X_0, 0) - int dG/dx * dX - int dG/dt dt| with the
    stochastic term a Stratonovich-type sum and the time term the matching
    deterministic Riemann sum on the same subgrid.  For Hurst > 1/2 the
    defect vanishes under refinement (no second-order correction term).
    """
    cfg = config or StratonovichConfig()
    t, x = driver.times, driver.values
    fx = dg_dx(x, t)
    residual = (
        float(g(x[-1], t[-1]) - g(x[0], t[0]))
        - stratonovich_integral(fx, driver, cfg)
    )
    idx = _subgrid(t.size, cfg.refinement)
    d = cfg.evaluation_point
    ft = dg_dt(x[idx], t[idx])
    site = (1.0 - d) * ft[:-1] + d * ft[1:]
    residual -= float(site @ np.diff(t[idx]))
    return abs(residual)
