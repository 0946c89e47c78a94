"""Replication pricing: transport PDE, bonds, forwards, futures.

The pricing equation here is first order (pathwise calculus contributes no
diffusion term):

    dg/dt + sum_j x_j (r(t) - delta_j(t)) dg/dx_j - r(t) g = 0,

with r and delta_j the instantaneous fractional rates.  Characteristics
integrate in closed form through cumulative-rate differences, which the
solvers use exactly; the finite-difference route works in log-price
coordinates with first-order upwinding, where the advection speed loses its
x dependence.

Bonds are ratios of riskless prices, forwards are the static replication
short-stock/long-bond portfolio, and the futures payoff-rate field solves a
path-conditional integro-differential identity by explicit marching in the
cumulative-rate time variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .market import (
    AssetPath,
    BasicRate,
    MarketSpec,
    cumulative_rate,
    instantaneous_rate,
)
from .simulate import SamplePath

_PAYOFF_KINDS = ("power_product", "table", "callable")


@dataclass(frozen=True)
class Payoff:
    """Payoff over positive price vectors.

    ``power_product``: prod_j x_j^alpha_j with ``exponents`` = alpha.
    ``table``: 1-d linear interpolation of (nodes, node_values).
    ``callable``: arbitrary vectorised function ``fn``.
    """

    kind: str
    exponents: tuple | None = None
    fn: Callable | None = None
    nodes: tuple | None = None
    node_values: tuple | None = None

    def __post_init__(self) -> None:
        if self.kind not in _PAYOFF_KINDS:
            raise ValueError(f"kind must be one of {_PAYOFF_KINDS}; got {self.kind!r}")
        if self.kind == "power_product" and not self.exponents:
            raise ValueError("power_product payoff needs exponents")
        if self.kind == "callable" and self.fn is None:
            raise ValueError("callable payoff needs fn")
        if self.kind == "table" and (self.nodes is None or self.node_values is None):
            raise ValueError("table payoff needs nodes and node_values")

    @classmethod
    def power(cls, exponents) -> "Payoff":
        exps = tuple(float(a) for a in np.atleast_1d(exponents))
        return cls(kind="power_product", exponents=exps)

    @classmethod
    def from_callable(cls, fn: Callable) -> "Payoff":
        return cls(kind="callable", fn=fn)

    @classmethod
    def from_table(cls, nodes, values) -> "Payoff":
        return cls(kind="table", nodes=tuple(float(x) for x in nodes),
                   node_values=tuple(float(v) for v in values))

    def __call__(self, x):
        """Evaluate at price vector(s); the trailing axis is the asset axis
        when more than one exponent is declared, else elementwise."""
        x_arr = np.asarray(x, dtype=float)
        if self.kind == "power_product":
            a = np.asarray(self.exponents)
            if a.size == 1:
                out = x_arr ** a[0]
            else:
                out = np.prod(x_arr ** a, axis=-1)
        elif self.kind == "table":
            out = np.interp(x_arr, self.nodes, self.node_values)
        else:
            out = np.asarray(self.fn(x_arr), dtype=float)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SmoothField:
    """A scalar field g(t, x) with partials; missing partials fall back to
    central finite differences (relative step 1e-6)."""

    value: Callable
    d_t: Callable | None = None
    d_x: Callable | None = None

    def time_derivative(self, t: float, x: np.ndarray) -> float:
        if self.d_t is not None:
            return float(self.d_t(t, x))
        h = 1e-6 * max(abs(t), 1.0)
        lo = max(t - h, 0.0)
        return (self.value(t + h, x) - self.value(lo, x)) / (t + h - lo)

    def space_gradient(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.d_x is not None:
            return np.atleast_1d(np.asarray(self.d_x(t, x), dtype=float))
        grad = np.empty_like(x)
        for j in range(x.size):
            h = 1e-6 * max(abs(x[j]), 1.0)
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            grad[j] = (self.value(t, xp) - self.value(t, xm)) / (2.0 * h)
        return grad


@dataclass(frozen=True)
class TermStructure:
    """Discount factors Lambda(t, T) on an anchors x maturities grid plus
    the instantaneous rate curve at the anchors."""

    anchors: np.ndarray
    maturities: np.ndarray
    discounts: np.ndarray
    rates: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.anchors, dtype=float)
        m = np.asarray(self.maturities, dtype=float)
        d = np.asarray(self.discounts, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if d.shape != (a.size, m.size) or r.shape != (a.size,):
            raise ValueError("discounts must be (anchors, maturities); rates per anchor")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "maturities", m)
        object.__setattr__(self, "discounts", d)
        object.__setattr__(self, "rates", r)


@dataclass(frozen=True)
class PricingGrid:
    """Price x time grid for the d=1 grid solvers.

    ``x_lo``/``x_hi`` bound the price coordinate (positive); ``nx`` price
    nodes, ``nt`` time steps between ``t_start`` and ``t_end`` (equal
    endpoints yield the trivial single-row field).
    """

    x_lo: float
    x_hi: float
    nx: int
    nt: int
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.x_lo < self.x_hi):
            raise ValueError("need 0 < x_lo < x_hi")
        if self.nx < 2 or self.nt < 1:
            raise ValueError("need nx >= 2 and nt >= 1")
        if not (0.0 <= self.t_start <= self.t_end):
            raise ValueError("need 0 <= t_start <= t_end")


@dataclass(frozen=True)
class PriceField:
    """Tabulated solution g(t, x) of the pricing transport equation."""

    times: np.ndarray
    prices: np.ndarray
    values: np.ndarray

    def at(self, t: float, x: float) -> float:
        """Bilinear interpolation on the field grid."""
        row = np.array([np.interp(t, self.times, self.values[:, j])
                        for j in range(self.prices.size)])
        return float(np.interp(x, self.prices, row))


@dataclass(frozen=True)
class FuturesField:
    """Payoff-rate field psi(x, t) tabulated on an (x, t) grid along with
    the underlying path values x(t_k) and, when produced by the marching
    solver, the accumulated integral I(t_k) and a residual report."""

    x_grid: np.ndarray
    t_grid: np.ndarray
    psi: np.ndarray
    path_values: np.ndarray
    integral: np.ndarray | None = None
    residual: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x_grid, dtype=float)
        t = np.asarray(self.t_grid, dtype=float)
        p = np.asarray(self.psi, dtype=float)
        pv = np.asarray(self.path_values, dtype=float)
        if p.shape != (t.size, x.size) or pv.shape != (t.size,):
            raise ValueError("psi must be (t_grid, x_grid); path_values per time")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "psi", p)
        object.__setattr__(self, "path_values", pv)


def perpetual_pde_residual(g: SmoothField, market: MarketSpec, sample_points) -> np.ndarray:
    """Residual of the pricing transport equation at (t, x) samples.

    Zero (to the accuracy of the supplied partials) exactly when g is a
    replicable perpetual-derivative price field.
    """
    spec = market.spec
    out = []
    for t, x in sample_points:
        x_vec = np.atleast_1d(np.asarray(x, dtype=float))
        if x_vec.size != market.d:
            raise ValueError(f"sample point has {x_vec.size} coordinates; need {market.d}")
        r = instantaneous_rate(spec, market.riskless, t)
        grad = g.space_gradient(t, x_vec)
        res = g.time_derivative(t, x_vec) - r * g.value(t, x_vec)
        for j in range(market.d):
            dj = instantaneous_rate(spec, market.dividends[j], t)
            res += x_vec[j] * (r - dj) * grad[j]
        out.append(res)
    return np.asarray(out, dtype=float)


def price_characteristics(
    payoff: Payoff, market: MarketSpec, t: float, horizon: float, x
) -> float:
    """Exact transport solution: discounted payoff along the characteristic.

    Returns Lambda(t, T) * payoff(x_j * exp(int_t^T (r - delta_j))), with
    every rate integral taken as an exact cumulative-rate difference.
    """
    if horizon < t:
        raise ValueError("horizon must not precede the valuation time")
    x_vec = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_vec <= 0):
        raise ValueError("price coordinates must be strictly positive")
    if x_vec.size != market.d:
        raise ValueError(f"price vector has {x_vec.size} coordinates; need {market.d}")
    spec = market.spec
    dr = cumulative_rate(spec, market.riskless, horizon) - cumulative_rate(
        spec, market.riskless, t
    )
    growth = np.empty_like(x_vec)
    for j in range(market.d):
        dd = cumulative_rate(spec, market.dividends[j], horizon) - cumulative_rate(
            spec, market.dividends[j], t
        )
        growth[j] = math.exp(dr - dd)
    args = x_vec * growth if market.d > 1 else float(x_vec[0] * growth[0])
    return math.exp(-dr) * float(payoff(args))


def price_fd(payoff: Payoff, market: MarketSpec, grid: PricingGrid) -> PriceField:
    """Upwind finite-difference transport solve in log-price, backward from
    the terminal payoff at ``grid.t_end``.

    Per-step advection shifts and discounts are exact cumulative-rate
    differences, so with the unit Courant number the scheme degenerates to
    an exact shift; otherwise it is the standard first-order upwind
    (equivalently, linear interpolation at the departure point).  Courant
    numbers above 1 trigger automatic time-step halving; characteristics
    entering through a boundary take their exact discounted payoff values.
    Only single-asset markets are supported on the grid route.
    """
    if market.d != 1:
        raise ValueError("grid pricing works in one price dimension; "
                         "got a market with d > 1")
    spec = market.spec
    y = np.linspace(math.log(grid.x_lo), math.log(grid.x_hi), grid.nx)
    dy = y[1] - y[0]
    if grid.t_end == grid.t_start:
        vals = payoff(np.exp(y))
        return PriceField(times=np.array([grid.t_start]), prices=np.exp(y),
                          values=np.atleast_2d(vals))

    nt = grid.nt
    for _attempt in range(9):
        times = np.linspace(grid.t_start, grid.t_end, nt + 1)
        rc = cumulative_rate(spec, market.riskless, times)
        dc = cumulative_rate(spec, market.dividends[0], times)
        shifts = np.diff(rc - dc)
        if np.max(np.abs(shifts)) <= dy:
            break
        nt *= 2
    else:
        raise RuntimeError(
            "no stable step size found after 8 halvings: per-step advection "
            f"{np.max(np.abs(shifts)):.3e} exceeds the grid spacing {dy:.3e}"
        )

    g = np.empty((nt + 1, grid.nx))
    g[nt] = payoff(np.exp(y))
    total_rc, total_dc = rc[nt], dc[nt]
    for k in range(nt - 1, -1, -1):
        dep = y + shifts[k]
        disc = math.exp(-(rc[k + 1] - rc[k]))
        g[k] = disc * np.interp(dep, y, g[k + 1])
        outside = (dep < y[0]) | (dep > y[-1])
        if np.any(outside):
            full_shift = (total_rc - rc[k]) - (total_dc - dc[k])
            g[k][outside] = math.exp(-(total_rc - rc[k])) * payoff(
                np.exp(y[outside] + full_shift)
            )
    return PriceField(times=times, prices=np.exp(y), values=g)


@dataclass(frozen=True)
class PowerBeta:
    """Bond exponent beta(t) making x^alpha * M(t)^beta(t) tradable."""

    beta: Callable[[float], float]
    constant: float | None
    admissible: bool = True


def power_derivative_beta(alpha, market: MarketSpec) -> PowerBeta:
    """Solve the tradability condition for the bond exponent beta.

    d[beta(t) r_cum(t)]/dt = r(t) - sum_j alpha_j (r(t) - delta_j(t)) with a
    vanishing initial product integrates exactly to

        beta(t) = 1 - sum_j alpha_j + sum_j alpha_j delta_cum_j(t)/r_cum(t),

    which is the constant (1 - sum alpha) + sum alpha_j delta_j / r for
    constant basic rates (and 1 - alpha with no dividends).  The t -> 0
    limit replaces the cumulative-rate ratio by the basic-rate ratio.
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.size != market.d:
        raise ValueError(f"alpha has {a.size} entries; need {market.d}")
    if market.riskless.bounds[0] <= 0.0:
        raise ValueError("degenerate riskless rate: cumulative rate vanishes")
    spec = market.spec
    base = 1.0 - float(a.sum())

    all_constant = market.riskless.kind == "constant" and all(
        dv.kind == "constant" for dv in market.dividends
    )
    if all_constant:
        r0 = market.riskless.parameters[0]
        const = base + sum(
            float(ai) * dv.parameters[0] / r0 for ai, dv in zip(a, market.dividends)
        )
        return PowerBeta(beta=lambda t: const, constant=const, admissible=True)

    def beta(t: float) -> float:
        if t == 0.0:
            r0 = market.riskless(0.0)
            return base + sum(
                float(ai) * dv(0.0) / r0 for ai, dv in zip(a, market.dividends)
            )
        rc = cumulative_rate(spec, market.riskless, t)
        return base + sum(
            float(ai) * cumulative_rate(spec, dv, t) / rc
            for ai, dv in zip(a, market.dividends)
        )

    return PowerBeta(beta=beta, constant=None, admissible=True)


def bond_price(market: MarketSpec, t: float, maturity: float) -> float:
    """Zero-coupon discount Lambda(t, T) = M(t)/M(T) = exp(-(r_cum(T) - r_cum(t)))."""
    if t < 0:
        raise ValueError("anchor time must be nonnegative")
    if maturity < t:
        raise ValueError("maturity precedes the anchor time")
    spec = market.spec
    return math.exp(
        -(cumulative_rate(spec, market.riskless, maturity)
          - cumulative_rate(spec, market.riskless, t))
    )


def term_structure(market: MarketSpec, anchors, maturities) -> TermStructure:
    """Fill the discount matrix Lambda(t_i, T_j) plus the instantaneous
    rate curve at the anchors.

    The matrix uses the ratio form M(t)/M(T) for every pair, so entries
    with T < t exceed 1; the multiplicativity identity holds across the
    whole grid.
    """
    a = np.asarray(anchors, dtype=float)
    m = np.asarray(maturities, dtype=float)
    if np.any(a < 0) or np.any(m < 0):
        raise ValueError("grid times must be nonnegative")
    spec = market.spec
    rc_a = cumulative_rate(spec, market.riskless, a)
    rc_m = cumulative_rate(spec, market.riskless, m)
    discounts = np.exp(rc_a[:, None] - rc_m[None, :])
    rates = np.array([instantaneous_rate(spec, market.riskless, t) for t in a])
    return TermStructure(anchors=a, maturities=m, discounts=discounts, rates=rates)


def forward_price(market: MarketSpec, s_t: float, t: float, maturity: float) -> float:
    """Forward delivery price F(t, T) = S(t)/Lambda(t, T) (unit bond at 0)."""
    if s_t <= 0:
        raise ValueError("spot must be positive")
    return s_t / bond_price(market, t, maturity)


def forward_value(
    market: MarketSpec, path: AssetPath, t: float, maturity: float, u: float
) -> float:
    """Value at time u of the forward portfolio formed at time t.

    P(u) = -S(u) + F(t,T) Lambda(u,T); extending Lambda(u,T) by the
    exponential for u > T collapses the maturity entirely, leaving the
    perpetual form -S(u) + S(t) exp(r_cum(u) - r_cum(t)) valid for every
    u >= t (and exactly 0 at inception u = t).
    """
    if u < t:
        raise ValueError("valuation time precedes the inception time")
    if maturity < t:
        raise ValueError("maturity precedes the inception time")
    spec = market.spec
    growth = math.exp(
        cumulative_rate(spec, market.riskless, u)
        - cumulative_rate(spec, market.riskless, t)
    )
    return -path.at(u) + path.at(t) * growth


def _path_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(path, AssetPath):
        return path.times, path.prices
    if isinstance(path, SamplePath):
        return path.times, path.values
    raise TypeError("path must be an AssetPath or SamplePath")


def _psi_at(x_grid: np.ndarray, row: np.ndarray, x: float) -> float:
    return float(np.interp(x, x_grid, row))


def futures_residual(field: FuturesField, market: MarketSpec) -> np.ndarray:
    """Residual series of the futures payoff-rate identity along the path.

    R(t) = int_0^t psi(x(u), u) du - psi psi_x - (1/r(t)) psi psi_t at
    (x(t), t), the integral by trapezoid on the path grid and the partials
    by finite differences of the tabulated field.  The last term is
    evaluated as psi * dpsi/drho with rho the cumulative riskless rate —
    the chain rule makes (1/r) dpsi/dt and dpsi/drho the same function,
    and the rho form stays finite at t = 0 where r vanishes.
    """
    t = field.t_grid
    if t.size < 2:
        return np.zeros(t.size)
    psi_path = np.array(
        [_psi_at(field.x_grid, field.psi[k], field.path_values[k])
         for k in range(t.size)]
    )
    integral = cumulative_trapezoid(psi_path, t, initial=0.0)
    rho = cumulative_rate(market.spec, market.riskless, t)
    order_x = 2 if field.x_grid.size >= 3 else 1
    order_t = 2 if t.size >= 3 else 1
    psi_x = np.gradient(field.psi, field.x_grid, axis=1, edge_order=order_x)
    psi_rho = np.gradient(field.psi, rho, axis=0, edge_order=order_t)
    px = np.array(
        [_psi_at(field.x_grid, psi_x[k], field.path_values[k]) for k in range(t.size)]
    )
    prho = np.array(
        [_psi_at(field.x_grid, psi_rho[k], field.path_values[k]) for k in range(t.size)]
    )
    return integral - psi_path * px - psi_path * prho


def _invert_cumulative(market: MarketSpec, rho: float, horizon: float) -> float:
    """The time t in [0, horizon] with cumulative riskless rate rho."""
    spec = market.spec
    r = market.riskless
    if rho <= 0.0:
        return 0.0
    if r.kind == "constant":
        from .kernel import d_constant

        return (rho / (d_constant(spec) * r.parameters[0])) ** (1.0 / (2.0 * spec.hurst))
    return float(brentq(lambda t: cumulative_rate(spec, r, t) - rho, 0.0, horizon,
                        xtol=1e-14, rtol=8.9e-16))


def futures_march(
    initial_profile: Callable,
    path,
    market: MarketSpec,
    grid: PricingGrid,
) -> FuturesField:
    """Explicit march of dpsi/dt = r(t) [I(t) - psi psi_x] / psi along the
    given underlying path.

    The time variable is the cumulative riskless rate rho (uniform steps),
    where the equation reads dpsi/drho + psi_x = I/psi: a unit-speed
    advection whose characteristic update each step squares to

        psi(x, rho+h)^2 = psi(x-h, rho)^2 + 2 * (J(rho+h) - J(rho)),

    J the rho-antiderivative of I.  The step interpolates psi^2 cubically
    at the departure points, accumulates I by trapezoid along the path and
    J by trapezoid in rho (the one implicit scalar — psi at the new path
    point — solves a quadratic exactly), and fills inflow values from the
    initial profile, which therefore must accept points left of the grid.
    The returned field carries the accumulated integral and the residual
    report of :func:`futures_residual`.
    """
    if grid.t_start != 0.0:
        raise ValueError("the futures integral starts at t = 0; grid.t_start must be 0")
    times_p, values_p = _path_arrays(path)
    x_grid = np.linspace(grid.x_lo, grid.x_hi, grid.nx)
    psi0 = np.asarray(initial_profile(x_grid), dtype=float)
    if psi0.shape != x_grid.shape:
        raise ValueError("initial profile must evaluate vectorised over the x grid")
    floor = 1e-8
    if np.min(psi0) <= floor:
        raise ValueError("initial profile must be bounded away from zero")

    horizon = grid.t_end
    if horizon == 0.0:
        x0 = float(np.interp(0.0, times_p, values_p))
        return FuturesField(x_grid=x_grid, t_grid=np.array([0.0]),
                            psi=psi0[None, :], path_values=np.array([x0]),
                            integral=np.zeros(1), residual=np.zeros(1))
    if times_p[-1] < horizon:
        raise ValueError("path does not cover the marching horizon")

    spec = market.spec
    nt = grid.nt
    rho_total = cumulative_rate(spec, market.riskless, horizon)
    drho = rho_total / nt
    t_grid = np.array(
        [0.0]
        + [_invert_cumulative(market, k * drho, horizon) for k in range(1, nt)]
        + [horizon]
    )
    xp = np.interp(t_grid, times_p, values_p)
    if np.any(xp < x_grid[0]) or np.any(xp > x_grid[-1]):
        k_bad = int(np.argmax((xp < x_grid[0]) | (xp > x_grid[-1])))
        raise ValueError(f"underlying path leaves the x grid at t={t_grid[k_bad]:.6g}")

    psi = np.empty((nt + 1, grid.nx))
    psi[0] = psi0
    integral = np.zeros(nt + 1)
    j_acc = np.zeros(nt + 1)
    for n in range(nt):
        sq_spline = CubicSpline(x_grid, psi[n] ** 2, bc_type="not-a-knot")
        dt_n = t_grid[n + 1] - t_grid[n]
        p_n = math.sqrt(max(float(sq_spline(xp[n])), 0.0))
        # scalar solve for psi at the new path point
        dep_pt = xp[n + 1] - drho
        if dep_pt >= x_grid[0]:
            q = float(sq_spline(dep_pt))
        else:
            q = float(initial_profile(xp[n + 1] - (n + 1) * drho)) ** 2 + 2.0 * j_acc[n]
        c = 0.5 * drho * dt_n
        k_term = q + 2.0 * drho * integral[n] + c * p_n
        y = 0.5 * (c + math.sqrt(c * c + 4.0 * max(k_term, 0.0)))
        integral[n + 1] = integral[n] + 0.5 * dt_n * (p_n + y)
        j_acc[n + 1] = j_acc[n] + 0.5 * drho * (integral[n] + integral[n + 1])
        dj2 = 2.0 * (j_acc[n + 1] - j_acc[n])
        # field row update along the characteristics
        dep = x_grid - drho
        inside = dep >= x_grid[0]
        new_sq = np.empty_like(dep)
        new_sq[inside] = sq_spline(dep[inside]) + dj2
        if np.any(~inside):
            feet = x_grid[~inside] - (n + 1) * drho
            psi0_feet = np.asarray(initial_profile(feet), dtype=float)
            new_sq[~inside] = psi0_feet**2 + 2.0 * j_acc[n] + dj2
        if np.min(new_sq) <= floor**2:
            i_bad = int(np.argmin(new_sq))
            raise ValueError(
                f"field reached the zero threshold at x={x_grid[i_bad]:.6g}, "
                f"t={t_grid[n + 1]:.6g}"
            )
        psi[n + 1] = np.sqrt(new_sq)

    field = FuturesField(x_grid=x_grid, t_grid=t_grid, psi=psi, path_values=xp,
                         integral=integral)
    return replace(field, residual=futures_residual(field, market))
