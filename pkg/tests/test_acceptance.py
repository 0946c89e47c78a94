"""Acceptance gate: one test per release criterion.

Each test prints a single ``criterion NN: PASS/FAIL — detail`` line straight
to the unbuffered stdout (bypassing capture) so the ledger survives into
piped logs, then asserts.  Criteria with stated wall-clock budgets measure
and enforce them.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import beta as beta_fn
from scipy.stats import normaltest

from hermkit import (
    AssetPath,
    BasicRate,
    FuturesField,
    HermiteSpec,
    MarketSpec,
    Payoff,
    PricingGrid,
    StratonovichConfig,
    bond_price,
    chain_rule_residual,
    forward_price,
    forward_value,
    futures_march,
    futures_residual,
    kernel_l2_norm_sq,
    power_derivative_beta,
    price_characteristics,
    price_fd,
    perpetual_pde_residual,
    riskless_price,
    simulate_fbm_exact,
    simulate_hermite_path,
    stratonovich_integral,
)
from hermkit.cli import main as cli_main
from hermkit.pricing import SmoothField
from hermkit.stats import centered_qv, estimate_hurst, lrd_coefficient, lrd_limit, qv_scaling_exponent


def _c_closed_form(h: float, order: int) -> float:
    """Independent oracle: C = (k! * B(1+g, -1-2g)^k / (H(2H-1)))^(-1/2)."""
    g = (h - 1.0) / order - 0.5
    norm_sq = beta_fn(1.0 + g, -1.0 - 2.0 * g) ** order / (h * (2.0 * h - 1.0))
    return 1.0 / math.sqrt(math.factorial(order) * norm_sq)


def _market(spec, mu=0.08, r=0.05, sigma=0.2, s0=1.0, delta=0.0):
    return MarketSpec(
        spec=spec,
        riskless=BasicRate.constant(r),
        drifts=(BasicRate.constant(mu),),
        volatility=np.array([[sigma]]),
        initial_prices=(s0,),
        dividends=(BasicRate.constant(delta),),
    )


def test_criterion_01_normalizing_constants(acceptance_report):
    worst = {1: 0.0, 2: 0.0}
    slowest = 0.0
    for order, _tol in ((1, 1e-3), (2, 2e-2)):
        for h in (0.6, 0.7, 0.8):
            started = time.perf_counter()
            norm_sq = kernel_l2_norm_sq(HermiteSpec(h, order), 1.0)
            slowest = max(slowest, time.perf_counter() - started)
            c_numeric = 1.0 / math.sqrt(math.factorial(order) * norm_sq.value)
            c_exact = _c_closed_form(h, order)
            worst[order] = max(worst[order], abs(c_numeric - c_exact) / c_exact)
    ok = worst[1] < 1e-3 and worst[2] < 2e-2 and slowest < 60.0
    acceptance_report(1, ok,
            f"numeric-norm C vs closed form: rel {worst[1]:.2e} (order 1, "
            f"tol 1e-3), {worst[2]:.2e} (order 2, tol 2e-2); "
            f"slowest spec {slowest:.1f}s (< 60s)")
    assert worst[1] < 1e-3
    assert worst[2] < 2e-2
    assert slowest < 60.0


def test_criterion_02_variance_law(acceptance_report):
    started = time.perf_counter()
    steps, horizon, n_paths = 2048, 2.0, 10_000
    checkpoints = (0.25, 0.5, 1.0, 2.0)
    idx = [int(round(t * steps)) for t in checkpoints]
    worst = 0.0
    details = []
    for case, (order, h) in enumerate(((1, 0.7), (2, 0.7), (2, 0.8))):
        spec = HermiteSpec(h, order)
        vals = np.empty((n_paths, len(idx)))
        for k in range(n_paths):
            path = simulate_hermite_path(spec, steps, horizon, 100_000 * case + k)
            vals[k] = path.values[idx]
        ratios = np.var(vals, axis=0, ddof=1) / np.asarray(checkpoints) ** (2 * h)
        worst = max(worst, float(np.max(np.abs(ratios - 1.0))))
        details.append(f"(k={order},H={h}) {min(ratios):.3f}..{max(ratios):.3f}")
        assert np.all((ratios > 0.9) & (ratios < 1.1)), (order, h, ratios)
    elapsed = time.perf_counter() - started
    ok = worst < 0.1 and elapsed < 300.0
    acceptance_report(2, ok,
            "Var(X(t))/t^2H in [0.9,1.1] at t=0.25..2, 2^12 steps, 1e4 paths: "
            + "; ".join(details) + f"; {elapsed:.0f}s (< 300s)")
    assert ok


def test_criterion_03_fbm_covariance(acceptance_report):
    h, n_paths = 0.7, 10_000
    grid = np.array([0.25, 0.5, 0.75, 1.0])
    vals = np.empty((n_paths, 4))
    for k in range(n_paths):
        vals[k] = simulate_fbm_exact(h, 4, 1.0, 50_000 + k).values[1:]
    worst_z = 0.0
    for i in range(4):
        for j in range(i, 4):
            s, t = grid[i], grid[j]
            analytic = 0.5 * (s ** (2 * h) + t ** (2 * h) - abs(t - s) ** (2 * h))
            prods = vals[:, i] * vals[:, j]
            se = float(np.std(prods, ddof=1)) / math.sqrt(n_paths)
            z = abs(float(np.mean(prods)) - analytic) / se
            worst_z = max(worst_z, z)
    ok = worst_z < 3.0
    acceptance_report(3, ok,
            f"exact-fBm 4-point sample covariances: worst deviation "
            f"{worst_z:.2f} MC standard errors (< 3)")
    assert ok


def test_criterion_04_qv_regimes(acceptance_report):
    started = time.perf_counter()
    blocks = [128, 256, 512, 1024]
    cases = (
        (HermiteSpec(0.6, 1), 0.5, 0.10),
        (HermiteSpec(0.85, 1), 0.7, 0.12),
        (HermiteSpec(0.7, 2), 0.7, 0.10),
    )
    slope_msgs = []
    slopes_ok = True
    for case, (spec, target, tol) in enumerate(cases):
        slope = qv_scaling_exponent(spec, blocks, 1.0, 400, 1000 + case)
        slopes_ok &= abs(slope - target) <= tol
        slope_msgs.append(f"(k={spec.order},H={spec.hurst}) {slope:.3f}")
    # regime (I): V/delta over 1000 replications should look Gaussian
    spec = HermiteSpec(0.6, 1)
    v = np.array([
        centered_qv(simulate_hermite_path(spec, 64, 1024.0, 7000 + k), 0.6, 1.0).v_stat
        for k in range(1000)
    ])
    normalized = v / math.sqrt(float(np.mean(v ** 2)))
    p_value = float(normaltest(normalized).pvalue)
    elapsed = time.perf_counter() - started
    ok = slopes_ok and p_value > 0.01 and elapsed < 900.0
    acceptance_report(4, ok,
            "QV log-log slopes " + ", ".join(slope_msgs)
            + f" (targets 0.5±0.1, 0.7±0.12, 0.7±0.1); regime-(I) normality "
            f"p={p_value:.3f} (> 0.01); {elapsed:.0f}s (< 900s)")
    assert slopes_ok
    assert p_value > 0.01
    assert elapsed < 900.0


def test_criterion_05_lrd_constant(acceptance_report):
    worst = 0.0
    for h in (0.6, 0.7, 0.9):
        spec = HermiteSpec(h, 1)
        tail = float(lrd_coefficient(spec, 10_000)[-1])
        worst = max(worst, abs(tail / lrd_limit(spec) - 1.0))
    ok = worst < 0.01
    acceptance_report(5, ok,
            f"n^(2-2H) E[D(n)D(0)] at n=1e4 vs H(2H-1): worst rel dev "
            f"{worst:.2e} (< 1e-2) for H in {{0.6, 0.7, 0.9}}")
    assert ok


def test_criterion_06_hurst_recovery(acceptance_report):
    details = []
    ok = True
    for h in (0.6, 0.7, 0.8):
        estimates = [
            estimate_hurst(
                simulate_fbm_exact(h, 2 ** 14, 1.0, 300_000 + k),
                (2, 4, 8, 16, 32, 64),
            ).h_hat
            for k in range(50)
        ]
        mean_h = float(np.mean(estimates))
        ok &= abs(mean_h - h) < 0.05
        details.append(f"H={h}: {mean_h:.3f}")
    acceptance_report(6, ok, "mean Hurst estimate over 50 exact-fBm paths (n=2^14): "
            + ", ".join(details) + " (each within ±0.05)")
    assert ok


def test_criterion_07_chain_rule(acceptance_report):
    cases = {
        "x^2/2": (lambda x, t: 0.5 * x * x, lambda x, t: x),
        "e^x": (lambda x, t: np.exp(x), lambda x, t: np.exp(x)),
    }
    zero = lambda x, t: np.zeros_like(np.asarray(x, dtype=float))
    refinements = (256, 512, 1024, 2048, 4096)
    monotone = True
    worst_ratio = math.inf
    for seed in range(20):
        driver = simulate_fbm_exact(0.85, 4096, 1.0, 40_000 + seed)
        for name, (g, dg) in cases.items():
            residuals = [
                chain_rule_residual(g, dg, zero, driver, StratonovichConfig(0.0, r))
                for r in refinements
            ]
            monotone &= all(a > b for a, b in zip(residuals, residuals[1:]))
            fx = dg(driver.values, driver.times)
            gaps = [
                abs(stratonovich_integral(fx, driver, StratonovichConfig(0.0, r))
                    - stratonovich_integral(fx, driver, StratonovichConfig(0.5, r)))
                for r in (refinements[0], refinements[-1])
            ]
            worst_ratio = min(worst_ratio, gaps[0] / gaps[1])
    ok = monotone and worst_ratio >= 4.0
    acceptance_report(7, ok,
            "pathwise chain rule on 20 fBm paths: residuals strictly decrease "
            "over 4 dyadic refinements for x^2/2 and e^x "
            f"({'yes' if monotone else 'NO'}); left-vs-mid gap shrinks by "
            f">= {worst_ratio:.1f}x coarsest->finest (need >= 4)")
    assert monotone
    assert worst_ratio >= 4.0


def test_criterion_08_pde_pricing(acceptance_report):
    spec = HermiteSpec(0.7, 2)
    m = _market(spec, mu=0.09, r=0.06, sigma=0.25, delta=0.02)
    payoff = Payoff.from_callable(
        lambda x: np.exp(-0.5 * (np.log(x) - 0.1) ** 2 / 0.36)
    )
    field = price_fd(payoff, m, PricingGrid(0.5, 2.0, 512, 512, 0.0, 1.0))
    exact = np.array(
        [price_characteristics(payoff, m, 0.0, 1.0, x) for x in field.prices]
    )
    sup_err = float(np.max(np.abs(field.values[0] - exact)))

    m2 = _market(spec, r=0.08, delta=0.0)
    alpha = 0.4

    def value(t, x):
        return float(x[0]) ** alpha * riskless_price(spec, m2.riskless, t) ** (1 - alpha)

    rng = np.random.default_rng(81)
    samples = list(zip(rng.uniform(0.1, 2.0, 1000), rng.uniform(0.5, 2.5, 1000)))
    residuals = perpetual_pde_residual(SmoothField(value=value), m2, samples)
    max_res = float(np.max(np.abs(residuals)))

    exact_beta = all(
        a + power_derivative_beta(a, m2).constant == 1.0
        for a in (0.25, 0.375, 0.5, 0.75)
    )
    ok = sup_err <= 1e-3 and max_res <= 1e-8 and exact_beta
    acceptance_report(8, ok,
            f"grid vs characteristics price sup {sup_err:.2e} (<= 1e-3) at "
            f"512x512; x^a M^(1-a) equation residual {max_res:.2e} (<= 1e-8) "
            f"at 1000 random points; a+b=1 exact without dividends "
            f"({'yes' if exact_beta else 'NO'})")
    assert sup_err <= 1e-3
    assert max_res <= 1e-8
    assert exact_beta


def test_criterion_09_bond_forward_identities(acceptance_report):
    worst_mult = 0.0
    worst_closed = 0.0
    unit_diag = True
    inception_zero = True
    for order, h in ((1, 0.7), (2, 0.7), (2, 0.6)):
        spec = HermiteSpec(h, order)
        m = _market(spec, r=0.04)
        g = (h - 1.0) / order - 0.5
        d_oracle = math.sqrt(
            beta_fn(1.0 + g, -1.0 - 2.0 * g) ** order
            / (h * (2.0 * h - 1.0))
            / math.factorial(order)
        )
        times = np.linspace(0.0, 2.0, 9)
        prices = np.exp(0.08 * times)
        path = AssetPath(times=times, prices=prices)
        for t in (0.0, 0.4, 1.1):
            unit_diag &= bond_price(m, t, t) == 1.0
            inception_zero &= forward_value(m, path, t, 2.0, t) == 0.0
            for u in (t, t + 0.5):
                for mat in (u, u + 0.7):
                    worst_mult = max(worst_mult, abs(
                        bond_price(m, t, u) * bond_price(m, u, mat)
                        - bond_price(m, t, mat)
                    ))
            lam = bond_price(m, t, 2.0)
            closed = math.exp(-d_oracle * 0.04 * (2.0 ** (2 * h) - t ** (2 * h)))
            worst_closed = max(worst_closed, abs(lam / closed - 1.0))
            fwd = forward_price(m, path.at(t), t, 2.0)
            worst_closed = max(worst_closed, abs(fwd * closed / path.at(t) - 1.0))
    ok = (unit_diag and inception_zero and worst_mult <= 1e-10
          and worst_closed <= 1e-12)
    acceptance_report(9, ok,
            f"Lambda(T,T)=1 exactly ({'yes' if unit_diag else 'NO'}); "
            f"multiplicativity dev {worst_mult:.1e} (<= 1e-10); forward "
            f"inception exactly 0 ({'yes' if inception_zero else 'NO'}); "
            f"constant-r closed forms rel {worst_closed:.1e} (<= 1e-12)")
    assert unit_diag and inception_zero
    assert worst_mult <= 1e-10
    assert worst_closed <= 1e-12


def test_criterion_10_futures_field(acceptance_report):
    started = time.perf_counter()
    # payoff-rate identity on a constant field: no discretization term at
    # all, only the rounding of the constant's finite-difference derivative
    # over the nonuniform rate coordinate (a few ulps)
    x = np.linspace(0.5, 2.5, 9)
    t = np.arange(9) / 8.0
    const = FuturesField(x_grid=x, t_grid=t, psi=np.full((9, 9), 0.5),
                         path_values=np.full(9, 1.5))
    m0 = _market(HermiteSpec(0.7, 2), r=0.15, mu=0.05)
    const_dev = float(np.max(np.abs(futures_residual(const, m0) - 0.5 * t)))
    exact_const = const_dev <= 1e-14

    spec = HermiteSpec(0.7, 2)
    market = MarketSpec(
        spec=spec,
        riskless=BasicRate.constant(0.15),
        drifts=(BasicRate.constant(0.05),),
        volatility=np.array([[0.2]]),
        initial_prices=(1.0,),
    )
    from hermkit import cumulative_rate

    times = np.linspace(0.0, 1.0, 4097)
    path = AssetPath(times=times,
                     prices=np.exp(cumulative_rate(spec, market.drifts[0], times)))

    def profile(xv):
        return 0.75 + 0.5 * np.tanh((np.asarray(xv, dtype=float) - 1.9) / 0.25)

    sups = []
    for n in (256, 512, 1024, 2048):
        grid = PricingGrid(0.4, 3.4, n, n, t_start=0.0, t_end=1.0)
        field = futures_march(profile, path, market, grid)
        sups.append(float(np.max(np.abs(field.residual))))
    elapsed = time.perf_counter() - started
    monotone = all(a > b for a, b in zip(sups, sups[1:]))
    ok = exact_const and sups[0] <= 1e-3 and monotone and elapsed < 120.0
    acceptance_report(10, ok,
            f"constant-field residual equals c*t to machine precision "
            f"(dev {const_dev:.1e}); marched-field residual sup "
            f"{sups[0]:.2e} at 256x256 (<= 1e-3), monotone over 3 halvings "
            + "->".join(f"{s:.1e}" for s in sups)
            + f"; {elapsed:.0f}s (< 120s)")
    assert exact_const
    assert sups[0] <= 1e-3
    assert monotone
    assert elapsed < 120.0


def test_criterion_11_cli_reproducibility(acceptance_report, tmp_path):
    cfg = tmp_path / "market.cfg"
    cfg.write_text(
        "[process]\nhurst = 0.7\norder = 2\n\n"
        "[riskless]\nkind = constant\nvalue = 0.05\n\n"
        "[asset.1]\nprice = 1.0\ndrift_value = 0.08\ndividend_value = 0.0\n\n"
        "[volatility]\nrow1 = 0.2\n\n[run]\nseed = 42\n"
    )
    seed_dir = tmp_path / "seed-data"
    assert cli_main(["simulate", "--hurst", "0.7", "--order", "1", "--steps",
                     "512", "--seed", "2", "--out", str(seed_dir)]) == 0
    input_csv = str(seed_dir / "path_0.csv")
    invocations = [
        ["simulate", "--hurst", "0.7", "--order", "2", "--steps", "64",
         "--paths", "2", "--seed", "9"],
        ["kernel", "--hurst", "0.7", "--order", "2"],
        ["estimate", "--input", input_csv, "--scales", "2,4,8,16"],
        ["qv", "--hurst", "0.6", "--order", "1", "--blocks", "8,16",
         "--paths", "100", "--seed", "4"],
        ["price", "bond", "--T", "1.0", "--config", str(cfg)],
        ["price", "perpetual", "--alpha", "0.4", "--config", str(cfg)],
        ["price", "forward", "--T", "1.5", "--config", str(cfg)],
        ["price", "futures", "--grid", "16", "--horizon", "0.5",
         "--config", str(cfg)],
        ["curve", "--maturities", "0.5,1", "--config", str(cfg)],
    ]
    identical = True
    checked = 0
    for k, argv in enumerate(invocations):
        dirs = [tmp_path / f"cmd{k}-run{r}" for r in (1, 2)]
        for d in dirs:
            assert cli_main(argv + ["--out", str(d)]) == 0, argv
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        assert names, argv  # every subcommand must emit something
        for name in names:
            checked += 1
            identical &= (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
    acceptance_report(11, identical,
            f"reran all 9 subcommands with fixed seeds: {checked} output "
            f"files byte-identical ({'yes' if identical else 'NO'})")
    assert identical
