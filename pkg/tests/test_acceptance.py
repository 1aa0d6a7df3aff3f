"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -s`` to see per-criterion lines.
Every tolerance and runtime budget is asserted, not just reported.
"""

import math
import time
import warnings

import numpy as np
import pytest

from eapo.ambiguity import AmbiguityBall, dual_norm, dual_norm_penalty, sampled_worst_case_gap
from eapo.backtest import BacktestConfig, attribution, run_backtest
from eapo.data import align_forward_carry, complete_intensities, synth_generate
from eapo.frontier import TinyDynamicSpec, bellman_tiny, frontier_diagnostics, pareto_sweep, value_curve_gamma
from eapo.inference import block_bootstrap_sharpe, newey_west
from eapo.penalty import (IntensityVector, PenaltyParams, emissions_adjusted_mean,
                          lipschitz_constants, penalty)
from eapo.risk import DivergenceBall, cvar_empirical, dro_dual_value, dro_primal_oracle
from eapo.solver import (SolverConfig, brute_force_oracle, project_simplex,
                         shadow_price, solve_robust_mv)

from test_frontier import flat_enumeration_oracle
from test_inference import newey_west_double_loop_oracle
from test_risk import kl_closed_form_oracle, rockafellar_uryasev_oracle
from test_solver import random_spd, simplex_projection_bisection_oracle


def _report(number, label, started):
    elapsed = time.perf_counter() - started
    print(f"ACCEPTANCE {number:02d} {label}: PASS ({elapsed:.2f}s)")


def test_criterion_01_penalty_axioms():
    started = time.perf_counter()
    rng = np.random.default_rng(1001)
    for case in range(1200):
        lam_max = float(rng.uniform(0.5, 10.0))
        lam = float(rng.uniform(0.0, lam_max))
        r = float(rng.normal(0.0, 2.0))
        m = int(rng.integers(1, 7))
        # closed-form uniqueness spot check
        direct = (1.0 - lam / lam_max) ** m * r
        assert penalty(r, lam, lam_max, m) == pytest.approx(direct, abs=1e-12)
        # normalization
        assert penalty(r, 0.0, lam_max, m) == pytest.approx(r, abs=1e-12)
        assert penalty(r, lam_max, lam_max, m) == pytest.approx(0.0, abs=1e-12)
        # homogeneity
        alpha = float(rng.uniform(0.0, 3.0))
        assert penalty(alpha * r, lam, lam_max, m) == pytest.approx(
            alpha * penalty(r, lam, lam_max, m), abs=1e-12)
        # unit-scale invariance
        beta = float(rng.uniform(1e-2, 1e2))
        assert penalty(r, beta * lam, beta * lam_max, m) == pytest.approx(
            penalty(r, lam, lam_max, m), abs=1e-12)
        # mixture linearity of the generator
        lam2 = float(rng.uniform(0.0, lam_max))
        theta = float(rng.uniform())
        assert penalty(r, theta * lam + (1 - theta) * lam2, lam_max, 1) == pytest.approx(
            theta * penalty(r, lam, lam_max, 1)
            + (1 - theta) * penalty(r, lam2, lam_max, 1), abs=1e-12)
        # semigroup
        m2 = int(rng.integers(1, 7))
        assert penalty(penalty(r, lam, lam_max, m2), lam, lam_max, m) == pytest.approx(
            penalty(r, lam, lam_max, m + m2), abs=1e-12)
        # monotonicity on a pair for nonnegative payoff
        r_pos = abs(r)
        hi = float(rng.uniform(lam, lam_max))
        assert penalty(r_pos, hi, lam_max, m) <= penalty(r_pos, lam, lam_max, m) + 1e-12
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    _report(1, "penalty axioms (1200 cases, 1e-12)", started)


def test_criterion_02_envelope_bound():
    started = time.perf_counter()
    rng = np.random.default_rng(1002)
    for p in (1, 2, math.inf):
        for n in (2, 5, 10):
            window = rng.normal(1.0005, 0.01, size=(300, n))
            lam = IntensityVector(rng.uniform(0.5, 5.0, size=n))
            params = PenaltyParams(m=int(rng.integers(1, 8)))
            x = rng.dirichlet(np.ones(n))
            ball = AmbiguityBall(p=p, gamma=float(rng.uniform(0.3, 2.0)))
            L = lipschitz_constants(np.abs(window).mean(axis=0), lam.lambda_max,
                                    params.m)
            gap = sampled_worst_case_gap(x, lam, ball, params, window,
                                         n_samples=10_000, seed=17)
            envelope = dual_norm_penalty(x, L, ball)
            assert gap <= envelope + 1e-10
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _report(2, "envelope bound (3x3 combos x 10^4 samples)", started)


def test_criterion_03_solver_optimality():
    started = time.perf_counter()
    rng = np.random.default_rng(1003)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        mu = rng.normal(1.0, 0.1, size=n)
        sigma = random_spd(rng, n, scale=float(rng.uniform(0.05, 1.0)))
        use_l = rng.uniform() < 0.5
        L = rng.uniform(0.2, 2.0, size=n) if use_l else None
        cfg = SolverConfig(gamma=float(rng.uniform(0.0, 1.5)),
                           theta=float(rng.uniform(0.05, 1.5)),
                           p=2, tol=1e-10)
        _, diag = solve_robust_mv(mu, sigma, L, cfg)
        _, f_star = brute_force_oracle(mu, sigma, L, cfg)
        assert abs(diag.objective_value - f_star) < 1e-6
    for _ in range(500):
        n = int(rng.integers(1, 7))
        v = rng.normal(0.0, 3.0, size=n)
        assert np.abs(project_simplex(v)
                      - simplex_projection_bisection_oracle(v)).max() < 1e-10
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    _report(3, "solver vs grid oracle (50) + projection vs KKT (500)", started)


def test_criterion_04_sensitivity_and_lipschitz():
    started = time.perf_counter()
    rng = np.random.default_rng(1004)
    window = rng.normal(1.0, 0.02, size=(300, 4))
    L = lipschitz_constants(np.abs(window).mean(axis=0), 2.0, 3)
    mu_e = window.mean(axis=0)
    sigma = np.cov(window.T)
    cfg = SolverConfig(theta=0.5, p=2, tol=1e-11)
    grid = np.linspace(0.0, 1.5, 10)
    values = value_curve_gamma(mu_e, sigma, L, cfg, grid)
    assert all(a >= b - 1e-9 for a, b in zip(values, values[1:]))
    lmax = L.max()
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            assert abs(values[i] - values[j]) <= lmax * (grid[j] - grid[i]) + 1e-6
    # interior shadow prices match the penalty-term derivative
    for seed in range(5):
        r = np.random.default_rng(2000 + seed)
        mu = r.normal(1.0, 0.01, size=4)
        sig = random_spd(r, 4, scale=0.05)
        lips = r.uniform(0.5, 1.5, size=4)
        scfg = SolverConfig(gamma=0.3, theta=1.0, p=2, tol=1e-11)
        x_star, _ = solve_robust_mv(mu, sig, lips, scfg)
        pi = shadow_price(mu, sig, lips, scfg, delta_gamma=1e-4)
        assert pi >= -1e-8
        assert pi == pytest.approx(dual_norm(lips * x_star, 2), rel=1e-3)
    _report(4, "V*(Gamma) monotone + Lipschitz + shadow price", started)


def test_criterion_05_cvar_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(1005)
    for case in range(100):
        m = int(rng.integers(3, 150))
        if case % 2 == 0:
            k = int(rng.integers(1, max(2, m // 3)))
            alpha = 1.0 - k / m  # integer tail
        else:
            alpha = float(rng.uniform(0.5, 0.995))
        losses = rng.normal(0.0, 1.0, size=m)
        assert cvar_empirical(losses, alpha) == pytest.approx(
            rockafellar_uryasev_oracle(losses, alpha), abs=1e-12)
    _report(5, "CVaR sort-based vs RU minimization (100 cases)", started)


def test_criterion_06_dro_duality():
    started = time.perf_counter()
    rng = np.random.default_rng(1006)
    for _ in range(50):
        m = int(rng.integers(5, 21))
        losses = rng.normal(0.01, 0.02, size=m)
        rho = float(rng.uniform(0.01, 1.0))
        ball = DivergenceBall("kl", rho, losses)
        dual = dro_dual_value(ball)
        assert dual == pytest.approx(kl_closed_form_oracle(losses, rho), abs=1e-8)
        assert dual == pytest.approx(dro_primal_oracle(ball), abs=1e-6)
    for _ in range(50):
        m = int(rng.integers(5, 25))
        losses = rng.normal(0.0, 1.0, size=m)
        rho = float(rng.uniform(0.01, 2.0))
        ball = DivergenceBall("chi2", rho, losses)
        gap = dro_primal_oracle(ball) - dro_dual_value(ball)
        assert -1e-6 <= gap < 1e-5
    losses = rng.normal(size=15)
    assert dro_dual_value(DivergenceBall("kl", 0.0, losses)) == float(losses.mean())
    assert dro_dual_value(DivergenceBall("chi2", 0.0, losses)) == float(losses.mean())
    _report(6, "DRO dual vs closed form/primal (50+50) + rho=0", started)


def test_criterion_07_pareto_frontier():
    started = time.perf_counter()
    for seed in range(5):
        rng = np.random.default_rng(3000 + seed)
        r = rng.normal(1.0, 0.1, size=50)
        lam = rng.uniform(0.0, 10.0, size=50)
        points = pareto_sweep(r, lam, np.linspace(0.0, 1.0, 150))
        report = frontier_diagnostics(points, slope_rtol=0.02)
        assert report.convexity_violations == []
        assert report.slope_violations == []
        assert report.monotonicity_violations == []
        assert report.slopes_checked > 0
    _report(7, "Pareto frontier convexity + slope identity (50 assets)", started)


def test_criterion_08_tiny_robust_dp():
    started = time.perf_counter()
    for seed in range(20):
        rng = np.random.default_rng(4000 + seed)
        horizon = int(rng.integers(0, 3))  # T <= 2
        n = int(rng.integers(1, 3))
        k = int(rng.integers(1, 4))
        d = int(rng.integers(1, 3))
        spec = TinyDynamicSpec(
            horizon=horizon, n_assets=n,
            gammas=[rng.uniform(0.8, 1.2, n) for _ in range(horizon + 1)],
            deltas=[rng.uniform(-0.3, 0.3, (n, d)) for _ in range(horizon + 1)],
            shocks=[rng.uniform(-1.0, 1.0, (k, d)) for _ in range(horizon + 1)],
            discount=float(rng.uniform(0.2, 1.0)), grid_step=0.1)
        assert bellman_tiny(spec) == flat_enumeration_oracle(spec)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _report(8, "tiny robust DP bit-exact vs flat enumeration (20 specs)", started)


def test_criterion_09_inference():
    started = time.perf_counter()
    rng = np.random.default_rng(1009)
    # Newey-West vs the literal double-loop transcription
    for _ in range(20):
        t_len = int(rng.integers(30, 200))
        bandwidth = int(rng.integers(0, min(25, t_len - 1)))
        eps = rng.normal(size=t_len)
        d = np.zeros(t_len)
        for t in range(1, t_len):
            d[t] = 0.5 * d[t - 1] + eps[t]
        d += 0.01
        res = newey_west(d, bandwidth)
        lrv, se, t_stat = newey_west_double_loop_oracle(d, bandwidth)
        assert res.long_run_variance == pytest.approx(lrv, abs=1e-14)
        assert res.standard_error_of_mean == pytest.approx(se, abs=1e-14)
    # bootstrap coverage of a known Sharpe gap at paper settings
    sigma, true_gap, t_len = 0.01, 0.5, 5000
    mu_a = true_gap * sigma / np.sqrt(252)
    hits = 0
    for seed in range(50):
        r = np.random.default_rng(5000 + seed)
        a = r.normal(mu_a, sigma, size=t_len)
        b = r.normal(0.0, sigma, size=t_len)
        res = block_bootstrap_sharpe(a, b, block_length=20, replications=2000,
                                     seed=seed)
        if res.ci_low <= true_gap <= res.ci_high:
            hits += 1
    assert hits >= 45  # >= 90% coverage
    _report(9, f"Newey-West 1e-14 + bootstrap coverage {hits}/50", started)


def test_criterion_10_headline_analogue():
    started = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        records = synth_generate(n_assets=100, n_days=2500,
                                 intensity_return_correlation=0.0, seed=2024)
        dataset = align_forward_carry(records, scope=1)
        lam = complete_intensities(dataset, k=8, seed=2024)
        solver = SolverConfig(gamma=3.5, theta=0.5, m=10)
        eapo = run_backtest(dataset.returns, lam,
                            BacktestConfig(strategy="eapo", solver=solver))
        eapo_again = run_backtest(dataset.returns, lam,
                                  BacktestConfig(strategy="eapo", solver=solver))
        ew = run_backtest(dataset.returns, lam, BacktestConfig(strategy="ew"))
    np.testing.assert_array_equal(eapo.weights.values, eapo_again.weights.values)
    reduction = 1.0 - eapo.average_intensity / ew.average_intensity
    assert reduction >= 0.80
    boot = block_bootstrap_sharpe(eapo.net_returns.values, ew.net_returns.values,
                                  block_length=20, replications=2000, seed=7)
    assert boot.ci_low <= 0.0 <= boot.ci_high
    elapsed = time.perf_counter() - started
    assert elapsed < 180.0
    _report(10, f"headline analogue: {reduction:.1%} reduction, Sharpe CI "
                f"[{boot.ci_low:.3f}, {boot.ci_high:.3f}]", started)


def test_criterion_11_backtest_accounting():
    started = time.perf_counter()
    import pandas as pd
    rng = np.random.default_rng(1011)
    idx = pd.bdate_range("2019-01-02", periods=500)
    cols = [f"A{i}" for i in range(6)]
    returns = pd.DataFrame(1.0 + 5e-4 + 0.01 * rng.standard_normal((500, 6)),
                           index=idx, columns=cols)
    pos = pd.Series(np.arange(len(idx)), index=idx)
    last = pos.groupby([idx.year, idx.month]).max().values
    rdates = idx[np.sort(last)]
    lam = pd.DataFrame(rng.uniform(1.0, 100.0, size=(len(rdates), 6)),
                       index=rdates, columns=cols)
    solver = SolverConfig(gamma=1.0, theta=0.5, m=6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with_cost = run_backtest(returns, lam, BacktestConfig(
            strategy="eapo", lookback=120, cost_bps=2.0, solver=solver))
        no_cost = run_backtest(returns, lam, BacktestConfig(
            strategy="eapo", lookback=120, cost_bps=0.0, solver=solver))
        factor = np.prod([1.0 - 2e-4 * t for t in with_cost.turnover.values])
        assert with_cost.wealth.values[-1] == pytest.approx(
            no_cost.wealth.values[-1] * factor, abs=1e-12)

        t = with_cost.weights.index[2]
        mutated = returns.copy()
        mutated.loc[mutated.index >= t] *= 1.03
        lam_mut = lam.copy()
        lam_mut.loc[lam_mut.index > t] *= 7.0
        shifted = run_backtest(mutated, lam_mut, BacktestConfig(
            strategy="eapo", lookback=120, cost_bps=2.0, solver=solver))
    np.testing.assert_array_equal(with_cost.weights.loc[t].values,
                                  shifted.weights.loc[t].values)
    # attribution identity to machine precision
    for _ in range(50):
        n = int(rng.integers(3, 15))
        wa = rng.dirichlet(np.ones(n))
        wb = rng.dirichlet(np.ones(n))
        intens = rng.uniform(0.0, 300.0, size=n)
        sectors = [f"s{int(v)}" for v in rng.integers(0, 4, size=n)]
        alloc, sel, total = attribution(wa, wb, intens, sectors)
        assert alloc + sel == total
        direct_gap = float(wb @ intens - wa @ intens)
        assert total == pytest.approx(direct_gap, abs=1e-10)
    _report(11, "cost identity + no-look-ahead + attribution identity", started)


def test_criterion_12_regret_qualitative():
    started = time.perf_counter()
    n = 8
    rng0 = np.random.default_rng(1012)
    drift = rng0.normal(5e-4, 2e-4, size=n)
    sigma_true = 0.01
    lam = IntensityVector(rng0.uniform(1.0, 50.0, size=n))
    params = PenaltyParams(m=5)
    factors = (1.0 - lam.values / lam.lambda_max) ** params.m
    mu_true_e = factors * (1.0 + drift)
    cfg = SolverConfig(gamma=0.5, theta=0.5, m=5, tol=1e-10)
    medians = []
    for t_len in (250, 1000, 4000):
        gaps = []
        for seed in range(20):
            r = np.random.default_rng(6000 + seed)
            window = 1.0 + drift + sigma_true * r.standard_normal((t_len, n))
            mu_e_hat = emissions_adjusted_mean(window, lam, params)
            sigma_hat = np.cov(window.T)
            x, _ = solve_robust_mv(mu_e_hat, sigma_hat, None, cfg)
            perceived = float(x @ mu_e_hat)
            realized = float(x @ mu_true_e)
            gaps.append(abs(perceived - realized))
        medians.append(float(np.median(gaps)))
    assert medians[0] > medians[1] > medians[2]
    _report(12, f"regret gap medians {[f'{m:.2e}' for m in medians]}", started)
