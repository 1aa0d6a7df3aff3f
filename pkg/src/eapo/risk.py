"""Empirical CVaR, the robust CVaR program, and phi-divergence DRO duals.

CVaR uses the Rockafellar-Uryasev representation; with M equally likely
scenarios the minimizer is an order statistic, so the implementation is the
sort-based tail mean with fractional weight on the boundary scenario, which
matches the RU minimum exactly.

The DRO worst case treats the sample as payoffs shrunk by an adversary:
``dro_dual_value`` returns inf over distributions within divergence ``rho``
of the empirical law of the mean loss, which is nonincreasing in rho. The
dual has two scalar variables and is evaluated by nested one-dimensional
concave maximization; a primal projected-gradient oracle with a KKT polish
provides the matching upper bound for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .solver import SolverConfig, project_simplex, _penalty_subgradient, _penalty_value

__all__ = [
    "ScenarioSet",
    "DivergenceBall",
    "cvar_empirical",
    "cvar_tail_weights",
    "solve_robust_cvar",
    "linear_losses",
    "dro_dual_value",
    "dro_primal_oracle",
]


@dataclass(frozen=True)
class ScenarioSet:
    """M x n matrix of emissions-adjusted gross returns with uniform mass."""

    scenarios: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.scenarios, dtype=float))
        if s.shape[0] < 1:
            raise InvalidInputError("need at least one scenario")
        if not np.all(np.isfinite(s)):
            raise InvalidInputError("scenarios must be finite")
        object.__setattr__(self, "scenarios", s)

    @property
    def m(self) -> int:
        return self.scenarios.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        return np.full(self.m, 1.0 / self.m)


@dataclass(frozen=True)
class DivergenceBall:
    """phi-divergence ball of radius rho around the empirical loss sample."""

    family: str
    rho: float
    support: np.ndarray

    def __post_init__(self):
        if self.family not in ("kl", "chi2"):
            raise ConfigurationError(f"unsupported divergence family {self.family!r}")
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise InvalidInputError(f"rho must be >= 0, got {self.rho}")
        sup = np.asarray(self.support, dtype=float).ravel()
        if sup.size < 1 or not np.all(np.isfinite(sup)):
            raise InvalidInputError("support must be a nonempty finite vector")
        object.__setattr__(self, "support", sup)


def cvar_empirical(losses: np.ndarray, alpha: float) -> float:
    """CVaR of an equally weighted loss sample at level alpha.

    Mean of the worst (1-alpha) tail with fractional weight on the boundary
    scenario; equals the minimized Rockafellar-Uryasev objective.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0,1), got {alpha}")
    losses = np.asarray(losses, dtype=float).ravel()
    if losses.size < 1:
        raise InvalidInputError("need at least one loss scenario")
    if not np.all(np.isfinite(losses)):
        raise InvalidInputError("losses must be finite")
    m = losses.size
    c = (1.0 - alpha) * m
    k = int(math.ceil(c))
    tail = np.sort(losses)[::-1][:k]
    full = tail[:-1].sum()
    frac = c - (k - 1)
    return float((full + frac * tail[-1]) / c)


def cvar_tail_weights(losses: np.ndarray, alpha: float) -> np.ndarray:
    """Scenario weights (summing to 1) that realize the empirical CVaR."""
    losses = np.asarray(losses, dtype=float).ravel()
    m = losses.size
    c = (1.0 - alpha) * m
    k = int(math.ceil(c))
    order = np.argsort(losses)[::-1]
    w = np.zeros(m)
    w[order[:k - 1]] = 1.0
    w[order[k - 1]] = c - (k - 1)
    return w / c


def solve_robust_cvar(scenarios: ScenarioSet, alpha: float, beta: float,
                      mu_e: np.ndarray, L: Optional[np.ndarray],
                      cfg: SolverConfig, n_iters: int = 8000) -> np.ndarray:
    """Projected subgradient solve of the robust CVaR program.

    Maximizes x'mu_e - Gamma*||diag(L)x||_q - beta*CVaR_alpha(-x'R) over the
    simplex. The CVaR subgradient averages -R over the tail scenarios at the
    current point (with the fractional boundary weight). Steps decay by
    halving whenever a block of iterations fails to improve the incumbent.
    """
    if beta < 0:
        raise InvalidInputError(f"tail aversion beta must be >= 0, got {beta}")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0,1), got {alpha}")
    r = scenarios.scenarios
    mu_e = np.asarray(mu_e, dtype=float)
    n = mu_e.size
    if r.shape[1] != n:
        raise InvalidInputError(
            f"scenarios have {r.shape[1]} assets but mu_e has {n}")

    def value(x):
        pen = _penalty_value(x, L, cfg)
        tail = cvar_empirical(-r @ x, alpha) if beta > 0 else 0.0
        return float(x @ mu_e - pen - beta * tail)

    x = np.full(n, 1.0 / n)
    best_x, best_f = x.copy(), value(x)
    step = 0.25
    block, stall = 100, 0
    for it in range(n_iters):
        g = mu_e.copy()
        if cfg.gamma > 0.0:
            g -= cfg.gamma * _penalty_subgradient(x, L, cfg)
        if beta > 0.0:
            w = cvar_tail_weights(-r @ x, alpha)
            g += beta * (r.T @ w)  # -beta * d/dx CVaR(-x'R)
        x = project_simplex(x + step * g / max(np.linalg.norm(g), 1e-12))
        fx = value(x)
        if fx > best_f + 1e-15:
            best_x, best_f = x.copy(), fx
            stall = 0
        else:
            stall += 1
        if stall >= block:
            step *= 0.5
            stall = 0
            x = best_x.copy()
            if step < 1e-12:
                break
    return best_x


def linear_losses(x: np.ndarray, gamma_vec: np.ndarray, delta_vec: np.ndarray,
                  z: np.ndarray) -> np.ndarray:
    """Loss sample l_m = sum_i x_i*(gamma_i + delta_i * z_m) for scalar shocks z."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    return float(x @ np.asarray(gamma_vec, float)) + float(x @ np.asarray(delta_vec, float)) * z


def _phi_star(family: str, y: np.ndarray) -> np.ndarray:
    if family == "kl":
        return np.exp(np.minimum(y, 700.0)) - 1.0
    # chi2: phi(u) = (u-1)^2
    return np.where(y >= -2.0, y + y * y / 4.0, -1.0)


def _golden_max(fun, lo: float, hi: float, iters: int = 120) -> Tuple[float, float]:
    """Golden-section maximization of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    xm = 0.5 * (a + b)
    return xm, fun(xm)


def dro_dual_value(ball: DivergenceBall) -> float:
    """Worst-case mean of the loss sample over the phi-divergence ball.

    Evaluates sup over eta >= 1e-12, nu of
    nu - rho*eta - eta * mean(phi*((nu - l)/eta)), the dual of the
    adversary's minimization of E_Q[l]. Nested golden-section: eta on a log
    grid with refinement, nu in a bracket around the sample range.
    """
    losses = ball.support
    mean_loss = float(losses.mean())
    span = float(losses.max() - losses.min())
    if ball.rho == 0.0 or span == 0.0:
        return mean_loss

    lo, hi = float(losses.min()), float(losses.max())

    def inner(eta: float) -> float:
        eta = max(eta, 1e-12)

        def h(nu):
            return nu - ball.rho * eta - eta * float(
                np.mean(_phi_star(ball.family, (nu - losses) / eta)))

        _, val = _golden_max(h, lo - 2.0 * eta - span, hi + span)
        return val

    scale = max(span, 1e-9)
    grid = scale * np.logspace(-6.0, 6.0, 97)
    vals = [inner(e) for e in grid]
    k = int(np.argmax(vals))
    lo_eta = grid[max(k - 1, 0)]
    hi_eta = grid[min(k + 1, grid.size - 1)]
    _, best = _golden_max(lambda t: inner(math.exp(t)),
                          math.log(lo_eta), math.log(hi_eta))
    # the ball contains the empirical law, so the worst case never exceeds the mean
    return min(float(max(best, vals[k])), mean_loss)


def _divergence(family: str, q: np.ndarray, p_hat: np.ndarray) -> float:
    u = q / p_hat
    if family == "kl":
        terms = np.where(q > 0, q * np.log(np.maximum(u, 1e-300)), 0.0)
        return float(terms.sum())
    return float((p_hat * (u - 1.0) ** 2).sum())


def _kkt_weights(family: str, losses: np.ndarray, p_hat: np.ndarray,
                 eta: float) -> np.ndarray:
    """Primal KKT weights q(eta) via phi', normalized to the simplex."""
    if family == "kl":
        w = np.exp(-(losses - losses.min()) / eta)
        q = p_hat * w
        return q / q.sum()
    # chi2: u_m = max(0, 1 - (l_m + mu)/(2 eta)) with mu from sum p*u = 1
    lo, hi = -2.0 * eta - float(losses.max()), 2.0 * eta - float(losses.min())
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        u = np.maximum(0.0, 1.0 - (losses + mu) / (2.0 * eta))
        total = float((p_hat * u).sum())
        if total > 1.0:
            lo = mu
        else:
            hi = mu
    u = np.maximum(0.0, 1.0 - (losses + 0.5 * (lo + hi)) / (2.0 * eta))
    q = p_hat * u
    return q / q.sum()


def dro_primal_oracle(ball: DivergenceBall, n_iters: int = 300) -> float:
    """Primal worst-case mean: min of E_q[l] over the divergence ball (M <= 30).

    Projected gradient on the reweighting with a feasibility line search
    toward the empirical center, followed by a KKT polish (bisection on the
    phi' stationarity conditions) when the divergence constraint binds.
    Used only as a test oracle against the dual.
    """
    losses = ball.support
    m = losses.size
    if m > 30:
        raise InvalidInputError(f"primal oracle refuses M={m} > 30")
    p_hat = np.full(m, 1.0 / m)
    if ball.rho == 0.0:
        return float(losses.mean())

    # unconstrained optimum: all mass on the argmin (ties split evenly)
    ties = losses == losses.min()
    vertex = np.where(ties, 1.0 / ties.sum(), 0.0)
    if _divergence(ball.family, vertex, p_hat) <= ball.rho:
        return float(losses.min())

    def feasible(q):
        return _divergence(ball.family, q, p_hat) <= ball.rho

    q = p_hat.copy()
    best_q, best_v = q.copy(), float(q @ losses)
    step = 1.0 / max(np.abs(losses).max(), 1e-12)
    for it in range(n_iters):
        cand = project_simplex(q - step * losses)
        if not feasible(cand):
            lo_t, hi_t = 0.0, 1.0
            for _ in range(40):
                t = 0.5 * (lo_t + hi_t)
                trial = p_hat + t * (cand - p_hat)
                if feasible(trial):
                    lo_t = t
                else:
                    hi_t = t
            cand = p_hat + lo_t * (cand - p_hat)
        q = cand
        v = float(q @ losses)
        if v < best_v:
            best_q, best_v = q.copy(), v
        if (it + 1) % 50 == 0:
            step *= 0.5

    # KKT polish when the divergence constraint is (near-)active
    scale = max(float(losses.max() - losses.min()), 1e-12)
    lo_e, hi_e = 1e-12 * scale, 1e12 * scale
    div_lo = _divergence(ball.family, _kkt_weights(ball.family, losses, p_hat, lo_e), p_hat)
    if div_lo >= ball.rho:
        for _ in range(200):
            eta = math.sqrt(lo_e * hi_e)
            d = _divergence(ball.family, _kkt_weights(ball.family, losses, p_hat, eta), p_hat)
            if d > ball.rho:
                lo_e = eta
            else:
                hi_e = eta
        q_kkt = _kkt_weights(ball.family, losses, p_hat, hi_e)
        if feasible(q_kkt) and float(q_kkt @ losses) < best_v:
            best_q, best_v = q_kkt, float(q_kkt @ losses)
    return best_v
