"""Robust mean-variance solver on the long-only simplex.

Maximizes x'mu_e - Gamma*||diag(L) x||_q - theta*x'Sigma*x by projected
gradient ascent with a backtracking step size (halved whenever a step would
decrease the objective, so accepted iterates are monotone). The default
configuration is the l2-absorbed specialization in which diag(L) is folded
into Gamma and the ambiguity penalty is Gamma*||x||_2; general diag(L) and
q in {1, 2, inf} are supported through subgradients with a fixed tie-break.

A barycentric-grid oracle certifies global optimality on instances with
n <= 4, and the shadow price of the robustness budget is extracted by
central finite differences of the optimal value.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

from .ambiguity import dual_norm
from .errors import InvalidInputError, NumericalError

__all__ = [
    "SolverConfig",
    "SolveDiagnostics",
    "objective",
    "gradient",
    "project_simplex",
    "project_l1_ball",
    "project_turnover",
    "solve_robust_mv",
    "brute_force_oracle",
    "shadow_price",
]


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one robust solve.

    ``eta`` of None selects the default 1 / (2*theta*max_eig(Sigma) +
    gamma + 1). ``turnover_cap`` is an l1 budget in (0, 2] or None.
    """

    gamma: float = 0.0
    theta: float = 0.5
    m: int = 1
    p: float = 2
    eta: Optional[float] = None
    max_iters: int = 5000
    turnover_cap: Optional[float] = None
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidInputError(f"gamma must be >= 0, got {self.gamma}")
        if self.theta < 0:
            raise InvalidInputError(f"theta must be >= 0, got {self.theta}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidInputError(f"curvature m must be a positive integer, got {self.m}")
        if self.p not in (1, 2, math.inf):
            raise InvalidInputError(f"ball norm p must be 1, 2 or inf, got {self.p}")
        if self.eta is not None and self.eta <= 0:
            raise InvalidInputError("step size eta must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if self.turnover_cap is not None and not 0.0 < self.turnover_cap <= 2.0:
            raise InvalidInputError(
                f"turnover cap must lie in (0, 2], got {self.turnover_cap}")
        if self.tol <= 0:
            raise InvalidInputError("tolerance must be positive")


@dataclass
class SolveDiagnostics:
    iterations: int
    final_projected_gradient_norm: float
    objective_value: float
    turnover_binding: bool = False


def _check_inputs(x, mu_e, sigma):
    x = np.asarray(x, dtype=float)
    mu_e = np.asarray(mu_e, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = mu_e.size
    if x.shape != (n,):
        raise InvalidInputError(f"weights shape {x.shape} does not match {n} assets")
    if sigma.shape != (n, n):
        raise InvalidInputError(f"covariance shape {sigma.shape} does not match {n} assets")
    return x, mu_e, sigma


def _penalty_value(x, L, cfg: SolverConfig) -> float:
    if cfg.gamma == 0.0:
        return 0.0
    if L is None:
        return cfg.gamma * float(np.linalg.norm(x))
    return cfg.gamma * dual_norm(np.asarray(L, dtype=float) * x, cfg.p)


def _penalty_subgradient(x, L, cfg: SolverConfig) -> np.ndarray:
    """Subgradient of ||diag(L) x||_q at x (q conjugate to cfg.p)."""
    n = x.size
    if L is None:
        nrm = np.linalg.norm(x)
        return x / nrm if nrm > 0 else np.zeros(n)
    L = np.asarray(L, dtype=float)
    v = L * x
    if cfg.p == 2:
        nrm = np.linalg.norm(v)
        return L * v / nrm if nrm > 0 else np.zeros(n)
    if cfg.p == math.inf:  # q = 1
        return L * np.sign(v) + L * (v == 0.0)  # sign fixed to +1 at 0 (x >= 0 on simplex)
    # p = 1, q = inf: lexicographically first maximizer of |L_i x_i|
    k = int(np.argmax(np.abs(v)))
    g = np.zeros(n)
    g[k] = L[k] * np.sign(v[k]) if v[k] != 0.0 else L[k]
    return g


def objective(x, mu_e, sigma, L, cfg: SolverConfig) -> float:
    """Robust mean-variance objective x'mu - Gamma*||diag(L)x||_q - theta*x'Sx.

    Pass ``L=None`` for the absorbed specialization (penalty Gamma*||x||_2).
    """
    x, mu_e, sigma = _check_inputs(x, mu_e, sigma)
    return float(x @ mu_e - _penalty_value(x, L, cfg) - cfg.theta * x @ sigma @ x)


def gradient(x, mu_e, sigma, cfg: SolverConfig) -> np.ndarray:
    """Gradient of the absorbed-l2 objective: mu - Gamma*x/||x||_2 - 2*theta*Sigma*x."""
    x, mu_e, sigma = _check_inputs(x, mu_e, sigma)
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise InvalidInputError("gradient undefined at x = 0 (not on the simplex)")
    return mu_e - cfg.gamma * x / nrm - 2.0 * cfg.theta * (sigma @ x)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("cannot project a non-finite vector")
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, n + 1) > (css - 1.0))[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - tau, 0.0)


def project_l1_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto {y : ||y - center||_1 <= radius}."""
    d = np.asarray(v, dtype=float) - center
    if np.abs(d).sum() <= radius:
        return np.asarray(v, dtype=float).copy()
    if radius == 0.0:
        return np.asarray(center, dtype=float).copy()
    # project |d| onto the simplex scaled to the radius, restore signs
    a = np.abs(d)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, a.size + 1) > (css - radius))[0][-1]
    tau = (css[rho] - radius) / (rho + 1)
    return center + np.sign(d) * np.maximum(a - tau, 0.0)


def project_turnover(x: np.ndarray, x_prev: np.ndarray, tau: float,
                     max_rounds: int = 1000, tol: float = 1e-10) -> np.ndarray:
    """Project onto the simplex intersected with the l1 ball around x_prev.

    Dykstra's alternating projections between the two convex sets; returns
    the best iterate with a warning if the round cap is hit.
    """
    x = np.asarray(x, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    if tau < 0:
        raise InvalidInputError(f"turnover budget must be >= 0, got {tau}")
    if np.abs(x - x_prev).sum() <= tau:
        return x.copy()
    if tau == 0.0:
        return x_prev.copy()
    y = x.copy()
    p_corr = np.zeros_like(y)
    q_corr = np.zeros_like(y)
    for _ in range(max_rounds):
        z = project_simplex(y + p_corr)
        p_corr = y + p_corr - z
        y = project_l1_ball(z + q_corr, x_prev, tau)
        q_corr = z + q_corr - y
        # converged once both set-projections agree
        if np.abs(z - y).max() < tol:
            break
    else:
        warnings.warn("turnover projection hit the round cap before converging",
                      RuntimeWarning)
    # final pass guarantees exact simplex feasibility
    return project_simplex(y)


def _default_eta(sigma: np.ndarray, cfg: SolverConfig, L=None) -> float:
    # the l2 penalty Gamma*||x||_2 has Hessian norm up to Gamma/||x|| and
    # ||x||_2 >= 1/sqrt(n) on the simplex, so the Gamma term carries sqrt(n)
    max_eig = float(np.linalg.eigvalsh(sigma).max()) if sigma.size else 0.0
    n = sigma.shape[0] if sigma.ndim == 2 else 1
    pen_curv = cfg.gamma * math.sqrt(n)
    if L is not None:
        pen_curv *= float(np.max(L)) if np.size(L) else 1.0
    return 1.0 / (2.0 * cfg.theta * max(max_eig, 0.0) + pen_curv + 1.0)


def solve_robust_mv(mu_e, sigma, L, cfg: SolverConfig,
                    warm_start: Optional[np.ndarray] = None
                    ) -> Tuple[np.ndarray, SolveDiagnostics]:
    """Projected-gradient solve of the robust mean-variance program.

    Iterates x <- proj_simplex(x + eta * grad), halving eta whenever a step
    would decrease the objective, and stops once the projected-gradient
    norm ||proj(x + eta*g) - x|| / eta falls below cfg.tol. If a turnover
    cap is configured and binds relative to ``warm_start``, the result is
    projected onto the turnover ball afterwards.

    Returns (weights, diagnostics).
    """
    mu_e = np.asarray(mu_e, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = mu_e.size
    if sigma.shape != (n, n):
        raise InvalidInputError(f"covariance shape {sigma.shape} does not match {n} assets")
    if warm_start is None:
        x = np.full(n, 1.0 / n)
    else:
        x = project_simplex(np.asarray(warm_start, dtype=float))

    def f(w):
        return float(w @ mu_e - _penalty_value(w, L, cfg) - cfg.theta * w @ sigma @ w)

    def grad(w):
        g = mu_e - 2.0 * cfg.theta * (sigma @ w)
        if cfg.gamma > 0.0:
            g = g - cfg.gamma * _penalty_subgradient(w, L, cfg)
        return g

    eta = cfg.eta if cfg.eta is not None else _default_eta(sigma, cfg, L)
    fx = f(x)
    pg_norm = math.inf
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        g = grad(x)
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient after {iterations} iterations "
                f"(objective {fx:.6g})")
        y = project_simplex(x + eta * g)
        pg_norm = float(np.linalg.norm(y - x)) / eta
        if pg_norm <= cfg.tol:
            break
        fy = f(y)
        if fy < fx:
            if fx - fy <= 1e-14 * (1.0 + abs(fx)):
                break  # rounding-level stagnation: numerically converged
            eta *= 0.5
            if eta < 1e-18:
                break
            continue
        x, fx = y, fy

    binding = False
    if cfg.turnover_cap is not None and warm_start is not None:
        x_prev = project_simplex(np.asarray(warm_start, dtype=float))
        if np.abs(x - x_prev).sum() > cfg.turnover_cap:
            x = project_turnover(x, x_prev, cfg.turnover_cap)
            binding = True

    diag = SolveDiagnostics(iterations=iterations,
                            final_projected_gradient_norm=pg_norm,
                            objective_value=f(x),
                            turnover_binding=binding)
    return x, diag


def _compositions(total: int, parts: int):
    """Integer vectors of length ``parts`` summing to ``total`` (lazy)."""
    for cuts in combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield out


def _grid_points(lower: np.ndarray, mass: float, steps: int) -> np.ndarray:
    """Barycentric grid of {x >= lower, sum x = sum lower + mass}."""
    n = lower.size
    if steps < 1 or mass <= 0:
        return lower[None, :].copy()
    ks = np.array(list(_compositions(steps, n)), dtype=float)
    return lower[None, :] + ks * (mass / steps)


def brute_force_oracle(mu_e, sigma, L, cfg: SolverConfig,
                       grid_step: float = 0.05,
                       refine_rounds: int = 40) -> Tuple[np.ndarray, float]:
    """Global grid search over the simplex with local refinement (n <= 4).

    Enumerates a barycentric grid, then repeatedly re-grids a shrinking
    neighborhood of the incumbent at half the resolution. Intended as an
    optimality certificate for the projected-gradient solver on small
    instances, not as a production path.
    """
    mu_e = np.asarray(mu_e, dtype=float)
    n = mu_e.size
    if n > 4:
        raise InvalidInputError(f"grid oracle refuses n={n} > 4")
    if grid_step <= 0 or grid_step > 1:
        raise InvalidInputError(f"grid step must lie in (0, 1], got {grid_step}")
    sigma = np.asarray(sigma, dtype=float)

    def batch_objective(points):
        pen = np.zeros(points.shape[0])
        if cfg.gamma > 0.0:
            scaled = points if L is None else points * np.asarray(L, dtype=float)[None, :]
            if L is None or cfg.p == 2:
                pen = cfg.gamma * np.linalg.norm(scaled, axis=1)
            elif cfg.p == math.inf:
                pen = cfg.gamma * np.abs(scaled).sum(axis=1)
            else:
                pen = cfg.gamma * np.abs(scaled).max(axis=1)
        quad = np.einsum("si,ij,sj->s", points, sigma, points)
        return points @ mu_e - pen - cfg.theta * quad

    steps = max(1, round(1.0 / grid_step))
    pts = _grid_points(np.zeros(n), 1.0, steps)
    vals = batch_objective(pts)
    best = int(np.argmax(vals))
    x_best, f_best = pts[best], float(vals[best])

    h = 1.0 / steps
    for _ in range(refine_rounds):
        if h < 1e-9:
            break
        lower = np.maximum(x_best - 2.0 * h, 0.0)
        mass = 1.0 - lower.sum()
        steps = min(40, max(1, round(mass / (h / 2.0))))
        pts = _grid_points(lower, mass, steps)
        vals = batch_objective(pts)
        best = int(np.argmax(vals))
        if float(vals[best]) > f_best:
            x_best, f_best = pts[best], float(vals[best])
        h = mass / steps
    return x_best, f_best


def shadow_price(mu_e, sigma, L, cfg: SolverConfig, delta_gamma: float = 1e-4) -> float:
    """Marginal objective cost of the robustness budget, -dV*/dGamma.

    Central finite difference of the optimal value at Gamma +/- delta;
    nonnegative up to solver tolerance.
    """
    if delta_gamma <= 0:
        raise InvalidInputError("delta_gamma must be positive")
    if cfg.gamma - delta_gamma < 0:
        raise InvalidInputError("Gamma - delta_gamma must stay nonnegative")
    x_base, _ = solve_robust_mv(mu_e, sigma, L, cfg)
    v = {}
    for sign in (+1.0, -1.0):
        cfg_s = dataclasses.replace(cfg, gamma=cfg.gamma + sign * delta_gamma)
        _, diag = solve_robust_mv(mu_e, sigma, L, cfg_s, warm_start=x_base)
        v[sign] = diag.objective_value
    return -(v[+1.0] - v[-1.0]) / (2.0 * delta_gamma)
