"""Return-emissions Pareto sweeps and a tiny robust dynamic program.

The scalarized trade-off max_x { x'r - mu * x'lambda } over the simplex is
solved exactly per grid point (the optimum is a vertex; ties break to the
lowest asset index). A regularized mode re-solves the full robust objective
with the -mu * x'lambda term folded into the mean, for empirical frontiers.

``bellman_tiny`` runs a max-min backward recursion over a discretized
simplex for rectangular finite disturbance sets; it is deliberately limited
to toy sizes and is checked against flat enumeration.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .solver import SolverConfig, solve_robust_mv
from .penalty import IntensityVector

__all__ = [
    "FrontierPoint",
    "FrontierReport",
    "TinyDynamicSpec",
    "pareto_sweep",
    "pareto_sweep_regularized",
    "frontier_diagnostics",
    "value_curve_gamma",
    "simplex_grid",
    "bellman_tiny",
    "write_frontier_csv",
]


@dataclass(frozen=True)
class FrontierPoint:
    """One point of the return-emissions frontier at carbon price mu."""

    mu_weight: float
    weights: np.ndarray
    mean_return: float
    intensity: float
    value: float


@dataclass
class FrontierReport:
    convexity_violations: List[int] = field(default_factory=list)
    slope_violations: List[int] = field(default_factory=list)
    monotonicity_violations: List[int] = field(default_factory=list)
    slopes_checked: int = 0

    @property
    def clean(self) -> bool:
        return not (self.convexity_violations or self.slope_violations
                    or self.monotonicity_violations)


def _intensity_values(lam) -> np.ndarray:
    if isinstance(lam, IntensityVector):
        return lam.values
    return np.asarray(lam, dtype=float)


def _check_mu_grid(mu_grid) -> np.ndarray:
    mu = np.asarray(mu_grid, dtype=float).ravel()
    if mu.size == 0:
        raise InvalidInputError("mu grid is empty")
    if np.any(mu < 0) or np.any(np.diff(mu) < 0):
        raise InvalidInputError("mu grid must be nonnegative and ascending")
    return mu


def pareto_sweep(r, lam, mu_grid) -> List[FrontierPoint]:
    """Exact vertex solutions of max_x { x'r - mu * x'lambda } per mu."""
    r = np.asarray(r, dtype=float)
    lam_vals = _intensity_values(lam)
    if r.shape != lam_vals.shape:
        raise InvalidInputError("returns and intensities must share a shape")
    mu = _check_mu_grid(mu_grid)
    points = []
    for m in mu:
        scores = r - m * lam_vals
        k = int(np.argmax(scores))  # lowest index wins ties
        x = np.zeros(r.size)
        x[k] = 1.0
        points.append(FrontierPoint(mu_weight=float(m), weights=x,
                                    mean_return=float(r[k]),
                                    intensity=float(lam_vals[k]),
                                    value=float(r[k] - m * lam_vals[k])))
    return points


def pareto_sweep_regularized(mu_e, sigma, L, cfg: SolverConfig, lam,
                             mu_grid) -> List[FrontierPoint]:
    """Frontier traced by the full robust objective with a -mu*x'lambda term.

    The carbon-price term is linear, so each sweep point shifts the mean to
    mu_e - mu*lambda and re-solves; solves are warm-started along the grid.
    """
    mu_e = np.asarray(mu_e, dtype=float)
    lam_vals = _intensity_values(lam)
    mu = _check_mu_grid(mu_grid)
    points = []
    warm: Optional[np.ndarray] = None
    for m in mu:
        x, _ = solve_robust_mv(mu_e - m * lam_vals, sigma, L, cfg, warm_start=warm)
        warm = x
        mean_ret = float(x @ mu_e)
        intensity = float(x @ lam_vals)
        points.append(FrontierPoint(mu_weight=float(m), weights=x,
                                    mean_return=mean_ret, intensity=intensity,
                                    value=mean_ret - float(m) * intensity))
    return points


def frontier_diagnostics(points: Sequence[FrontierPoint],
                         slope_rtol: float = 0.02) -> FrontierReport:
    """Check convexity of g(mu), the slope identity dg/dmu = -intensity,
    and monotonicity of intensity along the sweep.

    Slopes are checked by central differences only where the intensity is
    locally constant (kink indices are skipped). Violations are reported by
    grid index; no exception is raised.
    """
    if len(points) < 3:
        raise InvalidInputError("need at least 3 frontier points to diagnose")
    mu = np.array([p.mu_weight for p in points])
    g = np.array([p.value for p in points])
    lam = np.array([p.intensity for p in points])
    scale = max(1.0, np.abs(g).max())
    report = FrontierReport()

    for i in range(1, len(points) - 1):
        width = mu[i + 1] - mu[i - 1]
        if width <= 0:
            continue
        chord = (g[i - 1] * (mu[i + 1] - mu[i]) + g[i + 1] * (mu[i] - mu[i - 1])) / width
        if g[i] > chord + 1e-9 * scale:
            report.convexity_violations.append(i)
        if abs(lam[i - 1] - lam[i + 1]) <= 1e-9 * (1.0 + abs(lam[i])):
            report.slopes_checked += 1
            slope = (g[i + 1] - g[i - 1]) / width
            if abs(slope + lam[i]) > slope_rtol * max(abs(lam[i]), 1e-12):
                report.slope_violations.append(i)

    for i in range(len(points) - 1):
        if lam[i + 1] > lam[i] + 1e-12 * (1.0 + abs(lam[i])):
            report.monotonicity_violations.append(i)
    return report


def value_curve_gamma(mu_e, sigma, L, cfg: SolverConfig, gamma_grid) -> np.ndarray:
    """Optimal value V*(Gamma) along an ascending grid of budgets."""
    grid = np.asarray(gamma_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(np.diff(grid) < 0) or np.any(grid < 0):
        raise InvalidInputError("gamma grid must be nonnegative and ascending")
    values = np.empty(grid.size)
    warm: Optional[np.ndarray] = None
    for i, gam in enumerate(grid):
        x, diag = solve_robust_mv(mu_e, sigma, L,
                                  dataclasses.replace(cfg, gamma=float(gam)),
                                  warm_start=warm)
        warm = x
        values[i] = diag.objective_value
    return values


@dataclass(frozen=True)
class TinyDynamicSpec:
    """Finite-horizon max-min toy: payoff R_t = gamma_t + Delta_t z_t.

    ``gammas[t]`` is an (n,) base payoff, ``deltas[t]`` an (n, d) loading
    matrix and ``shocks[t]`` a finite (k_t, d) disturbance set, for
    t = 0..horizon. The control grid discretizes the simplex.
    """

    horizon: int
    n_assets: int
    gammas: List[np.ndarray]
    deltas: List[np.ndarray]
    shocks: List[np.ndarray]
    discount: float = 1.0
    grid_step: float = 0.1

    def __post_init__(self):
        if not 0 <= self.horizon <= 3:
            raise InvalidInputError(f"horizon must be in 0..3, got {self.horizon}")
        if not 1 <= self.n_assets <= 3:
            raise InvalidInputError(f"n_assets must be in 1..3, got {self.n_assets}")
        if not 0.0 <= self.discount <= 1.0:
            raise InvalidInputError(f"discount must be in [0,1], got {self.discount}")
        if self.grid_step not in (0.05, 0.1, 0.2):
            raise InvalidInputError(f"grid step must be 0.05, 0.1 or 0.2, got {self.grid_step}")
        for seq, name in ((self.gammas, "gammas"), (self.deltas, "deltas"),
                          (self.shocks, "shocks")):
            if len(seq) != self.horizon + 1:
                raise InvalidInputError(f"{name} must have horizon+1 entries")
        for t, z in enumerate(self.shocks):
            z = np.atleast_2d(np.asarray(z, dtype=float))
            if z.shape[0] < 1 or not np.all(np.isfinite(z)):
                raise InvalidInputError(f"disturbance set at t={t} must be nonempty and finite")


def simplex_grid(n: int, step: float) -> np.ndarray:
    """All points of the barycentric grid with the given step on the simplex."""
    m = round(1.0 / step)
    if abs(m * step - 1.0) > 1e-9:
        raise InvalidInputError(f"1/step must be an integer, got step={step}")

    def rec(parts, total):
        if parts == 1:
            yield [total]
            return
        for head in range(total + 1):
            for rest in rec(parts - 1, total - head):
                yield [head] + rest

    pts = np.array(list(rec(n, m)), dtype=float) * step
    return pts


def stage_payoff(x: np.ndarray, gamma: np.ndarray, delta: np.ndarray,
                 z: np.ndarray) -> float:
    """One-period payoff x'(gamma + delta z); shared by the DP and its oracle."""
    return float(np.dot(x, gamma + delta @ z))


def bellman_tiny(spec: TinyDynamicSpec) -> float:
    """Max-min value of the finite-horizon robust allocation toy.

    Backward recursion over the simplex grid: the worst-case stage payoff is
    minimized over the finite disturbance set and the best continuation is
    carried back with the discount. Refuses grids above 10^4 points.
    """
    grid = simplex_grid(spec.n_assets, spec.grid_step)
    if grid.shape[0] > 10_000:
        raise InvalidInputError(f"grid has {grid.shape[0]} points (> 10^4), refusing")
    continuation = 0.0
    for t in range(spec.horizon, -1, -1):
        gamma = np.asarray(spec.gammas[t], dtype=float)
        delta = np.atleast_2d(np.asarray(spec.deltas[t], dtype=float))
        shocks = np.atleast_2d(np.asarray(spec.shocks[t], dtype=float))
        best = -math.inf
        for x in grid:
            worst = math.inf
            for z in shocks:
                val = stage_payoff(x, gamma, delta, z) + spec.discount * continuation
                if val < worst:
                    worst = val
            if worst > best:
                best = worst
        continuation = best
    return continuation


def write_frontier_csv(points: Sequence[FrontierPoint], path) -> None:
    """Export sweep rows as mu,mean_return,intensity,value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "mean_return", "intensity", "value"])
        for p in points:
            writer.writerow([repr(p.mu_weight), repr(p.mean_return),
                             repr(p.intensity), repr(p.value)])
