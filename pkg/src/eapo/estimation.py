"""Statistical pre-processing: covariance shrinkage and emissions imputation.

Ledoit-Wolf linear shrinkage blends the sample covariance with a structured
target (constant-correlation by default) using the closed-form optimal
intensity, then jitters the diagonal so downstream solvers can invert the
result even when the window is shorter than the cross-section.

Missing emissions/revenue disclosures are imputed from a sector-aware
hierarchical Gaussian model on the log scale, fitted by empirical Bayes,
with K independent posterior-predictive draws propagated into intensities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

__all__ = [
    "ShrinkageResult",
    "ImputationDraws",
    "ledoit_wolf",
    "rolling_mean",
    "impute_emissions",
    "average_imputations",
]

_EIG_FLOOR = 1e-10
_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class ShrinkageResult:
    sigma_hat: np.ndarray
    delta: float
    target_kind: str


def _pd_jitter(sigma: np.ndarray) -> np.ndarray:
    """Raise the minimum eigenvalue to the floor by a diagonal shift."""
    min_eig = np.linalg.eigvalsh(sigma).min()
    if min_eig < _EIG_FLOOR:
        n = sigma.shape[0]
        shift = max(_EIG_FLOOR * np.trace(sigma) / n, _EIG_FLOOR - min_eig)
        sigma = sigma + shift * np.eye(n)
    return sigma


def _demeaned(window: np.ndarray) -> np.ndarray:
    window = np.atleast_2d(np.asarray(window, dtype=float))
    if window.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 rows for covariance estimation, got {window.shape[0]}")
    if not np.all(np.isfinite(window)):
        raise InvalidInputError("returns window contains non-finite values")
    return window - window.mean(axis=0)


def ledoit_wolf(window: np.ndarray, target_kind: str = "constant_correlation") -> ShrinkageResult:
    """Ledoit-Wolf shrinkage covariance of a (T x n) returns window.

    sigma_hat = delta * F + (1 - delta) * S with S the (1/T-normalized)
    sample covariance, F the chosen target, and delta the closed-form
    optimal intensity clipped to [0, 1]. Constant columns are floored to a
    tiny variance with a warning. The result is positive definite after a
    diagonal jitter.
    """
    if target_kind not in ("constant_correlation", "identity_scaled"):
        raise InvalidInputError(f"unknown shrinkage target {target_kind!r}")
    x = _demeaned(window)
    t, n = x.shape
    sample = x.T @ x / t

    var = np.diag(sample).copy()
    floor = _VAR_FLOOR * max(1.0, var.mean() if var.size else 1.0)
    degenerate = var < floor
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} asset(s) have (near-)zero variance; "
                      "flooring for shrinkage", RuntimeWarning)
        var = np.maximum(var, floor)
        sample[np.diag_indices(n)] = var

    if n == 1:
        return ShrinkageResult(sigma_hat=_pd_jitter(sample), delta=0.0,
                               target_kind=target_kind)

    if target_kind == "constant_correlation":
        sqrtvar = np.sqrt(var)
        outer_sd = np.outer(sqrtvar, sqrtvar)
        r_bar = ((sample / outer_sd).sum() - n) / (n * (n - 1))
        target = r_bar * outer_sd
        np.fill_diagonal(target, var)

        y = x ** 2
        pi_mat = y.T @ y / t - sample ** 2
        pi_hat = pi_mat.sum()

        # asymptotic covariance of diag entries with off-diagonals
        theta_mat = (x ** 3).T @ x / t - var[:, None] * sample
        np.fill_diagonal(theta_mat, 0.0)
        rho_hat = np.trace(pi_mat) + r_bar * ((1.0 / sqrtvar)[:, None] * sqrtvar[None, :]
                                              * theta_mat).sum()
        gamma_hat = np.linalg.norm(sample - target, "fro") ** 2
    else:
        mu = np.trace(sample) / n
        target = mu * np.eye(n)
        gamma_hat = np.linalg.norm(sample - target, "fro") ** 2
        pi_hat = sum(np.linalg.norm(np.outer(row, row) - sample, "fro") ** 2
                     for row in x) / t
        rho_hat = 0.0

    if gamma_hat <= 0:
        delta = 0.0  # sample already equals the target
    else:
        delta = float(np.clip((pi_hat - rho_hat) / gamma_hat / t, 0.0, 1.0))

    sigma = delta * target + (1.0 - delta) * sample
    sigma = 0.5 * (sigma + sigma.T)
    return ShrinkageResult(sigma_hat=_pd_jitter(sigma), delta=delta, target_kind=target_kind)


def rolling_mean(window: np.ndarray) -> np.ndarray:
    """Per-column arithmetic mean of a returns window."""
    window = np.atleast_2d(np.asarray(window, dtype=float))
    if window.shape[0] < 1:
        raise InsufficientDataError("empty window")
    return window.mean(axis=0)


@dataclass(frozen=True)
class ImputationDraws:
    """K posterior-predictive intensity panels plus the fitted log-scale model."""

    k: int
    panels: List[np.ndarray]
    sector_params: Dict[str, Dict[str, Dict[str, float]]]


class _LogNormalSectorModel:
    """Empirical-Bayes fit of a one-level Gaussian hierarchy on log values."""

    def __init__(self, log_obs: np.ndarray, sector_of_obs: Sequence[str]):
        sectors = np.asarray(sector_of_obs)
        self.global_mean = float(log_obs.mean())
        global_var = float(log_obs.var(ddof=1)) if log_obs.size >= 2 else 0.0

        names = sorted(set(sectors.tolist()))
        counts = {s: int((sectors == s).sum()) for s in names}
        means = {s: float(log_obs[sectors == s].mean()) for s in names}

        # per-sector within variance for well-populated sectors, pooled otherwise
        rich = [s for s in names if counts[s] >= 3]
        if rich:
            dof = sum(counts[s] - 1 for s in rich)
            pooled = sum(float(log_obs[sectors == s].var(ddof=1)) * (counts[s] - 1)
                         for s in rich) / dof
        else:
            pooled = global_var
        self.pooled_var = max(pooled, _VAR_FLOOR)
        within = {s: (max(float(log_obs[sectors == s].var(ddof=1)), _VAR_FLOOR)
                      if counts[s] >= 3 else self.pooled_var)
                  for s in names}

        # method of moments for the between-sector variance
        if len(names) >= 2:
            mean_vec = np.array([means[s] for s in names])
            noise = np.mean([within[s] / counts[s] for s in names])
            between = float(mean_vec.var(ddof=1)) - noise
        else:
            between = self.pooled_var
        self.between_var = max(between, _VAR_FLOOR)

        self.posterior = {}
        for s in names:
            prec = 1.0 / self.between_var + counts[s] / within[s]
            post_mean = (self.global_mean / self.between_var
                         + counts[s] * means[s] / within[s]) / prec
            self.posterior[s] = {
                "mean": post_mean,
                "var": 1.0 / prec,
                "within_var": within[s],
                "count": counts[s],
            }

    def predictive(self, sector: str):
        """(mean, variance) of the posterior predictive for one log value."""
        if sector in self.posterior:
            p = self.posterior[sector]
            return p["mean"], p["var"] + p["within_var"]
        # sector never observed: fall back to the global distribution
        return self.global_mean, self.between_var + self.pooled_var

    def params(self):
        return {s: {"mean": p["mean"], "var": p["var"]} for s, p in self.posterior.items()}


def impute_emissions(emissions: np.ndarray, revenues: np.ndarray,
                     sectors: Sequence[str], k: int = 8, seed: int = 0) -> ImputationDraws:
    """Multiple imputation of missing emissions and revenues.

    ``emissions`` and ``revenues`` are arrays (cross-section or
    periods x assets panel) of positive values with NaN marking missing
    entries; ``sectors`` maps each asset (column) to a sector label.
    Observed cells pass through unchanged in every draw; missing cells are
    drawn from the sector's posterior predictive on the log scale (falling
    back to the global fit for unobserved sectors). Draw j uses its own
    ``seed + j`` stream, so panels are reproducible and independent.

    Returns K intensity panels (emissions / revenue), all entries > 0.
    """
    if k < 1:
        raise InvalidInputError(f"number of draws must be >= 1, got {k}")
    emis = np.asarray(emissions, dtype=float)
    revs = np.asarray(revenues, dtype=float)
    if emis.shape != revs.shape:
        raise InvalidInputError("emissions and revenues must share a shape")
    panel_e = np.atleast_2d(emis)
    panel_s = np.atleast_2d(revs)
    n_assets = panel_e.shape[1]
    if len(sectors) != n_assets:
        raise InvalidInputError(f"{n_assets} assets but {len(sectors)} sector labels")
    sectors = [str(s) for s in sectors]
    for name, panel in (("emissions", panel_e), ("revenues", panel_s)):
        obs = panel[np.isfinite(panel)]
        if obs.size == 0:
            raise InsufficientDataError(f"no observed {name} records to fit the model")
        if np.any(obs <= 0):
            raise InvalidInputError(f"observed {name} must be strictly positive")

    col_sectors = np.tile(np.array(sectors), (panel_e.shape[0], 1))
    models = {}
    for name, panel in (("emissions", panel_e), ("revenues", panel_s)):
        mask = np.isfinite(panel)
        models[name] = _LogNormalSectorModel(np.log(panel[mask]), col_sectors[mask])

    panels = []
    for j in range(k):
        rng = np.random.default_rng(seed + j)
        filled = {}
        for name, panel in (("emissions", panel_e), ("revenues", panel_s)):
            out = panel.copy()
            miss = ~np.isfinite(panel)
            idx = np.argwhere(miss)
            for row, col in idx:
                m, v = models[name].predictive(sectors[col])
                out[row, col] = np.exp(m + np.sqrt(v) * rng.standard_normal())
            filled[name] = out
        lam = filled["emissions"] / filled["revenues"]
        panels.append(lam.reshape(emis.shape))

    sector_params = {name: model.params() for name, model in models.items()}
    return ImputationDraws(k=k, panels=panels, sector_params=sector_params)


def average_imputations(draws: ImputationDraws) -> np.ndarray:
    """Elementwise mean intensity across the K draws."""
    if draws.k < 1 or not draws.panels:
        raise InvalidInputError("no panels to average")
    return np.mean(np.stack(draws.panels, axis=0), axis=0)
