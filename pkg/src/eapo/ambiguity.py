"""Ambiguity-set geometry for intensity misspecification.

Perturbations eps of the estimated intensities live in a p-norm ball of
radius Gamma, optionally whitened by a dispersion root. The worst-case
drop in emissions-adjusted portfolio mean over that ball is priced by the
dual norm: Gamma * ||diag(L) x||_q with 1/p + 1/q = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .penalty import IntensityVector, PenaltyParams, emissions_adjusted_mean

__all__ = [
    "AmbiguityBall",
    "EllipseStats",
    "dual_norm",
    "dual_norm_penalty",
    "sample_ball",
    "sampled_worst_case_gap",
    "whitener_from_dispersion",
    "ellipse_stats",
]

_SUPPORTED_P = (1, 2, math.inf)


def _conjugate(p):
    if p == 1:
        return math.inf
    if p == 2:
        return 2
    if p == math.inf:
        return 1
    raise ConfigurationError(f"unsupported ball norm p={p}; use 1, 2 or inf")


@dataclass(frozen=True)
class AmbiguityBall:
    """p-norm ball of radius gamma around the estimated intensities.

    ``whitener`` is an optional symmetric PSD matrix root (dispersion^{1/2});
    when present, sampled perturbations are eps = whitener @ u with
    ||u||_p <= gamma.
    """

    p: float
    gamma: float
    whitener: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.p not in _SUPPORTED_P:
            raise ConfigurationError(f"unsupported ball norm p={self.p}; use 1, 2 or inf")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidInputError(f"gamma must be positive, got {self.gamma}")
        if self.whitener is not None:
            w = np.asarray(self.whitener, dtype=float)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise InvalidInputError("whitener must be a square matrix")
            if not np.allclose(w, w.T, atol=1e-10):
                raise InvalidInputError("whitener must be symmetric")
            if np.linalg.eigvalsh(w).min() < -1e-10:
                raise InvalidInputError("whitener must be PSD")
            object.__setattr__(self, "whitener", w)

    @property
    def q(self):
        """Hoelder conjugate of p (the dual-norm exponent)."""
        return _conjugate(self.p)


@dataclass(frozen=True)
class EllipseStats:
    """Semi-axes and area of a confidence ellipse (axis1 >= axis2)."""

    axis1: float
    axis2: float
    area: float


def dual_norm(v: np.ndarray, p) -> float:
    """||v||_q with q the Hoelder conjugate of p."""
    q = _conjugate(p)
    v = np.asarray(v, dtype=float)
    if q == 1:
        return float(np.abs(v).sum())
    if q == 2:
        return float(np.linalg.norm(v))
    return float(np.abs(v).max()) if v.size else 0.0


def dual_norm_penalty(x: np.ndarray, L: np.ndarray, ball: AmbiguityBall) -> float:
    """Envelope price of worst-case intensity misspecification.

    Returns gamma * ||diag(L) x||_q. ``x`` must be a simplex weight vector
    of the same length as the Lipschitz constants ``L``.
    """
    x = np.asarray(x, dtype=float)
    L = np.asarray(L, dtype=float)
    if x.shape != L.shape:
        raise InvalidInputError(f"weights {x.shape} and constants {L.shape} differ in shape")
    if np.any(x < -1e-12) or abs(x.sum() - 1.0) > 1e-8:
        raise InvalidInputError("weights must lie on the unit simplex")
    return ball.gamma * dual_norm(L * x, ball.p)


def _unit_sphere_p(rng: np.random.Generator, n: int, p) -> np.ndarray:
    """One point on the unit p-norm sphere."""
    if p == 2:
        u = rng.standard_normal(n)
        nrm = np.linalg.norm(u)
        return u / nrm if nrm > 0 else np.eye(n)[0]
    if p == 1:
        u = rng.exponential(size=n) * rng.choice([-1.0, 1.0], size=n)
        return u / np.abs(u).sum()
    # p = inf: uniform in the cube, one coordinate pinned to a face
    u = rng.uniform(-1.0, 1.0, size=n)
    k = rng.integers(n)
    u[k] = rng.choice([-1.0, 1.0])
    return u


def sample_ball(ball: AmbiguityBall, n: int, n_samples: int, seed: int,
                boundary_fraction: float = 0.8) -> np.ndarray:
    """Sample perturbations from the ball, mostly on the boundary.

    The sup of the mean-gap over the ball is near the boundary but the gap
    is not exactly linear in eps, so an 80/20 boundary/interior mixture is
    drawn. Deterministic given ``seed``. Returns (n_samples, n).
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n_samples, n))
    for s in range(n_samples):
        u = _unit_sphere_p(rng, n, ball.p) * ball.gamma
        if rng.uniform() > boundary_fraction:
            u *= rng.uniform()
        out[s] = u
    if ball.whitener is not None:
        out = out @ ball.whitener.T
    return out


def sampled_worst_case_gap(x: np.ndarray, lambda_hat: IntensityVector,
                           ball: AmbiguityBall, params: PenaltyParams,
                           returns_window: np.ndarray, n_samples: int,
                           seed: int) -> float:
    """Monte Carlo estimate of the worst-case emissions-adjusted mean gap.

    Maximizes x'(mu_e(lambda_hat) - mu_e(clamp(lambda_hat + eps))) over
    sampled eps in the ball. Perturbed intensities are clamped into
    [0, lambda_max]; lambda_max itself is held at the estimated value. The
    zero perturbation is always included, so the result is >= 0.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    x = np.asarray(x, dtype=float)
    n = len(lambda_hat)
    if x.shape != (n,):
        raise InvalidInputError(f"weights shape {x.shape} does not match {n} assets")
    window = np.atleast_2d(np.asarray(returns_window, dtype=float))
    lam_max = lambda_hat.lambda_max
    mu = window.mean(axis=0)

    base = emissions_adjusted_mean(window, lambda_hat, params)
    base_val = float(x @ base)
    if lam_max == 0.0:
        return 0.0

    eps = sample_ball(ball, n, n_samples, seed)
    lam = np.clip(lambda_hat.values[None, :] + eps, 0.0, lam_max)
    factors = (1.0 - lam / lam_max) ** int(params.m)
    perturbed_vals = (factors * mu[None, :]) @ x
    worst = base_val - perturbed_vals.min()
    return max(0.0, float(worst))


def whitener_from_dispersion(sigma_lambda: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Symmetric PSD root of a dispersion matrix with an eigenvalue floor.

    Imputation dispersions can be rank-deficient with few draws; eigenvalues
    below ``floor`` are raised to it before taking the root so the whitened
    ball stays well defined.
    """
    sig = np.asarray(sigma_lambda, dtype=float)
    if sig.ndim != 2 or sig.shape[0] != sig.shape[1]:
        raise InvalidInputError("dispersion must be a square matrix")
    sig = 0.5 * (sig + sig.T)
    vals, vecs = np.linalg.eigh(sig)
    vals = np.maximum(vals, floor)
    return (vecs * np.sqrt(vals)) @ vecs.T


def ellipse_stats(cov2x2: np.ndarray, confidence: float = 0.95) -> EllipseStats:
    """Semi-axes and area of the confidence ellipse of a 2x2 covariance.

    axis_k = sqrt(chi2_2(confidence) * eig_k); for df=2 the quantile has the
    closed form -2*log(1 - confidence) (5.991 at 95%).
    """
    cov = np.asarray(cov2x2, dtype=float)
    if cov.shape != (2, 2):
        raise InvalidInputError(f"expected a 2x2 covariance, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)) or not np.allclose(cov, cov.T, atol=1e-10):
        raise InvalidInputError("covariance must be finite and symmetric")
    if not 0.0 < confidence < 1.0:
        raise InvalidInputError(f"confidence must be in (0,1), got {confidence}")
    eigs = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if eigs.min() < -1e-10 * max(1.0, abs(eigs).max()):
        raise InvalidInputError("covariance must be PSD")
    eigs = np.maximum(eigs, 0.0)
    quantile = -2.0 * math.log(1.0 - confidence)
    axis2, axis1 = np.sqrt(quantile * eigs)
    return EllipseStats(axis1=float(axis1), axis2=float(axis2),
                        area=float(math.pi * axis1 * axis2))
