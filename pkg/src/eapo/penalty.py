"""Emissions-penalty operator and emissions-adjusted return statistics.

The operator haircuts an asset's payoff by its revenue-normalized emissions
intensity relative to the cross-sectional maximum:

    adjusted = (1 - lam / lam_max)**m * r

``m`` controls curvature: m=1 is a linear schedule, larger m approximates a
hard exclusion of the highest-intensity names. The factor is defined as 1
for every asset when the whole cross-section has zero intensity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllZeroIntensityError, InsufficientDataError, InvalidInputError

__all__ = [
    "IntensityVector",
    "PenaltyParams",
    "penalty",
    "penalty_factors",
    "adjust_returns",
    "emissions_adjusted_mean",
    "lipschitz_constants",
]


@dataclass(frozen=True)
class IntensityVector:
    """Cross-section of emissions intensities for one scope at one date.

    values are tCO2e per unit revenue and must be finite and nonnegative;
    ``lambda_max`` is always the cross-sectional maximum.
    """

    values: np.ndarray
    scope: int = 1
    lambda_max: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise InvalidInputError("intensities must be a 1-D vector")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidInputError("intensities must be finite and >= 0")
        if self.scope not in (1, 2, 3):
            raise InvalidInputError(f"scope must be 1, 2 or 3, got {self.scope}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lambda_max", float(vals.max()) if vals.size else 0.0)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class PenaltyParams:
    """Curvature and scope of the penalty operator."""

    m: int = 1
    scope: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidInputError(f"curvature m must be a positive integer, got {self.m}")
        if self.scope not in (1, 2, 3):
            raise InvalidInputError(f"scope must be 1, 2 or 3, got {self.scope}")


def penalty(r, lam, lam_max, m):
    """Apply the emissions penalty to a payoff.

    ``lam`` is clamped into [0, lam_max] before evaluation (ambiguity
    perturbations or data revisions can push it outside the domain).
    When ``lam_max`` is 0 the factor is 1 and the payoff passes through.

    Args:
        r: payoff (scalar or array).
        lam: emissions intensity, broadcastable against ``r``.
        lam_max: cross-sectional maximum intensity, >= 0.
        m: curvature, positive integer.

    Returns:
        (1 - lam/lam_max)**m * r, same shape as the broadcast inputs.
    """
    r = np.asarray(r, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(lam)) and np.isfinite(lam_max)):
        raise InvalidInputError("penalty inputs must be finite")
    if lam_max < 0:
        raise InvalidInputError("lam_max must be >= 0")
    if int(m) != m or m < 1:
        raise InvalidInputError(f"curvature m must be a positive integer, got {m}")
    if lam_max == 0.0:
        out = r * 1.0
        return float(out) if out.ndim == 0 else out
    lam = np.clip(lam, 0.0, lam_max)
    out = (1.0 - lam / lam_max) ** int(m) * r
    return float(out) if out.ndim == 0 else out


def penalty_factors(intensities: IntensityVector, params: PenaltyParams) -> np.ndarray:
    """Per-asset multiplicative haircut factors (1 - lam/lam_max)**m."""
    if intensities.lambda_max == 0.0:
        return np.ones(len(intensities))
    tilde = np.clip(intensities.values / intensities.lambda_max, 0.0, 1.0)
    return (1.0 - tilde) ** int(params.m)


def adjust_returns(returns: np.ndarray, intensities: IntensityVector,
                   params: PenaltyParams) -> np.ndarray:
    """Apply the penalty columnwise to a (dates x assets) returns panel."""
    returns = np.asarray(returns, dtype=float)
    panel = np.atleast_2d(returns)
    if panel.shape[1] != len(intensities):
        raise InvalidInputError(
            f"returns have {panel.shape[1]} columns but {len(intensities)} intensities given")
    adjusted = panel * penalty_factors(intensities, params)[None, :]
    return adjusted.reshape(returns.shape)


def emissions_adjusted_mean(returns_window: np.ndarray, intensities: IntensityVector,
                            params: PenaltyParams) -> np.ndarray:
    """Sample mean of the emissions-adjusted returns, per asset.

    The operator is linear in the payoff, so this equals the penalty factors
    applied to the plain sample mean.
    """
    window = np.atleast_2d(np.asarray(returns_window, dtype=float))
    if window.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 rows to estimate a mean, got {window.shape[0]}")
    return adjust_returns(window, intensities, params).mean(axis=0)


def lipschitz_constants(mean_abs_returns, lambda_max, m) -> np.ndarray:
    """Asset-wise bounds on |d/dlam E[penalty(R, lam)]|: m * E|R_i| / lam_max.

    Raises AllZeroIntensityError when lambda_max == 0; the ambiguity penalty
    is vacuous in that case and the caller should skip it.
    """
    mean_abs = np.asarray(mean_abs_returns, dtype=float)
    if np.any(mean_abs < 0) or not np.all(np.isfinite(mean_abs)):
        raise InvalidInputError("mean absolute returns must be finite and >= 0")
    if lambda_max <= 0:
        raise AllZeroIntensityError(
            "lambda_max is 0: all intensities vanish, skip the ambiguity penalty")
    if int(m) != m or m < 1:
        raise InvalidInputError(f"curvature m must be a positive integer, got {m}")
    return int(m) * mean_abs / float(lambda_max)
