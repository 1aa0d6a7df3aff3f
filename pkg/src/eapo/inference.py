"""HAC inference on return differentials and block-bootstrap Sharpe tests.

Newey-West uses 1/T-normalized autocovariances with Bartlett weights
1 - l/(L+1). The standard error of the mean divides the long-run variance
by T (the raw long-run standard deviation is also exposed). The bootstrap
resamples paired daily returns in circular blocks so short-range dependence
survives resampling; Sharpe ratios are annualized with sqrt(252) to match
the backtest metrics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, InvalidInputError

__all__ = [
    "HacResult",
    "BootstrapResult",
    "newey_west",
    "block_bootstrap_sharpe",
    "pairwise_return_tests",
]


@dataclass(frozen=True)
class HacResult:
    mean_diff: float
    long_run_variance: float
    standard_error_of_mean: float
    t_stat: float
    bandwidth: int

    @property
    def raw_long_run_se(self) -> float:
        """sqrt of the long-run variance without the 1/T of the mean."""
        return math.sqrt(self.long_run_variance)


@dataclass(frozen=True)
class BootstrapResult:
    sharpe_a: float
    sharpe_b: float
    diff: float
    ci_low: float
    ci_high: float
    replications: int
    block_length: int


def newey_west(delta: np.ndarray, bandwidth: int) -> HacResult:
    """Newey-West test of a zero mean for a (possibly autocorrelated) series.

    gamma_l = (1/T) sum_{t>l} (d_t - dbar)(d_{t-l} - dbar);
    LRV = gamma_0 + 2 * sum_l (1 - l/(L+1)) gamma_l, floored at zero;
    se = sqrt(LRV / T); t = dbar / se (NaN for a constant series).
    """
    d = np.asarray(delta, dtype=float).ravel()
    if bandwidth < 0:
        raise InvalidInputError(f"bandwidth must be >= 0, got {bandwidth}")
    t_len = d.size
    if t_len <= bandwidth:
        raise InvalidInputError(f"series length {t_len} must exceed bandwidth {bandwidth}")
    if not np.all(np.isfinite(d)):
        raise InvalidInputError("series must be finite")
    if np.ptp(d) == 0.0:
        # exactly constant: zero variance by definition, not rounding residue
        return HacResult(mean_diff=float(d[0]), long_run_variance=0.0,
                         standard_error_of_mean=0.0, t_stat=float("nan"),
                         bandwidth=bandwidth)
    centered = d - d.mean()
    gamma0 = float(centered @ centered) / t_len
    lrv = gamma0
    for lag in range(1, bandwidth + 1):
        gamma_l = float(centered[lag:] @ centered[:-lag]) / t_len
        lrv += 2.0 * (1.0 - lag / (bandwidth + 1.0)) * gamma_l
    if lrv < 0.0:
        warnings.warn("negative long-run variance floored at 0", RuntimeWarning)
        lrv = 0.0
    se = math.sqrt(lrv / t_len)
    mean = float(d.mean())
    t_stat = mean / se if se > 0 else float("nan")
    return HacResult(mean_diff=mean, long_run_variance=lrv,
                     standard_error_of_mean=se, t_stat=t_stat, bandwidth=bandwidth)


def _annualized_sharpe(r: np.ndarray, annualization: int = 252) -> float:
    sd = r.std(ddof=1)
    if sd == 0.0:
        return float("nan")
    return float(r.mean() / sd * math.sqrt(annualization))


def block_bootstrap_sharpe(returns_a: np.ndarray, returns_b: np.ndarray,
                           block_length: int = 20, replications: int = 2000,
                           seed: int = 0, annualization: int = 252) -> BootstrapResult:
    """Circular block bootstrap CI for the Sharpe difference A minus B.

    Blocks are cut at the same indices in both series to preserve pairing.
    Replication j draws from its own ``seed + j`` stream, so results are
    reproducible and order-independent. Zero-volatility replications are
    redrawn (total budget 10x the replication count).
    """
    a = np.asarray(returns_a, dtype=float).ravel()
    b = np.asarray(returns_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InvalidInputError("paired series must have equal length")
    t_len = a.size
    if t_len < block_length:
        raise InvalidInputError(f"need at least block_length={block_length} observations")
    if replications < 1:
        raise InvalidInputError("need at least one replication")
    n_blocks = math.ceil(t_len / block_length)
    offsets = np.arange(block_length)
    redraw_budget = 10 * replications
    diffs = np.empty(replications)
    for j in range(replications):
        rng = np.random.default_rng(seed + j)
        while True:
            starts = rng.integers(0, t_len, size=n_blocks)
            idx = ((starts[:, None] + offsets[None, :]) % t_len).ravel()[:t_len]
            sa, sb = a[idx], b[idx]
            if sa.std(ddof=1) > 0 and sb.std(ddof=1) > 0:
                diffs[j] = (_annualized_sharpe(sa, annualization)
                            - _annualized_sharpe(sb, annualization))
                break
            redraw_budget -= 1
            if redraw_budget <= 0:
                raise InvalidInputError(
                    "too many zero-volatility replications; series look degenerate")
    lo, hi = np.percentile(diffs, [2.5, 97.5])
    sharpe_a = _annualized_sharpe(a, annualization)
    sharpe_b = _annualized_sharpe(b, annualization)
    return BootstrapResult(sharpe_a=sharpe_a, sharpe_b=sharpe_b,
                           diff=float(sharpe_a - sharpe_b),
                           ci_low=float(lo), ci_high=float(hi),
                           replications=replications, block_length=block_length)


def pairwise_return_tests(reports: Sequence, bandwidth: int = 20
                          ) -> Dict[Tuple[str, str], HacResult]:
    """HAC tests on net-return differentials for every ordered strategy pair.

    ``reports`` are BacktestReports (or anything with ``strategy`` and
    ``net_returns``); calendars must coincide exactly.
    """
    if len(reports) < 2:
        raise InvalidInputError("need at least two reports to compare")
    base_index = reports[0].net_returns.index
    for rep in reports[1:]:
        if not base_index.equals(rep.net_returns.index):
            raise AlignmentError(
                f"calendar of {rep.strategy!r} does not match {reports[0].strategy!r}")
    out: Dict[Tuple[str, str], HacResult] = {}
    for rep_a in reports:
        for rep_b in reports:
            delta = rep_a.net_returns.values - rep_b.net_returns.values
            out[(rep_a.strategy, rep_b.strategy)] = newey_west(delta, bandwidth)
    return out
