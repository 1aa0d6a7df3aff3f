"""Emissions-aware robust portfolio optimization (EAPO).

A library and CLI for long-only portfolio construction with an axiomatized
emissions penalty on expected returns, norm-based ambiguity sets over
disclosed intensities, robust mean-variance/CVaR solvers on the simplex,
phi-divergence DRO duals, a rolling monthly backtest engine with benchmark
strategies, and HAC/block-bootstrap inference.
"""

from .ambiguity import AmbiguityBall, EllipseStats, dual_norm_penalty, ellipse_stats
from .backtest import (BacktestConfig, BacktestReport, performance_metrics,
                       run_backtest, weights_emw, weights_ew, weights_gmv)
from .estimation import ImputationDraws, ShrinkageResult, impute_emissions, ledoit_wolf
from .frontier import FrontierPoint, TinyDynamicSpec, bellman_tiny, pareto_sweep
from .inference import (BootstrapResult, HacResult, block_bootstrap_sharpe,
                        newey_west, pairwise_return_tests)
from .penalty import (IntensityVector, PenaltyParams, adjust_returns,
                      emissions_adjusted_mean, lipschitz_constants, penalty)
from .risk import DivergenceBall, ScenarioSet, cvar_empirical, dro_dual_value
from .solver import (SolveDiagnostics, SolverConfig, brute_force_oracle, objective,
                     project_simplex, project_turnover, shadow_price, solve_robust_mv)

__version__ = "0.1.0"
