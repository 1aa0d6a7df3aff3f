"""Command-line entry points.

Subcommands: synth, ingest, backtest, frontier, sweep, infer, dp-demo.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Config files (--config, TOML or JSON) mirror SolverConfig/BacktestConfig
field names in snake_case; explicit flags win over config values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import data as data_io
from .backtest import STRATEGIES, BacktestConfig, run_backtest
from .errors import EapoError, NumericalError
from .errors import AllZeroIntensityError
from .estimation import ledoit_wolf
from .frontier import (TinyDynamicSpec, bellman_tiny, pareto_sweep,
                       pareto_sweep_regularized, write_frontier_csv)
from .inference import block_bootstrap_sharpe, newey_west
from .penalty import (IntensityVector, PenaltyParams, emissions_adjusted_mean,
                      lipschitz_constants)
from .solver import SolverConfig, solve_robust_mv

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load_config(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
_BACKTEST_KEYS = {"strategy", "rebalance", "lookback", "cost_bps", "annualization",
                  "absorb_lipschitz"}


def _build_configs(args) -> BacktestConfig:
    raw = _load_config(args.config) if args.config else {}
    unknown = set(raw) - _SOLVER_KEYS - _BACKTEST_KEYS
    if unknown:
        raise _UsageError(f"unknown config keys: {sorted(unknown)}")
    solver_kwargs = {k: raw[k] for k in raw if k in _SOLVER_KEYS}
    if "p" in solver_kwargs and solver_kwargs["p"] == "inf":
        solver_kwargs["p"] = math.inf
    if args.seed is not None:
        solver_kwargs["seed"] = args.seed
    backtest_kwargs = {k: raw[k] for k in raw if k in _BACKTEST_KEYS}
    if getattr(args, "strategy", None) and args.strategy != "all":
        backtest_kwargs["strategy"] = args.strategy
    return BacktestConfig(solver=SolverConfig(**solver_kwargs), **backtest_kwargs)


def _prepare_dataset(args):
    raw = data_io.ingest(args.data)
    dataset = data_io.align_forward_carry(raw, scope=args.scope)
    seed = args.seed if args.seed is not None else 0
    intensity = data_io.complete_intensities(dataset, seed=seed,
                                             strict=getattr(args, "strict", False))
    return dataset, intensity


def _cmd_synth(args):
    records = data_io.synth_generate(
        n_assets=args.n, n_days=args.days, n_sectors=args.sectors,
        intensity_return_correlation=args.correlation,
        missing_rate=args.missing_rate, seed=args.seed or 0)
    out = Path(args.out)
    data_io.export_records(records, out)
    print(f"wrote synthetic dataset ({args.n} assets, {args.days} days) to {out}")
    return 0


def _cmd_ingest(args):
    records = data_io.ingest(args.data)
    print(f"ok: {len(records.prices)} price rows, {len(records.emissions)} emissions rows, "
          f"{len(records.revenues)} revenue rows, {len(records.sectors)} sectors")
    return 0


def _cmd_backtest(args):
    dataset, intensity = _prepare_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # "all" runs the headline comparison set; gmv_full stays opt-in
    strategies = (["ew", "gmv_invvar", "emw", "eapo"] if args.strategy == "all"
                  else [args.strategy])
    for strategy in strategies:
        cfg_args = argparse.Namespace(**vars(args))
        cfg_args.strategy = strategy
        cfg = _build_configs(cfg_args)
        report = run_backtest(dataset.returns, intensity, cfg,
                              emissions_levels=dataset.emission_levels)
        data_io.write_report_json(report, out / f"report_{strategy}.json",
                                  config={"strategy": strategy,
                                          "scope": args.scope,
                                          "seed": args.seed or 0,
                                          "solver": dataclasses.asdict(cfg.solver),
                                          "lookback": cfg.lookback,
                                          "cost_bps": cfg.cost_bps})
        data_io.write_weights_csv(report, out / f"weights_{strategy}.csv")
        print(f"{strategy}: sharpe={report.metrics['sharpe']:.3f} "
              f"avg_intensity={report.average_intensity:.3f}")
    return 0


def _estimation_snapshot(dataset, intensity, cfg: BacktestConfig):
    """Mean/covariance/intensity inputs from the last usable rebalance date."""
    returns = dataset.returns
    usable = [d for d in intensity.index
              if returns.index.get_indexer([d])[0] >= cfg.lookback]
    if not usable:
        raise EapoError("no rebalance date has enough history")
    date = usable[-1]
    pos = returns.index.get_loc(date)
    window = returns.values[pos - cfg.lookback: pos]
    lam_row = intensity.loc[date].to_numpy(dtype=float)
    valid = np.isfinite(lam_row)
    window = window[:, valid]
    lam = IntensityVector(values=lam_row[valid], scope=dataset.scope)
    params = PenaltyParams(m=cfg.solver.m, scope=dataset.scope)
    mu_e = emissions_adjusted_mean(window, lam, params)
    sigma = ledoit_wolf(window).sigma_hat
    try:
        lips = lipschitz_constants(np.abs(window).mean(axis=0), lam.lambda_max,
                                   cfg.solver.m)
    except AllZeroIntensityError:
        lips = np.zeros(window.shape[1])
    return mu_e, sigma, lam, lips


def _cmd_frontier(args):
    dataset, intensity = _prepare_dataset(args)
    cfg = _build_configs(args)
    mu_e, sigma, lam, _ = _estimation_snapshot(dataset, intensity, cfg)
    mu_grid = np.linspace(0.0, args.mu_max, args.points)
    if args.regularized:
        points = pareto_sweep_regularized(mu_e, sigma, None, cfg.solver,
                                          lam.values, mu_grid)
    else:
        points = pareto_sweep(mu_e, lam, mu_grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_frontier_csv(points, out / "frontier.csv")
    print(f"wrote {len(points)} frontier points to {out / 'frontier.csv'}")
    return 0


def _parse_grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _UsageError(f"could not parse grid {text!r}") from None


def _cmd_sweep(args):
    dataset, intensity = _prepare_dataset(args)
    cfg = _build_configs(args)
    mu_e_base_cfg = cfg
    gammas = _parse_grid(args.gammas)
    thetas = _parse_grid(args.thetas)
    ms = [int(v) for v in _parse_grid(args.ms)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for m in ms:
        solver_m = dataclasses.replace(mu_e_base_cfg.solver, m=m)
        cfg_m = dataclasses.replace(mu_e_base_cfg, solver=solver_m)
        mu_e, sigma, lam, _ = _estimation_snapshot(dataset, intensity, cfg_m)
        for theta in thetas:
            warm = None
            for gamma in gammas:
                scfg = dataclasses.replace(solver_m, gamma=gamma, theta=theta)
                x, diag = solve_robust_mv(mu_e, sigma, None, scfg, warm_start=warm)
                warm = x
                rows.append((gamma, theta, m, diag.objective_value,
                             float(np.linalg.norm(x))))
    with open(out / "sweep.csv", "w") as fh:
        fh.write("gamma,theta,m,objective,weight_l2_norm\n")
        for row in rows:
            fh.write(",".join(repr(v) for v in row) + "\n")
    print(f"wrote {len(rows)} sweep rows to {out / 'sweep.csv'}")
    return 0


def _cmd_infer(args):
    series_a = data_io.load_report_returns(args.report_a)
    series_b = data_io.load_report_returns(args.report_b)
    if not series_a.index.equals(series_b.index):
        raise EapoError("report calendars are not aligned")
    delta = series_a.values - series_b.values
    hac = newey_west(delta, bandwidth=args.bandwidth)
    boot = block_bootstrap_sharpe(series_a.values, series_b.values,
                                  block_length=args.block_length,
                                  replications=args.replications,
                                  seed=args.seed or 0)
    def finite(v):
        return v if isinstance(v, (int, str)) or np.isfinite(v) else None

    payload = {
        "pair": [str(series_a.name), str(series_b.name)],
        "hac": {"mean_diff": finite(hac.mean_diff), "se": finite(hac.standard_error_of_mean),
                "t": finite(hac.t_stat), "bandwidth": hac.bandwidth},
        "bootstrap": {"sharpe_a": finite(boot.sharpe_a), "sharpe_b": finite(boot.sharpe_b),
                      "diff": finite(boot.diff),
                      "ci": [finite(boot.ci_low), finite(boot.ci_high)],
                      "replications": boot.replications,
                      "block_length": boot.block_length},
    }
    text = json.dumps(payload, sort_keys=True, indent=1)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "inference.json").write_text(text + "\n")
    print(text)
    return 0


def _cmd_dp_demo(args):
    rng = np.random.default_rng(args.seed or 0)
    spec = TinyDynamicSpec(
        horizon=2, n_assets=2,
        gammas=[rng.uniform(0.8, 1.2, size=2) for _ in range(3)],
        deltas=[rng.uniform(-0.1, 0.1, size=(2, 2)) for _ in range(3)],
        shocks=[rng.uniform(-1.0, 1.0, size=(2, 2)) for _ in range(3)],
        discount=0.95, grid_step=0.1)
    value = bellman_tiny(spec)
    print(f"tiny robust DP value V0 = {value!r}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="eapo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=True):
        if needs_data:
            p.add_argument("--data", required=True, help="directory with the four CSVs")
            p.add_argument("--scope", type=int, choices=(1, 2, 3), default=1)
            p.add_argument("--strict", action="store_true",
                           help="exclude assets with missing intensities instead of imputing")
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--days", type=int, default=750)
    p.add_argument("--sectors", type=int, default=5)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--correlation", type=float, default=0.0)
    common(p, needs_data=False)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="validate a dataset directory")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("backtest", help="run one strategy (or all) and export reports")
    p.add_argument("--strategy", default="eapo", choices=list(STRATEGIES) + ["all"])
    common(p)
    p.set_defaults(func=_cmd_backtest)

    p = sub.add_parser("frontier", help="mu sweep of the return-emissions frontier")
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--mu-max", type=float, default=0.01)
    p.add_argument("--regularized", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_frontier)

    p = sub.add_parser("sweep", help="objective values over Gamma/theta/m grids")
    p.add_argument("--gammas", default="0.0,0.5,1.0,2.0,3.5")
    p.add_argument("--thetas", default="0.5")
    p.add_argument("--ms", default="1,10")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("infer", help="HAC + bootstrap comparison of two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--bandwidth", type=int, default=20)
    p.add_argument("--block-length", type=int, default=20)
    p.add_argument("--replications", type=int, default=2000)
    common(p, needs_data=False)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("dp-demo", help="solve a seeded tiny robust DP")
    common(p, needs_data=False)
    p.set_defaults(func=_cmd_dp_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (EapoError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
