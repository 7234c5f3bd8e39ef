"""Command-line entry point.

Subcommands: simulate, thresholds, verify, backtest, sweep, report.  Every
run writes its artifacts under <outdir>/<command>_<confighash>/ so reruns of
the same configuration land in the same place with identical bytes.  The
SPT_LAB_OUT environment variable overrides the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analytics, horizons
from .backtest import load_market_data, run_backtest
from .config import (
    RunConfig,
    build_backtest_config,
    build_market_spec,
    build_portfolio_spec,
    config_hash,
    load_config,
    portfolio_to_config,
    serialize_config,
)
from .errors import ConfigError, DataError, SptError
from .market import export_path_csv, iter_simulated_paths, simulate_paths
from .portfolios import PortfolioSpec

COMMANDS = ("simulate", "thresholds", "verify", "backtest", "sweep", "report")
USAGE = "usage: spt-lab {simulate|thresholds|verify|backtest|sweep|report} [options]"

_SWEEPABLE = {"tv": ("backtest", "tv_threshold"), "cost": ("backtest", "cost_rate")}
for _k in ("p", "r", "m", "p_plus", "p_minus", "k", "theta", "alpha", "beta"):
    _SWEEPABLE[_k] = ("portfolio", _k)


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _ArgError(message)


def _outdir(cfg: RunConfig, flag_out: str | None) -> Path:
    env = os.environ.get("SPT_LAB_OUT")
    if env:
        return Path(env)
    if flag_out:
        return Path(flag_out)
    return Path(cfg.get("output", "dir", "spt_out"))


def _run_dir(cfg: RunConfig, command: str, flag_out: str | None) -> Path:
    d = _outdir(cfg, flag_out) / f"{command}_{config_hash(cfg, command)}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_cfg(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _portfolio_overrides(cfg: RunConfig, args) -> None:
    if getattr(args, "family", None):
        cfg.sections["portfolio"] = {}
        cfg.set_value("portfolio", "family", args.family)
    for key in ("p", "r", "m", "p_plus", "p_minus", "k", "theta", "alpha", "beta"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.set_value("portfolio", key, val)


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------


def _format_bound(name: str, hb: horizons.HorizonBound) -> str:
    rng = ""
    if hb.parameter_range is not None:
        rng = f" range=({hb.parameter_range[0]:.6f}, {hb.parameter_range[1]:.6f})"
    extra = f" [{hb.reason}]" if hb.reason else ""
    return f"{name}: threshold_T = {hb.threshold_T:.4f} valid={hb.valid}{rng}{extra}"


def cmd_thresholds(args, cfg: RunConfig) -> int:
    if args.n is None or args.eps is None:
        raise ConfigError("thresholds requires --n and --eps")
    results: dict[str, horizons.HorizonBound] = {}
    if args.phi is not None and args.p is not None:
        results["thm1"] = horizons.horizon_thm1(args.n, args.phi, args.eps, args.p)
    if args.delta is not None and args.p is not None:
        results["fkk_positive"] = horizons.horizon_fkk_positive(args.n, args.eps, args.delta, args.p)
    if args.r is not None and args.m is not None:
        if args.phi is not None:
            results["prop2_small_stock_neg"] = horizons.horizon_prop2(
                "small_stock_neg", args.n, args.m, args.phi, args.eps, args.r
            )
        if args.kappa is not None:
            results["prop2_small_stock_pos"] = horizons.horizon_prop2(
                "small_stock_pos", args.n, args.m, args.kappa, args.eps, args.r
            )
    if (
        args.phi is not None
        and args.K is not None
        and args.p_plus is not None
        and args.p_minus is not None
    ):
        results["prop3"] = horizons.horizon_prop3(
            args.n, args.phi, args.eps, args.K, args.p_plus, args.p_minus
        )
    if args.delta is not None and args.p_plus is not None and args.p_minus is not None:
        results["prop4"] = horizons.horizon_prop4(
            args.n, args.delta, args.eps, args.p_plus, args.p_minus
        )
    if not results:
        raise ConfigError("no calculator matches the provided flags")
    for name, hb in results.items():
        print(_format_bound(name, hb))
    for key, val in vars(args).items():
        if key in ("config", "out") or val is None:
            continue
        cfg.set_value("sweep", f"thresholds_{key}", val)
    run_dir = _run_dir(cfg, "thresholds", args.out)
    _write_json(
        run_dir / "thresholds.json",
        {name: json.loads(hb.to_json()) for name, hb in results.items()},
    )
    return 0


# ---------------------------------------------------------------------------
# simulate / verify
# ---------------------------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig) -> int:
    if args.paths is not None:
        cfg.set_value("verify", "n_paths", args.paths)
    if args.seed is not None:
        cfg.set_value("verify", "seed", args.seed)
    spec = build_market_spec(cfg)
    n_paths = int(cfg.get("verify", "n_paths", "1"))
    seed = int(cfg.get("verify", "seed", "0"))
    run_dir = _run_dir(cfg, "simulate", args.out)
    paths = simulate_paths(spec, n_paths, seed)
    for path in paths:
        tag = f"{path.path_index:04d}"
        export_path_csv(path, str(run_dir / f"path_{tag}.csv"), str(run_dir / f"cov_{tag}.csv"))
    _write_json(
        run_dir / "run.json",
        {"command": "simulate", "n_paths": n_paths, "seed": seed, "config": serialize_config(cfg)},
    )
    print(f"simulate: wrote {n_paths} path(s) to {run_dir}")
    return 0


def cmd_verify(args, cfg: RunConfig) -> int:
    if args.paths is not None:
        cfg.set_value("verify", "n_paths", args.paths)
    if args.seed is not None:
        cfg.set_value("verify", "seed", args.seed)
    if args.t is not None:
        cfg.set_value("verify", "t_horizon", args.t)
    _portfolio_overrides(cfg, args)
    spec = build_market_spec(cfg)
    portfolio = build_portfolio_spec(cfg)
    n_paths = int(cfg.get("verify", "n_paths", "100"))
    seed = int(cfg.get("verify", "seed", "0"))
    horizon = float(cfg.get("verify", "t_horizon", str(spec.horizon)))
    nominal_phi = cfg.get("market", "phi")
    report = analytics.verify_relative_arbitrage(
        iter_simulated_paths(spec, n_paths, seed),
        portfolio,
        horizon,
        phi=float(nominal_phi) if nominal_phi is not None else None,
    )
    run_dir = _run_dir(cfg, "verify", args.out)
    (run_dir / "verification.json").write_text(report.to_json() + "\n")
    print(
        f"verify: {portfolio.label()} outperformed on "
        f"{report.fraction_outperforming:.2%} of {report.n_paths} paths; "
        f"min log relative wealth {report.min_log_rel_wealth:.6f}"
    )
    if report.note:
        print(f"verify: note: {report.note}")
    return 0


# ---------------------------------------------------------------------------
# backtest / sweep / report
# ---------------------------------------------------------------------------


def _run_backtest_cell(cfg: RunConfig, run_dir: Path) -> dict:
    data_file = cfg.get("backtest", "data")
    if not data_file:
        raise ConfigError("backtest requires --data or [backtest] data")
    data = load_market_data(data_file)
    portfolio = build_portfolio_spec(cfg)
    bt_cfg = build_backtest_config(cfg, portfolio)
    years_raw = cfg.get("backtest", "years")
    ledger, report = run_backtest(data, bt_cfg, years=float(years_raw) if years_raw else None)
    ledger.to_csv(str(run_dir / "ledger.csv"))
    (run_dir / "metrics.json").write_text(report.to_json() + "\n")
    meta = {
        "command": "backtest",
        "label": portfolio.label(),
        "data": data_file,
        "tv_threshold": bt_cfg.tv_threshold,
        "cost_rate": bt_cfg.cost_rate,
        "final_wealth": float(ledger.wealth[-1]),
        "terminated_early": ledger.terminated_early,
    }
    _write_json(run_dir / "run.json", meta)
    return meta


def cmd_backtest(args, cfg: RunConfig) -> int:
    _portfolio_overrides(cfg, args)
    if args.data:
        cfg.set_value("backtest", "data", args.data)
    if args.tv is not None:
        cfg.set_value("backtest", "tv_threshold", args.tv)
    if args.cost is not None:
        cfg.set_value("backtest", "cost_rate", args.cost)
    if args.years is not None:
        cfg.set_value("backtest", "years", args.years)
    run_dir = _run_dir(cfg, "backtest", args.out)
    meta = _run_backtest_cell(cfg, run_dir)
    print(
        f"backtest: {meta['label']} final wealth {meta['final_wealth']:.6f}; "
        f"artifacts in {run_dir}"
    )
    return 0


def _parse_grid(grid_args: list[str]) -> list[tuple[str, list[str]]]:
    grids = []
    for item in grid_args:
        if "=" not in item:
            raise ConfigError(f"bad --grid {item!r}; expected key=v1,v2,...")
        key, _, vals = item.partition("=")
        key = key.strip()
        if key not in _SWEEPABLE:
            raise ConfigError(f"cannot sweep {key!r}; choose from {sorted(_SWEEPABLE)}")
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"--grid {key} has no values")
        grids.append((key, values))
    return grids


def cmd_sweep(args, cfg: RunConfig) -> int:
    _portfolio_overrides(cfg, args)
    if args.data:
        cfg.set_value("backtest", "data", args.data)
    if args.cost is not None:
        cfg.set_value("backtest", "cost_rate", args.cost)
    grids = _parse_grid(args.grid or [])
    if not grids:
        raise ConfigError("sweep requires at least one --grid key=v1,v2,...")
    for key, values in grids:
        cfg.set_value("sweep", key, ",".join(values))
    run_dir = _run_dir(cfg, "sweep", args.out)

    cells = [[]]
    for key, values in grids:
        cells = [prev + [(key, v)] for prev in cells for v in values]

    index_rows = []
    for i, assignment in enumerate(cells):
        cell_cfg = RunConfig(sections={k: dict(v) for k, v in cfg.sections.items()})
        cell_cfg.sections.pop("sweep", None)
        name_parts = []
        for key, val in assignment:
            section, option = _SWEEPABLE[key]
            cell_cfg.set_value(section, option, val)
            name_parts.append(f"{key}={val}")
        cell_dir = run_dir / f"cell_{i:03d}__{'__'.join(name_parts)}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        meta = _run_backtest_cell(cell_cfg, cell_dir)
        metrics = json.loads((cell_dir / "metrics.json").read_text())
        index_rows.append(
            [cell_dir.name]
            + [val for _, val in assignment]
            + [repr(meta["final_wealth"]), repr(metrics["market_rr"]), repr(metrics["sharpe"])]
        )
    with open(run_dir / "index.csv", "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["cell"] + [key for key, _ in grids] + ["final_wealth", "market_rr", "sharpe"])
        out.writerows(index_rows)
    print(f"sweep: ran {len(cells)} cell(s); index at {run_dir / 'index.csv'}")
    return 0


def emit_plot_data(results: list[tuple[str, list[str], list[float]]], path: str) -> None:
    """Write wealth curves as long-format CSV: series,date,value."""
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["series", "date", "value"])
        for label, dates, values in sorted(results, key=lambda r: r[0]):
            for d, v in zip(dates, values):
                out.writerow([label, d, repr(float(v))])


def cmd_report(args, cfg: RunConfig) -> int:
    root = _outdir(cfg, args.out)
    results = []
    if root.exists():
        for run_json in sorted(root.glob("**/run.json")):
            meta = json.loads(run_json.read_text())
            ledger_file = run_json.parent / "ledger.csv"
            if "label" not in meta or not ledger_file.exists():
                continue
            dates, values = [], []
            with open(ledger_file, newline="") as f:
                reader = csv.DictReader(f)
                for row in reader:
                    dates.append(row["date"])
                    values.append(float(row["wealth"]))
            results.append((meta["label"], dates, values))
    run_dir = _run_dir(cfg, "report", args.out)
    out_file = run_dir / "plot_data.csv"
    emit_plot_data(results, str(out_file))
    print(f"report: wrote {len(results)} series to {out_file}")
    return 0


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="spt-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help="output directory (SPT_LAB_OUT overrides)")

    p = sub.add_parser("thresholds", help="evaluate outperformance horizon thresholds")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--p-plus", dest="p_plus", type=float)
    p.add_argument("--p-minus", dest="p_minus", type=float)

    p = sub.add_parser("simulate", help="simulate market paths and export them as CSV")
    common(p)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("verify", help="Monte-Carlo outperformance verification")
    common(p)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t", type=float, help="verification horizon (defaults to market horizon)")
    _add_portfolio_flags(p)

    p = sub.add_parser("backtest", help="run the daily rebalancing backtest")
    common(p)
    p.add_argument("--data", help="market data CSV")
    p.add_argument("--tv", type=float, help="rebalancing threshold")
    p.add_argument("--cost", type=float, help="proportional cost rate")
    p.add_argument("--years", type=float)
    _add_portfolio_flags(p)

    p = sub.add_parser("sweep", help="grid of backtests; one metrics file per cell")
    common(p)
    p.add_argument("--data")
    p.add_argument("--cost", type=float)
    p.add_argument("--grid", action="append", help="key=v1,v2,... (repeatable)")
    _add_portfolio_flags(p)

    p = sub.add_parser("report", help="collect wealth curves into plot data")
    common(p)
    return parser


def _add_portfolio_flags(p) -> None:
    p.add_argument("--family")
    p.add_argument("--p", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--p-plus", dest="p_plus", type=float)
    p.add_argument("--p-minus", dest="p_minus", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)


_HANDLERS = {
    "thresholds": cmd_thresholds,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "backtest": cmd_backtest,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def dispatch(argv: list[str]) -> int:
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 1
    if argv[0] not in COMMANDS:
        print(USAGE, file=sys.stderr)
        print(f"error: unknown command {argv[0]!r}", file=sys.stderr)
        return 1
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_cfg(args)
        return _HANDLERS[args.command](args, cfg)
    except (_ArgError, ConfigError, DataError) as exc:
        print(USAGE, file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SptError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
