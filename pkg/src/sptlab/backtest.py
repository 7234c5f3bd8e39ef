"""Daily backtest of a weight rule on tabular market data.

Protocol: positions drift with total-return factors; the book is traded back
to the rule's target only when the drifted weights' weighted L1 distance to
the target exceeds a threshold (or delisting proceeds are waiting in cash),
paying proportional costs on the absolute value traded.

Conventions, fixed for auditability:
  * total_return_factor reinvests distributions in the paying asset;
  * delisting proceeds convert to cash at the delisting-day factor and are
    deployed at the next trade, which that cash itself forces;
  * the day-one deployment into the initial target is free of charge;
  * costs are charged against wealth after trading to target weights sized
    on pre-cost wealth (charge-then-hold).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .portfolios import PortfolioSpec

TRADING_DAYS_PER_YEAR = 252


@dataclass(eq=False)
class MarketDataSet:
    """Daily capitalizations and total-return factors on a (date, asset) grid.

    caps and factors are (n_dates, n_assets) with NaN where the asset is not
    listed; listed marks active rows, and delist_day[a] is the index of the
    asset's final day (-1 when it survives to the end of the sample).
    """

    dates: list[str]
    assets: list[str]
    caps: np.ndarray
    factors: np.ndarray
    listed: np.ndarray
    delist_day: np.ndarray

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.assets)


def load_market_data(path: str) -> MarketDataSet:
    """Read and validate the backtest CSV.

    Schema: header date,asset_id,cap,total_return_factor,delisted; ISO dates;
    delisted is 0/1 and may be 1 only on an asset's final row; an asset's
    rows must be date-contiguous (no gaps while listed, no relisting).
    """
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["date", "asset_id", "cap", "total_return_factor", "delisted"]:
            raise DataError(f"{path}: bad or missing header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            date, asset, cap_s, factor_s, delisted_s = row
            try:
                cap = float(cap_s)
                factor = float(factor_s)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cap or factor") from exc
            if cap <= 0:
                raise DataError(f"{path}:{lineno}: non-positive cap {cap}")
            if factor <= 0:
                raise DataError(f"{path}:{lineno}: non-positive total_return_factor")
            if delisted_s not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: delisted must be 0 or 1")
            rows.append((date, asset, cap, factor, delisted_s == "1", lineno))

    if not rows:
        raise DataError(f"{path}: no data rows")
    dates = sorted({r[0] for r in rows})
    assets = sorted({r[1] for r in rows})
    d_index = {d: i for i, d in enumerate(dates)}
    a_index = {a: i for i, a in enumerate(assets)}
    nd, na = len(dates), len(assets)
    caps = np.full((nd, na), np.nan)
    factors = np.full((nd, na), np.nan)
    listed = np.zeros((nd, na), dtype=bool)
    delisted = np.zeros((nd, na), dtype=bool)
    for date, asset, cap, factor, dl, lineno in rows:
        t, a = d_index[date], a_index[asset]
        if listed[t, a]:
            raise DataError(f"{path}:{lineno}: duplicate row for ({date}, {asset})")
        caps[t, a] = cap
        factors[t, a] = factor
        listed[t, a] = True
        delisted[t, a] = dl

    delist_day = np.full(na, -1, dtype=int)
    for a, name in enumerate(assets):
        days = np.nonzero(listed[:, a])[0]
        first, last = days[0], days[-1]
        if days.shape[0] != last - first + 1:
            raise DataError(f"{path}: asset {name} has a gap while listed")
        flagged = np.nonzero(delisted[:, a])[0]
        if flagged.size > 1 or (flagged.size == 1 and flagged[0] != last):
            raise DataError(f"{path}: asset {name} marked delisted before its final row")
        if flagged.size == 1:
            delist_day[a] = last
        elif last != nd - 1:
            raise DataError(f"{path}: asset {name} disappears at {dates[last]} without delisting")
    return MarketDataSet(
        dates=dates, assets=assets, caps=caps, factors=factors, listed=listed, delist_day=delist_day
    )


@dataclass(frozen=True)
class BacktestConfig:
    """Rebalancing threshold, proportional cost rate, and the traded rule."""

    portfolio: PortfolioSpec
    tv_threshold: float = 0.0
    cost_rate: float = 0.005
    initial_wealth: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.cost_rate < 1.0:
            raise ConfigError("cost_rate must lie in [0, 1)")
        if self.tv_threshold < 0.0:
            raise ConfigError("tv_threshold must be non-negative")
        if self.initial_wealth <= 0.0:
            raise ConfigError("initial_wealth must be positive")


def tv_distance(drifted: np.ndarray, target: np.ndarray) -> float:
    """Weighted L1 rebalancing distance sum_i drifted_i |drifted_i - target_i|.

    Weighting by the drifted vector makes this asymmetric in general.
    """
    drifted = np.asarray(drifted, float)
    target = np.asarray(target, float)
    if drifted.shape != target.shape:
        raise DomainError("weight vectors must share a support")
    return float(np.sum(drifted * np.abs(drifted - target)))


@dataclass(eq=False)
class Ledger:
    """Daily audit trail of one backtest run.

    wealth is post-cost; turnover is the absolute currency traded that day
    (zero on hold days); costs_paid is cumulative.
    """

    dates: list[str]
    wealth: np.ndarray
    implemented_weights: np.ndarray
    drifted_weights: np.ndarray
    turnover: np.ndarray
    costs_paid: np.ndarray
    terminated_early: bool = False

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(["date", "wealth", "turnover", "costs_paid"])
            for i, d in enumerate(self.dates):
                out.writerow(
                    [d, repr(float(self.wealth[i])), repr(float(self.turnover[i])), repr(float(self.costs_paid[i]))]
                )


@dataclass
class MetricsReport:
    """Performance summary: market-relative return (percent per year),
    Sharpe ratio, total growth rate, its risk-normalized version, and the
    daily return standard deviation."""

    market_rr: float
    sharpe: float | None
    gamma_total: float
    gamma_tilde: float | None
    stddev_daily: float
    undefined: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _target_weights(data: MarketDataSet, portfolio: PortfolioSpec, t: int, eligible: np.ndarray) -> np.ndarray:
    mu = data.caps[t, eligible]
    mu = mu / mu.sum()
    full = np.zeros(data.n_assets)
    full[eligible] = portfolio.weights(mu)
    return full


def run_backtest(
    data: MarketDataSet, config: BacktestConfig, years: float | None = None
) -> tuple[Ledger, MetricsReport]:
    """Run the day loop and report metrics against a cost-free market ledger.

    years defaults to (number of return days) / 252.
    """
    if data.n_dates < 2:
        raise DataError("backtest needs at least two days of data")
    ledger = _run_ledger(data, config)
    market_cfg = BacktestConfig(
        portfolio=PortfolioSpec.market(), tv_threshold=0.0, cost_rate=0.0, initial_wealth=1.0
    )
    market_ledger = _run_ledger(data, market_cfg)
    n_days = len(ledger.dates)
    if years is None:
        years = max(n_days - 1, 1) / TRADING_DAYS_PER_YEAR
    report = metrics(ledger, market_ledger, years)
    return ledger, report


def _run_ledger(data: MarketDataSet, config: BacktestConfig) -> Ledger:
    nd, na = data.n_dates, data.n_assets
    wealth = np.empty(nd)
    turnover = np.zeros(nd)
    costs = np.zeros(nd)
    impl = np.zeros((nd, na))
    drift_w = np.zeros((nd, na))

    eligible0 = data.listed[0] & (data.delist_day != 0)
    if not eligible0.any():
        raise DataError("no investable assets on the first day")
    target = _target_weights(data, config.portfolio, 0, eligible0)
    wealth[0] = config.initial_wealth
    impl[0] = target
    drift_w[0] = target
    cash = 0.0
    total_costs = 0.0
    terminated = False
    last_day = nd - 1

    for t in range(1, nd):
        prev = impl[t - 1]
        growth = np.where(prev > 0, data.factors[t], 1.0)
        if np.any(prev > 0) and not np.all(np.isfinite(growth[prev > 0])):
            bad = data.assets[int(np.nonzero((prev > 0) & ~np.isfinite(growth))[0][0])]
            raise DataError(f"held asset {bad} has no data on {data.dates[t]}")
        port_gross = float((prev * growth).sum() + cash)
        v_pre = wealth[t - 1] * port_gross
        drifted = prev * growth / port_gross
        cash = cash / port_gross

        delisting = data.listed[t] & (data.delist_day == t)
        if delisting.any():
            cash += float(drifted[delisting].sum())
            drifted[delisting] = 0.0

        drift_w[t] = drifted
        eligible = data.listed[t] & ~delisting
        if not eligible.any():
            wealth[t] = v_pre
            impl[t] = drifted
            costs[t] = total_costs
            terminated = True
            last_day = t
            break

        target = _target_weights(data, config.portfolio, t, eligible)
        tv = float(np.sum(drifted * np.abs(drifted - target)))
        if tv > config.tv_threshold or cash > 0.0:
            traded = float(np.abs(target - drifted).sum()) * v_pre
            cost = config.cost_rate * traded
            wealth[t] = v_pre - cost
            impl[t] = target
            turnover[t] = traded
            total_costs += cost
            cash = 0.0
        else:
            wealth[t] = v_pre
            impl[t] = drifted
        costs[t] = total_costs

    end = last_day + 1
    return Ledger(
        dates=data.dates[:end],
        wealth=wealth[:end],
        implemented_weights=impl[:end],
        drifted_weights=drift_w[:end],
        turnover=turnover[:end],
        costs_paid=costs[:end],
        terminated_early=terminated,
    )


def metrics(ledger: Ledger, market_ledger: Ledger, years: float) -> MetricsReport:
    """Performance metrics from daily returns R(t) = V(t)/V(t-1) - 1.

    sharpe = mean(R)/std(R) * sqrt(T/years), gamma_total = log(V(T)/V(1)),
    gamma_tilde = gamma_total / (std(R) * years), and market_rr is the
    annualized mean daily return in excess of the market ledger, in percent
    per year (252 trading days).  Degenerate zero-variance runs are flagged
    undefined rather than forced.
    """
    if years <= 0:
        raise DomainError("years must be positive")
    if len(ledger.wealth) < 2 or len(market_ledger.wealth) < 2:
        raise DomainError("metrics need at least two wealth points")
    r = np.diff(ledger.wealth) / ledger.wealth[:-1]
    r_mkt = np.diff(market_ledger.wealth) / market_ledger.wealth[:-1]
    n = r.shape[0]
    gamma_total = float(math.log(ledger.wealth[-1] / ledger.wealth[0]))
    mean = float(r.mean())
    std = float(r.std(ddof=1)) if n >= 2 else 0.0
    market_rr = 100.0 * TRADING_DAYS_PER_YEAR * (mean - float(r_mkt.mean()))
    if std == 0.0:
        return MetricsReport(
            market_rr=market_rr,
            sharpe=None,
            gamma_total=gamma_total,
            gamma_tilde=None,
            stddev_daily=0.0,
            undefined=True,
        )
    return MetricsReport(
        market_rr=market_rr,
        sharpe=mean / std * math.sqrt(n / years),
        gamma_total=gamma_total,
        gamma_tilde=gamma_total / (std * years),
        stddev_daily=std,
    )
