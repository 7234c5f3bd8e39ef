"""Simulation, verification and backtesting lab for diversity-weighted and
functionally generated portfolios."""

from .analytics import (
    DecompositionReport,
    LocalTimeSeries,
    VerificationReport,
    excess_growth,
    fgp_drift,
    local_time,
    local_time_from_gap,
    master_decomposition,
    portfolio_log_wealth,
    relative_covariance,
    verify_relative_arbitrage,
    wealth_relative,
)
from .backtest import (
    BacktestConfig,
    Ledger,
    MarketDataSet,
    MetricsReport,
    load_market_data,
    metrics,
    run_backtest,
    tv_distance,
)
from .horizons import (
    HorizonBound,
    horizon_fkk_positive,
    horizon_prop2,
    horizon_prop3,
    horizon_prop4,
    horizon_thm1,
    lf_from_diversity,
)
from .market import (
    ConditionReport,
    MarketPath,
    MarketSpec,
    RankView,
    Regime,
    check_conditions,
    compute_weights,
    enforce_regime,
    iter_simulated_paths,
    rank_view,
    simulate_paths,
    subsample,
)
from .portfolios import (
    GeneratingFunctionValue,
    PortfolioSpec,
    beta_weights,
    dwp_generating_value,
    dwp_weights,
    equal_weights,
    fgp_weights,
    gamma_weights,
    large_rank_weights,
    mixed_weights,
    mixing_proportion,
    small_rank_weights,
)

__version__ = "0.1.0"
