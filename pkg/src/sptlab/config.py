"""Flat `key = value` run configuration: parsing, serialization, builders.

A config file holds INI-style sections (market, portfolio, backtest, verify,
sweep, output) whose keys mirror the corresponding spec objects.  Values stay
raw strings until a builder turns a section into a typed object; command-line
flags override file values before building.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .backtest import BacktestConfig
from .errors import ConfigError
from .market import MarketSpec, Regime
from .portfolios import PortfolioSpec

KNOWN_SECTIONS = ("market", "portfolio", "backtest", "verify", "sweep", "output")

PORTFOLIO_PARAM_KEYS = ("p", "r", "m", "p_plus", "p_minus", "k", "theta", "alpha", "beta")
_PORTFOLIO_INT_KEYS = ("m",)


@dataclass
class RunConfig:
    """Raw section/key/value mapping with helpers for overrides."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    def get(self, section: str, key: str, default: str | None = None) -> str | None:
        return self.sections.get(section, {}).get(key, default)

    def set_value(self, section: str, key: str, value) -> None:
        if value is None:
            return
        self.sections.setdefault(section, {})[key] = str(value)

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sections: dict[str, dict[str, str]] = {}
    for name in parser.sections():
        if name not in KNOWN_SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        sections[name] = {k: v.strip() for k, v in parser.items(name)}
    return RunConfig(sections=sections)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            return parse_config(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form: sorted sections and keys, one `key = value` per line."""
    out = io.StringIO()
    for name in sorted(cfg.sections):
        out.write(f"[{name}]\n")
        for key in sorted(cfg.sections[name]):
            out.write(f"{key} = {cfg.sections[name][key]}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: RunConfig, command: str) -> str:
    digest = hashlib.sha256()
    digest.update(command.encode())
    digest.update(serialize_config(cfg).encode())
    return digest.hexdigest()[:12]


def _req(cfg: RunConfig, section: str, key: str) -> str:
    val = cfg.get(section, key)
    if val is None:
        raise ConfigError(f"missing required config key [{section}] {key}")
    return val


def _float(val: str, where: str) -> float:
    try:
        return float(val)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected a number, got {val!r}") from exc


def _int(val: str, where: str) -> int:
    try:
        return int(val)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected an integer, got {val!r}") from exc


def _float_list(val: str, where: str) -> list[float]:
    return [_float(part.strip(), where) for part in val.split(",") if part.strip()]


def build_market_spec(cfg: RunConfig) -> MarketSpec:
    """Materialize [market] into a MarketSpec (constant coefficients only)."""
    section = "market"
    n = _int(_req(cfg, section, "n_assets"), "n_assets")
    d = _int(cfg.get(section, "n_drivers", str(n)), "n_drivers")

    drift_raw = cfg.get(section, "drift", "0.0")
    drift_vals = _float_list(drift_raw, "drift")
    drift = drift_vals[0] if len(drift_vals) == 1 else np.asarray(drift_vals)

    sigma_raw = _req(cfg, section, "sigma")
    if ";" in sigma_raw:
        rows = [_float_list(row, "sigma") for row in sigma_raw.split(";") if row.strip()]
        sigma = np.asarray(rows)
    else:
        vals = _float_list(sigma_raw, "sigma")
        sigma = vals[0] if len(vals) == 1 else np.asarray(vals)

    caps_vals = _float_list(cfg.get(section, "initial_caps", "1.0"), "initial_caps")
    caps = caps_vals[0] if len(caps_vals) == 1 else np.asarray(caps_vals)

    regime_kind = cfg.get(section, "regime", "free")
    if regime_kind == "free":
        regime = Regime.free()
    elif regime_kind == "reflect_nf":
        regime = Regime.no_failure(_float(_req(cfg, section, "phi"), "phi"))
    elif regime_kind == "reflect_lf":
        regime = Regime.limited_failure(
            _int(_req(cfg, section, "m_rank"), "m_rank"),
            _float(_req(cfg, section, "kappa"), "kappa"),
        )
    elif regime_kind == "reflect_diversity":
        regime = Regime.diversity(_float(_req(cfg, section, "delta"), "delta"))
    else:
        raise ConfigError(f"unknown regime {regime_kind!r}")

    return MarketSpec(
        n_assets=n,
        n_drivers=d,
        drift=drift,
        sigma=sigma,
        initial_caps=caps,
        step=_float(_req(cfg, section, "step"), "step"),
        horizon=_float(_req(cfg, section, "horizon"), "horizon"),
        regime=regime,
    )


def build_portfolio_spec(cfg: RunConfig) -> PortfolioSpec:
    family = _req(cfg, "portfolio", "family")
    params = {}
    for key in PORTFOLIO_PARAM_KEYS:
        raw = cfg.get("portfolio", key)
        if raw is None:
            continue
        params[key] = _int(raw, key) if key in _PORTFOLIO_INT_KEYS else _float(raw, key)
    return PortfolioSpec.from_params(family, **params)


def portfolio_to_config(spec: PortfolioSpec, cfg: RunConfig) -> None:
    for key, val in spec.params_dict().items():
        cfg.set_value("portfolio", key, val)


def build_backtest_config(cfg: RunConfig, portfolio: PortfolioSpec) -> BacktestConfig:
    return BacktestConfig(
        portfolio=portfolio,
        tv_threshold=_float(cfg.get("backtest", "tv_threshold", "0.0"), "tv_threshold"),
        cost_rate=_float(cfg.get("backtest", "cost_rate", "0.005"), "cost_rate"),
        initial_wealth=_float(cfg.get("backtest", "initial_wealth", "1.0"), "initial_wealth"),
    )
