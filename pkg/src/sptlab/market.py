"""Multi-asset Ito market simulation, market weights, and regularity diagnostics.

Capitalizations follow dX_i = X_i (b_i dt + sum_nu sigma_i,nu dW_nu) and are
discretized with a log-Euler scheme (Euler-Maruyama on log X), so positivity
is exact.  Optional barrier regimes keep the vector of market weights inside
an open constraint set (smallest weight above phi, m-th ranked weight above
kappa, or largest weight below 1 - delta) via a documented post-step
projection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, DomainError, SimulationError

# Callables receive (t, caps) and return per-asset drift (n,) or volatility (n, d).
Coefficient = Callable[[float, np.ndarray], np.ndarray]

SIMPLEX_TOL = 1e-12

# Violating weights overshoot the barrier by half the violation; this floor
# keeps the projection strictly interior even when the violation is 0.0.
_MIN_VIOLATION = 1e-12


@dataclass(frozen=True)
class Regime:
    """Constraint regime applied to simulated market weights.

    kind is one of "free", "reflect_nf", "reflect_lf", "reflect_diversity";
    the barrier parameter lives in phi, (m, kappa) or delta respectively.
    """

    kind: str = "free"
    phi: float | None = None
    kappa: float | None = None
    m: int | None = None
    delta: float | None = None

    @classmethod
    def free(cls) -> "Regime":
        return cls("free")

    @classmethod
    def no_failure(cls, phi: float) -> "Regime":
        return cls("reflect_nf", phi=float(phi))

    @classmethod
    def limited_failure(cls, m: int, kappa: float) -> "Regime":
        return cls("reflect_lf", kappa=float(kappa), m=int(m))

    @classmethod
    def diversity(cls, delta: float) -> "Regime":
        return cls("reflect_diversity", delta=float(delta))

    @property
    def is_free(self) -> bool:
        return self.kind == "free"

    def validate(self, n_assets: int) -> None:
        if self.kind == "free":
            return
        if self.kind == "reflect_nf":
            if self.phi is None or not 0.0 < self.phi < 1.0 / n_assets:
                raise ConfigError(
                    f"reflect_nf requires phi in (0, 1/n); got phi={self.phi}, n={n_assets}"
                )
        elif self.kind == "reflect_lf":
            if self.m is None or not 1 <= self.m < n_assets:
                raise ConfigError(f"reflect_lf requires 1 <= m < n; got m={self.m}")
            if self.kappa is None or not 0.0 < self.kappa < 1.0 / self.m:
                raise ConfigError(
                    f"reflect_lf requires kappa in (0, 1/m); got kappa={self.kappa}, m={self.m}"
                )
        elif self.kind == "reflect_diversity":
            if self.delta is None or not 0.0 < self.delta < 1.0:
                raise ConfigError(f"reflect_diversity requires delta in (0,1); got {self.delta}")
        else:
            raise ConfigError(f"unknown regime kind {self.kind!r}")


@dataclass(eq=False)
class MarketSpec:
    """Immutable description of the market model to simulate.

    drift and sigma may be constants (scalar, per-asset vector, or n x d
    matrix for sigma) or callables of (t, caps).  Constant coefficients take
    a vectorized fast path in the simulator.
    """

    n_assets: int
    n_drivers: int
    drift: float | Sequence[float] | Coefficient
    sigma: float | Sequence[float] | np.ndarray | Coefficient
    initial_caps: float | Sequence[float]
    step: float
    horizon: float
    regime: Regime = field(default_factory=Regime.free)

    def __post_init__(self) -> None:
        if self.n_assets < 1:
            raise ConfigError("n_assets must be a positive integer")
        if self.n_drivers < self.n_assets:
            raise ConfigError("n_drivers must be >= n_assets")
        x0 = np.broadcast_to(np.asarray(self.initial_caps, float), (self.n_assets,)).copy()
        if not np.all(x0 > 0):
            raise ConfigError("initial_caps must be strictly positive")
        self.initial_caps = x0
        if not self.step > 0:
            raise ConfigError("step must be positive")
        if not self.step < self.horizon:
            raise ConfigError("step must be smaller than horizon")
        self.regime.validate(self.n_assets)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.step

    def drift_array(self) -> np.ndarray | None:
        """Constant drift vector, or None when drift is state dependent."""
        if callable(self.drift):
            return None
        b = np.broadcast_to(np.asarray(self.drift, float), (self.n_assets,)).copy()
        if not np.all(np.isfinite(b)):
            raise ConfigError("drift coefficients must be finite")
        return b

    def sigma_array(self) -> np.ndarray | None:
        """Constant n x d volatility matrix, or None when state dependent."""
        if callable(self.sigma):
            return None
        s = np.asarray(self.sigma, float)
        n, d = self.n_assets, self.n_drivers
        if s.ndim == 0:
            s = float(s) * np.eye(n, d)
        elif s.ndim == 1:
            if s.shape[0] != n:
                raise ConfigError("per-asset sigma vector must have length n_assets")
            s = np.eye(n, d) * s[:, None]
        elif s.shape != (n, d):
            raise ConfigError(f"sigma matrix must have shape ({n}, {d})")
        if not np.all(np.isfinite(s)):
            raise ConfigError("sigma coefficients must be finite")
        return s


@dataclass(eq=False)
class MarketPath:
    """One discretized realization of the market.

    caps has shape (n_steps + 1, n); cov holds the per-step covariance
    a = sigma sigma' evaluated at the left endpoint of each step, either as
    (n_steps, n, n) or as a single (1, n, n) block when constant in time.
    """

    times: np.ndarray
    caps: np.ndarray
    cov: np.ndarray
    seed: int
    path_index: int = 0
    _weights: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_assets(self) -> int:
        return self.caps.shape[1]

    @property
    def n_steps(self) -> int:
        return self.caps.shape[0] - 1

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def cov_is_constant(self) -> bool:
        return self.cov.shape[0] == 1

    def cov_at(self, step_index: int) -> np.ndarray:
        return self.cov[0] if self.cov_is_constant else self.cov[step_index]

    @property
    def weights(self) -> np.ndarray:
        """Market weights mu_i(t) = X_i(t) / sum_j X_j(t), cached."""
        if self._weights is None:
            self._weights = weights_from_caps(self.caps)
        return self._weights


@dataclass(eq=False)
class RankView:
    """Descending order statistics of a weight series with the tie rule applied.

    ranked[t, k] is the (k+1)-th largest weight at time t and
    perm[t, k] the 0-based index of the asset holding that rank; ties are
    broken in favor of the lowest asset index.
    """

    ranked: np.ndarray
    perm: np.ndarray


@dataclass
class ConditionReport:
    """Empirical bounds realized by a path.

    eps_hat / k_hat are the extreme covariance eigenvalues over the path,
    delta_hat = 1 - max_t mu_(1), wd_delta_hat = 1 - time average of mu_(1),
    phi_hat = min_t mu_(n), kappa_hat = min_t mu_(m) for the requested m.
    """

    eps_hat: float
    k_hat: float
    delta_hat: float
    wd_delta_hat: float
    phi_hat: float
    kappa_hat: float
    m_for_lf: int
    degenerate: bool


def weights_from_caps(caps: np.ndarray) -> np.ndarray:
    caps = np.asarray(caps, float)
    if not np.all(caps > 0):
        raise DomainError("all capitalizations must be strictly positive")
    return caps / caps.sum(axis=-1, keepdims=True)


def compute_weights(path: "MarketPath | np.ndarray") -> np.ndarray:
    """Market weights of a path (or a raw caps array)."""
    caps = path.caps if isinstance(path, MarketPath) else path
    return weights_from_caps(caps)


def rank_view(weights: np.ndarray) -> RankView:
    """Sort weights in descending order, resolving ties by lowest index."""
    w = np.asarray(weights, float)
    perm = np.argsort(-w, axis=-1, kind="stable")
    ranked = np.take_along_axis(w, perm, axis=-1)
    return RankView(ranked=ranked, perm=perm)


def _project_nf(w: np.ndarray, phi: float) -> np.ndarray:
    viol = w <= phi
    if not viol.any():
        return w
    v = np.maximum(np.maximum(phi - w, 0.0), _MIN_VIOLATION)
    lifted = np.where(viol, phi + 0.5 * v, w)
    need = float(np.sum(lifted[viol] - w[viol]))
    head = np.where(viol, 0.0, w - phi)
    total_head = float(head.sum())
    if need >= total_head:
        raise SimulationError("no-failure projection infeasible: insufficient headroom")
    return lifted - need * head / total_head


def _project_diversity(w: np.ndarray, delta: float) -> np.ndarray:
    cap = 1.0 - delta
    for _ in range(w.shape[0] + 1):
        viol = w >= cap
        if not viol.any():
            return w
        v = np.maximum(np.maximum(w - cap, 0.0), _MIN_VIOLATION)
        lowered = np.where(viol, cap - 0.5 * v, w)
        excess = float(np.sum(w[viol] - lowered[viol]))
        receivers = np.where(viol, 0.0, w)
        total = float(receivers.sum())
        if total <= 0.0:
            raise SimulationError("diversity projection infeasible")
        w = lowered + excess * receivers / total
    raise SimulationError("diversity projection did not converge")


def _project_lf(w: np.ndarray, m: int, kappa: float) -> np.ndarray:
    order = np.argsort(-w, kind="stable")
    top = order[:m]
    viol_top = top[w[top] <= kappa]
    if viol_top.size == 0:
        return w
    v = np.maximum(np.maximum(kappa - w[viol_top], 0.0), _MIN_VIOLATION)
    lifted = w.copy()
    lifted[viol_top] = kappa + 0.5 * v
    need = float(np.sum(lifted[viol_top] - w[viol_top]))
    avail = w.copy()
    avail[top] = np.maximum(w[top] - kappa, 0.0)
    avail[viol_top] = 0.0
    total = float(avail.sum())
    if need >= total:
        raise SimulationError("limited-failure projection infeasible")
    return lifted - need * avail / total


def enforce_regime(weights_step: np.ndarray, regime: Regime) -> np.ndarray:
    """Project one weight vector onto the open region required by the regime.

    Violating coordinates are moved past the barrier by half their violation
    (so the result is strictly interior); the offsetting mass is taken from,
    or handed to, the unconstrained coordinates in proportion to their
    headroom (no-failure / limited-failure) or their weight (diversity).
    Weights already inside the region are returned unchanged.
    """
    w = np.asarray(weights_step, float)
    if w.ndim != 1:
        raise DomainError("enforce_regime expects a single weight vector")
    regime.validate(w.shape[0])
    if regime.kind == "free":
        return w
    if regime.kind == "reflect_nf":
        return _project_nf(w, regime.phi)
    if regime.kind == "reflect_diversity":
        return _project_diversity(w, regime.delta)
    return _project_lf(w, regime.m, regime.kappa)


def _weights_inside(w2d: np.ndarray, regime: Regime) -> np.ndarray:
    """Boolean mask of rows already strictly inside the regime's region."""
    if regime.kind == "reflect_nf":
        return w2d.min(axis=1) > regime.phi
    if regime.kind == "reflect_diversity":
        return w2d.max(axis=1) < 1.0 - regime.delta
    m = regime.m
    kth = np.sort(w2d, axis=1)[:, w2d.shape[1] - m]
    return kth > regime.kappa


def _check_block_finite(x: np.ndarray, t0: float, step: float) -> None:
    if np.all(np.isfinite(x)) and np.all(x > 0):
        return
    bad = np.argwhere(~(np.isfinite(x) & (x > 0)))
    b = bad[0]
    t = t0 + (b[1] + 1) * step if x.ndim == 3 else t0
    raise SimulationError(
        f"non-finite capitalization for asset {int(b[-1])} near t={float(t):.6g}"
    )


def _simulate_constant(
    spec: MarketSpec,
    rngs: list[np.random.Generator],
    block: int,
) -> np.ndarray:
    """Batched log-Euler with constant coefficients; returns (B, n_steps+1, n)."""
    n, d, h = spec.n_assets, spec.n_drivers, spec.step
    n_steps = spec.n_steps
    b = spec.drift_array()
    s = spec.sigma_array()
    a_diag = (s * s).sum(axis=1)
    drift_h = (b - 0.5 * a_diag) * h
    m = s.T * np.sqrt(h)  # (d, n); noise increment is Z @ m

    n_paths = len(rngs)
    caps = np.empty((n_paths, n_steps + 1, n))
    logx = np.tile(np.log(spec.initial_caps), (n_paths, 1))
    caps[:, 0, :] = spec.initial_caps

    free = spec.regime.is_free
    for start in range(0, n_steps, block):
        size = min(block, n_steps - start)
        z = np.stack([rng.standard_normal((size, d)) for rng in rngs])
        inc = drift_h + z @ m  # (B, size, n)
        if free:
            seg = logx[:, None, :] + np.cumsum(inc, axis=1)
            x = np.exp(seg)
            _check_block_finite(x, start * h, h)
            caps[:, start + 1 : start + size + 1, :] = x
            logx = seg[:, -1, :]
        else:
            for k in range(size):
                logx += inc[:, k, :]
                x = np.exp(logx)
                tot = x.sum(axis=1, keepdims=True)
                mu = x / tot
                inside = _weights_inside(mu, spec.regime)
                if not inside.all():
                    for idx in np.nonzero(~inside)[0]:
                        mu_new = enforce_regime(mu[idx], spec.regime)
                        x[idx] = mu_new * tot[idx, 0]
                        logx[idx] = np.log(x[idx])
                _check_block_finite(x, (start + k + 1) * h, h)
                caps[:, start + k + 1, :] = x
    return caps


def _simulate_callable(
    spec: MarketSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Sequential log-Euler for state-dependent coefficients (one path)."""
    n, d, h = spec.n_assets, spec.n_drivers, spec.step
    n_steps = spec.n_steps
    sqrt_h = np.sqrt(h)
    b_const = spec.drift_array()
    s_const = spec.sigma_array()

    caps = np.empty((n_steps + 1, n))
    cov = np.empty((n_steps, n, n))
    x = spec.initial_caps.copy()
    caps[0] = x
    logx = np.log(x)
    for k in range(n_steps):
        t = k * h
        b = b_const if b_const is not None else np.asarray(spec.drift(t, x), float)
        s = s_const if s_const is not None else np.asarray(spec.sigma(t, x), float)
        if b.shape != (n,) or s.shape != (n, d):
            raise SimulationError(f"coefficient shape mismatch at t={t:.6g}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
            bad = np.argwhere(~np.isfinite(b)) if not np.all(np.isfinite(b)) else np.argwhere(
                ~np.isfinite(s)
            )
            raise SimulationError(
                f"non-finite coefficient for asset {int(bad[0][0])} at t={t:.6g}"
            )
        cov[k] = s @ s.T
        logx = logx + (b - 0.5 * np.diag(cov[k])) * h + sqrt_h * (s @ rng.standard_normal(d))
        x = np.exp(logx)
        if not spec.regime.is_free:
            mu = x / x.sum()
            if not _weights_inside(mu[None, :], spec.regime)[0]:
                mu = enforce_regime(mu, spec.regime)
                x = mu * x.sum()
                logx = np.log(x)
        _check_block_finite(x[None, :], (k + 1) * h, h)
        caps[k + 1] = x
    return caps, cov


def simulate_paths(
    spec: MarketSpec,
    n_paths: int,
    seed: int,
    path_offset: int = 0,
    block: int = 8192,
) -> list[MarketPath]:
    """Generate independent market paths.

    Path j draws from its own substream keyed by (seed, path_offset + j), so
    results are reproducible and independent of batching.
    """
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    if seed < 0 or path_offset < 0:
        raise ConfigError("seed and path_offset must be non-negative")
    constant = spec.drift_array() is not None and spec.sigma_array() is not None
    times = spec.times()
    if constant:
        s = spec.sigma_array()
        cov = (s @ s.T)[None, :, :]
        rngs = [np.random.default_rng([seed, path_offset + j]) for j in range(n_paths)]
        caps = _simulate_constant(spec, rngs, block)
        return [
            MarketPath(times=times, caps=caps[j], cov=cov, seed=seed, path_index=path_offset + j)
            for j in range(n_paths)
        ]
    paths = []
    for j in range(n_paths):
        rng = np.random.default_rng([seed, path_offset + j])
        caps, cov = _simulate_callable(spec, rng)
        paths.append(
            MarketPath(times=times, caps=caps, cov=cov, seed=seed, path_index=path_offset + j)
        )
    return paths


def iter_simulated_paths(
    spec: MarketSpec,
    n_paths: int,
    seed: int,
    chunk: int = 25,
) -> Iterator[MarketPath]:
    """Yield paths chunk by chunk so long horizons stay within memory."""
    done = 0
    while done < n_paths:
        size = min(chunk, n_paths - done)
        for path in simulate_paths(spec, size, seed, path_offset=done):
            yield path
        done += size


def subsample(path: MarketPath, factor: int) -> MarketPath:
    """Coarsen a path by keeping every factor-th grid point.

    For constant coefficients under the free regime this reproduces exactly
    the log-Euler path driven by the time-aggregated noise, which makes
    step-halving studies share one underlying Brownian path.
    """
    if factor < 1 or path.n_steps % factor != 0:
        raise DomainError("factor must divide the number of steps")
    cov = path.cov if path.cov_is_constant else path.cov[::factor]
    return MarketPath(
        times=path.times[::factor].copy(),
        caps=path.caps[::factor].copy(),
        cov=cov,
        seed=path.seed,
        path_index=path.path_index,
    )


def check_conditions(path: MarketPath, m_for_lf: int = 1) -> ConditionReport:
    """Empirical non-degeneracy, variance, diversity and failure bounds."""
    n = path.n_assets
    if not 1 <= m_for_lf <= n:
        raise DomainError("m_for_lf must be in 1..n_assets")
    sym_err = np.abs(path.cov - np.swapaxes(path.cov, -1, -2)).max()
    if sym_err > 1e-10:
        raise DomainError("covariance blocks must be symmetric")
    eigs = np.linalg.eigvalsh(path.cov)
    eps_hat = float(eigs[:, 0].min())
    k_hat = float(eigs[:, -1].max())
    ranked = rank_view(path.weights).ranked
    top = ranked[:, 0]
    return ConditionReport(
        eps_hat=eps_hat,
        k_hat=k_hat,
        delta_hat=float(1.0 - top.max()),
        wd_delta_hat=float(1.0 - top[:-1].mean()) if top.shape[0] > 1 else float(1.0 - top[0]),
        phi_hat=float(ranked[:, -1].min()),
        kappa_hat=float(ranked[:, m_for_lf - 1].min()),
        m_for_lf=m_for_lf,
        degenerate=bool(eps_hat <= 1e-14),
    )


def export_path_csv(path: MarketPath, caps_file: str, cov_file: str | None = None) -> None:
    """Write a path as long-format CSV: t,asset_id,cap,weight (one row per pair).

    The covariance blocks go to a separate file as t,i,j,a_ij; a single block
    at t=0 denotes a covariance that is constant in time.
    """
    w = path.weights
    with open(caps_file, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["t", "asset_id", "cap", "weight"])
        for k, t in enumerate(path.times):
            for i in range(path.n_assets):
                out.writerow([repr(float(t)), i, repr(float(path.caps[k, i])), repr(float(w[k, i]))])
    if cov_file is None:
        return
    with open(cov_file, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["t", "i", "j", "a_ij"])
        for k in range(path.cov.shape[0]):
            t = path.times[k]
            for i in range(path.n_assets):
                for j in range(path.n_assets):
                    out.writerow([repr(float(t)), i, j, repr(float(path.cov[k, i, j]))])


def import_path_csv(caps_file: str, cov_file: str, seed: int = 0) -> MarketPath:
    """Rebuild a MarketPath from the CSV pair written by export_path_csv."""
    rows = []
    with open(caps_file, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t", "asset_id", "cap", "weight"]:
            raise DataError(f"bad path header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{caps_file}:{lineno}: expected 4 columns")
            rows.append((float(row[0]), int(row[1]), float(row[2])))
    times = sorted({r[0] for r in rows})
    assets = sorted({r[1] for r in rows})
    n, n_times = len(assets), len(times)
    if len(rows) != n * n_times:
        raise DataError("path file is not a full (time, asset) grid")
    t_index = {t: k for k, t in enumerate(times)}
    caps = np.empty((n_times, n))
    for t, i, cap in rows:
        caps[t_index[t], i] = cap

    cov_entries = []
    with open(cov_file, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t", "i", "j", "a_ij"]:
            raise DataError(f"bad covariance header: {header}")
        for row in reader:
            cov_entries.append((float(row[0]), int(row[1]), int(row[2]), float(row[3])))
    cov_times = sorted({e[0] for e in cov_entries})
    cov = np.empty((len(cov_times), n, n))
    ct_index = {t: k for k, t in enumerate(cov_times)}
    for t, i, j, val in cov_entries:
        cov[ct_index[t], i, j] = val
    if cov.shape[0] not in (1, n_times - 1):
        raise DataError("covariance file must hold one block per step or a single block")
    return MarketPath(times=np.asarray(times), caps=caps, cov=cov, seed=seed)
