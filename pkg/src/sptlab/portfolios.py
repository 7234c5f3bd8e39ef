"""Long-only portfolio weight rules on the open simplex.

Every rule maps a vector (or time series) of market weights to portfolio
weights.  Weight powers are evaluated in log space with a max-shifted
normalized exponentiation, so extreme exponents and tiny weights do not
overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .market import rank_view

FAMILIES = (
    "market",
    "equal_weight",
    "diversity",
    "large_rank",
    "small_rank",
    "mixed",
    "gamma_threshold",
    "beta_threshold",
)


def assert_simplex(w: np.ndarray, tol: float = 1e-12) -> None:
    w = np.asarray(w, float)
    if np.any(w < -tol):
        raise DomainError("weight vector has negative entries")
    err = np.abs(w.sum(axis=-1) - 1.0).max()
    if err > tol:
        raise DomainError(f"weights do not sum to 1 (max error {err:.3e})")


def _require_open_simplex(mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, float)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise DomainError("market weights must lie in the open simplex")
    return mu


def _softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=-1)
    return m + np.log(np.exp(scores - m[..., None]).sum(axis=-1))


def equal_weights(mu: np.ndarray) -> np.ndarray:
    mu = _require_open_simplex(mu)
    return np.full_like(mu, 1.0 / mu.shape[-1])


def dwp_weights(mu: np.ndarray, p: float) -> np.ndarray:
    """Diversity weighting: w_i proportional to mu_i^p.

    p = 1 reproduces the market and p = 0 is aliased to equal weighting.
    """
    mu = _require_open_simplex(mu)
    if p == 0.0:
        return equal_weights(mu)
    return _softmax(p * np.log(mu))


def _rank_powered(mu: np.ndarray, r: float, m: int, small: bool) -> np.ndarray:
    mu = _require_open_simplex(mu)
    n = mu.shape[-1]
    lo, hi = (1, n) if not small else (1, n - 1)
    if not lo <= m <= hi:
        side = "small_rank (1 <= m < n)" if small else "large_rank (1 <= m <= n)"
        raise ConfigError(f"m={m} out of range for {side} with n={n}")
    rv = rank_view(mu)
    sel = slice(m, None) if small else slice(None, m)
    scores = r * np.log(rv.ranked[..., sel])
    w_sel = _softmax(scores)
    out = np.zeros_like(mu)
    np.put_along_axis(out, rv.perm[..., sel], w_sel, axis=-1)
    return out


def large_rank_weights(mu: np.ndarray, r: float, m: int) -> np.ndarray:
    """Invest mu_(k)^r, renormalized, in the m highest-ranked stocks only."""
    return _rank_powered(mu, r, m, small=False)


def small_rank_weights(mu: np.ndarray, r: float, m: int) -> np.ndarray:
    """Invest mu_(k)^r, renormalized, in the stocks ranked below the top m."""
    return _rank_powered(mu, r, m, small=True)


def log_gp(mu: np.ndarray, p: float) -> np.ndarray:
    """log of the power-mean generating value (sum_i mu_i^p)^(1/p)."""
    mu = _require_open_simplex(mu)
    if p == 0.0:
        # continuity limit: n * geometric mean
        n = mu.shape[-1]
        return np.log(float(n)) + np.mean(np.log(mu), axis=-1)
    return _logsumexp(p * np.log(mu)) / p


def mixing_proportion(mu: np.ndarray, p_plus: float, p_minus: float) -> np.ndarray:
    """Weight on the positive-parameter component, from log generating values."""
    gap = log_gp(mu, p_plus) - log_gp(mu, p_minus)
    return 1.0 / (1.0 + np.exp(-gap))


def mixed_weights(
    mu: np.ndarray, p_plus: float, p_minus: float
) -> tuple[np.ndarray, np.ndarray]:
    """Convex mix of the positive- and negative-parameter diversity rules.

    Returns (weights, mixing proportion); the proportion is the share on the
    positive-parameter component.
    """
    if not 0.0 < p_plus < 1.0:
        raise ConfigError("p_plus must lie in (0, 1)")
    if not p_minus < 0.0:
        raise ConfigError("p_minus must be negative")
    prop = mixing_proportion(mu, p_plus, p_minus)
    w_plus = dwp_weights(mu, p_plus)
    w_minus = dwp_weights(mu, p_minus)
    w = prop[..., None] * w_plus + (1.0 - prop[..., None]) * w_minus
    return w, prop


def gamma_weights(mu: np.ndarray, k: float, theta: float) -> np.ndarray:
    """Threshold rule w_i proportional to mu_i^k exp(-mu_i / theta).

    The rule is increasing in mu_i below theta * k and decreasing above it.
    """
    if k <= 0 or theta <= 0:
        raise ConfigError("gamma_threshold requires k > 0 and theta > 0")
    mu = _require_open_simplex(mu)
    return _softmax(k * np.log(mu) - mu / theta)


def beta_weights(mu: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Threshold rule w_i proportional to mu_i^alpha (1 - mu_i)^beta.

    Increasing in mu_i below alpha / (alpha + beta).
    """
    if alpha <= 0 or beta <= 0:
        raise ConfigError("beta_threshold requires alpha > 0 and beta > 0")
    mu = _require_open_simplex(mu)
    return _softmax(alpha * np.log(mu) + beta * np.log1p(-mu))


@dataclass
class GeneratingFunctionValue:
    """Value of a generating function together with x_i * D_i log G."""

    value: float
    gradient_terms: np.ndarray


def dwp_generating_value(mu: np.ndarray, p: float) -> GeneratingFunctionValue:
    """Evaluate the power-mean generating function at one weight vector."""
    mu = _require_open_simplex(np.asarray(mu, float))
    if mu.ndim != 1:
        raise DomainError("dwp_generating_value expects a single weight vector")
    value = float(np.exp(log_gp(mu, p)))
    grad_terms = dwp_weights(mu, p)  # x_i D_i log G_p = mu_i^p / sum mu^p
    return GeneratingFunctionValue(value=value, gradient_terms=grad_terms)


# ---------------------------------------------------------------------------
# Generating function objects (value / log gradient / Hessian)
# ---------------------------------------------------------------------------


class ConstantGenerating:
    """G identically constant; generates the market portfolio."""

    def __init__(self, c: float = 1.0):
        if c <= 0:
            raise ConfigError("generating constant must be positive")
        self.c = float(c)

    def log_value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return np.full(x.shape[:-1], np.log(self.c))

    def value(self, x: np.ndarray) -> float:
        return self.c

    def grad_log(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, float))

    def hessian(self, x: np.ndarray) -> np.ndarray:
        n = np.asarray(x).shape[-1]
        return np.zeros((n, n))


class DiversityGenerating:
    """Power mean G_p(x) = (sum_i x_i^p)^(1/p), p != 0."""

    def __init__(self, p: float):
        if p == 0.0:
            raise ConfigError("use EqualWeightGenerating for p = 0")
        self.p = float(p)

    def log_value(self, x: np.ndarray) -> np.ndarray:
        return log_gp(x, self.p)

    def value(self, x: np.ndarray) -> float:
        return float(np.exp(self.log_value(x)))

    def grad_log(self, x: np.ndarray) -> np.ndarray:
        # D_i log G = x_i^(p-1) / sum_j x_j^p
        x = _require_open_simplex(x)
        lx = np.log(x)
        return np.exp((self.p - 1.0) * lx - _logsumexp(self.p * lx)[..., None])

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = _require_open_simplex(np.asarray(x, float))
        p = self.p
        s = float(np.sum(x**p))
        xp1 = x ** (p - 1.0)
        diag = np.diag(x ** (p - 2.0))
        return (1.0 - p) * (s ** (1.0 / p - 2.0) * np.outer(xp1, xp1) - s ** (1.0 / p - 1.0) * diag)


class EqualWeightGenerating:
    """Continuity limit of the power mean at p = 0: n times geometric mean."""

    def log_value(self, x: np.ndarray) -> np.ndarray:
        return log_gp(x, 0.0)

    def value(self, x: np.ndarray) -> float:
        return float(np.exp(self.log_value(x)))

    def grad_log(self, x: np.ndarray) -> np.ndarray:
        x = _require_open_simplex(x)
        return 1.0 / (x.shape[-1] * x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = _require_open_simplex(np.asarray(x, float))
        n = x.shape[-1]
        g = self.value(x)
        return g / (n * n) * np.outer(1.0 / x, 1.0 / x) - np.diag(g / (n * x * x))


class MixedGenerating:
    """Sum of two power means G_(p+) + G_(p-)."""

    def __init__(self, p_plus: float, p_minus: float):
        self.plus = DiversityGenerating(p_plus)
        self.minus = DiversityGenerating(p_minus)

    def _prop(self, x: np.ndarray) -> np.ndarray:
        return mixing_proportion(x, self.plus.p, self.minus.p)

    def log_value(self, x: np.ndarray) -> np.ndarray:
        lp = self.plus.log_value(x)
        lm = self.minus.log_value(x)
        hi = np.maximum(lp, lm)
        return hi + np.log(np.exp(lp - hi) + np.exp(lm - hi))

    def value(self, x: np.ndarray) -> float:
        return float(np.exp(self.log_value(x)))

    def grad_log(self, x: np.ndarray) -> np.ndarray:
        prop = self._prop(x)[..., None]
        return prop * self.plus.grad_log(x) + (1.0 - prop) * self.minus.grad_log(x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.plus.hessian(x) + self.minus.hessian(x)


class RankPoweredGenerating:
    """Power mean over a contiguous block of ranked coordinates.

    Defined piecewise away from rank ties; at a tie the direct rank rules are
    authoritative and this object simply applies the lexicographic ranking.
    """

    def __init__(self, r: float, m: int, small: bool):
        if r == 0.0:
            raise ConfigError("rank generating function requires r != 0")
        self.r = float(r)
        self.m = int(m)
        self.small = bool(small)

    def _support(self, x: np.ndarray) -> np.ndarray:
        perm = rank_view(x).perm
        return perm[..., self.m :] if self.small else perm[..., : self.m]

    def log_value(self, x: np.ndarray) -> np.ndarray:
        x = _require_open_simplex(x)
        ranked = rank_view(x).ranked
        sel = ranked[..., self.m :] if self.small else ranked[..., : self.m]
        return _logsumexp(self.r * np.log(sel)) / self.r

    def value(self, x: np.ndarray) -> float:
        return float(np.exp(self.log_value(x)))

    def grad_log(self, x: np.ndarray) -> np.ndarray:
        x = _require_open_simplex(x)
        sup = self._support(x)
        lx = np.log(x)
        sel = np.take_along_axis(self.r * lx, sup, axis=-1)
        lse = _logsumexp(sel)
        out = np.zeros_like(x)
        vals = np.exp((self.r - 1.0) * np.take_along_axis(lx, sup, axis=-1) - lse[..., None])
        np.put_along_axis(out, sup, vals, axis=-1)
        return out

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = _require_open_simplex(np.asarray(x, float))
        if x.ndim != 1:
            raise DomainError("hessian expects a single weight vector")
        r = self.r
        sup = self._support(x)
        mask = np.zeros_like(x)
        mask[sup] = 1.0
        s = float(np.sum(mask * x**r))
        xr1 = mask * x ** (r - 1.0)
        diag = np.diag(mask * x ** (r - 2.0))
        return (1.0 - r) * (s ** (1.0 / r - 2.0) * np.outer(xr1, xr1) - s ** (1.0 / r - 1.0) * diag)


def fgp_weights(generating, mu: np.ndarray) -> np.ndarray:
    """Portfolio generated by a function G of the market weights.

    w_i = (D_i log G(mu) + 1 - sum_j mu_j D_j log G(mu)) * mu_i.  Raises if
    the rule turns negative at mu, naming the offending asset.
    """
    mu = _require_open_simplex(mu)
    g = generating.grad_log(mu)
    s = (mu * g).sum(axis=-1, keepdims=True)
    w = mu * (g + 1.0 - s)
    if np.any(w < -1e-12):
        idx = int(np.argwhere(w < -1e-12)[0][-1])
        raise DomainError(
            f"generating function is not long-only at this point: weight {idx} is negative"
        )
    w = np.maximum(w, 0.0)
    return w / w.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Tagged portfolio specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PortfolioSpec:
    """A portfolio family plus its parameters, serializable as flat keys."""

    family: str
    p: float | None = None
    r: float | None = None
    m: int | None = None
    p_plus: float | None = None
    p_minus: float | None = None
    k: float | None = None
    theta: float | None = None
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown portfolio family {self.family!r}")
        if self.family == "diversity":
            if self.p is None or self.p == 0.0:
                raise ConfigError("diversity requires p != 0 (p = 0 is the equal-weight family)")
        elif self.family in ("large_rank", "small_rank"):
            if self.r is None or self.m is None or self.m < 1:
                raise ConfigError(f"{self.family} requires r and m >= 1")
        elif self.family == "mixed":
            if self.p_plus is None or not 0.0 < self.p_plus < 1.0:
                raise ConfigError("mixed requires p_plus in (0, 1)")
            if self.p_minus is None or not self.p_minus < 0.0:
                raise ConfigError("mixed requires p_minus < 0")
        elif self.family == "gamma_threshold":
            if self.k is None or self.theta is None or self.k <= 0 or self.theta <= 0:
                raise ConfigError("gamma_threshold requires k > 0 and theta > 0")
        elif self.family == "beta_threshold":
            if self.alpha is None or self.beta is None or self.alpha <= 0 or self.beta <= 0:
                raise ConfigError("beta_threshold requires alpha > 0 and beta > 0")

    # -- constructors -------------------------------------------------------

    @classmethod
    def market(cls) -> "PortfolioSpec":
        return cls("market")

    @classmethod
    def equal_weight(cls) -> "PortfolioSpec":
        return cls("equal_weight")

    @classmethod
    def diversity(cls, p: float) -> "PortfolioSpec":
        if p == 0.0:
            return cls("equal_weight")
        return cls("diversity", p=float(p))

    @classmethod
    def large_rank(cls, r: float, m: int) -> "PortfolioSpec":
        return cls("large_rank", r=float(r), m=int(m))

    @classmethod
    def small_rank(cls, r: float, m: int) -> "PortfolioSpec":
        return cls("small_rank", r=float(r), m=int(m))

    @classmethod
    def mixed(cls, p_plus: float, p_minus: float) -> "PortfolioSpec":
        return cls("mixed", p_plus=float(p_plus), p_minus=float(p_minus))

    @classmethod
    def gamma_threshold(cls, k: float, theta: float) -> "PortfolioSpec":
        return cls("gamma_threshold", k=float(k), theta=float(theta))

    @classmethod
    def beta_threshold(cls, alpha: float, beta: float) -> "PortfolioSpec":
        return cls("beta_threshold", alpha=float(alpha), beta=float(beta))

    # -- behavior ------------------------------------------------------------

    def weights(self, mu: np.ndarray) -> np.ndarray:
        """Portfolio weights at the given market weights ((..., n) supported)."""
        mu = np.asarray(mu, float)
        if self.family == "market":
            return _require_open_simplex(mu).copy()
        if self.family == "equal_weight":
            return equal_weights(mu)
        if self.family == "diversity":
            return dwp_weights(mu, self.p)
        if self.family == "large_rank":
            return large_rank_weights(mu, self.r, self.m)
        if self.family == "small_rank":
            return small_rank_weights(mu, self.r, self.m)
        if self.family == "mixed":
            return mixed_weights(mu, self.p_plus, self.p_minus)[0]
        if self.family == "gamma_threshold":
            return gamma_weights(mu, self.k, self.theta)
        return beta_weights(mu, self.alpha, self.beta)

    @property
    def is_functionally_generated(self) -> bool:
        return self.family not in ("gamma_threshold", "beta_threshold")

    @property
    def is_rank_based(self) -> bool:
        return self.family in ("large_rank", "small_rank")

    def generating(self):
        """Generating function object, or None for the threshold families."""
        if self.family == "market":
            return ConstantGenerating()
        if self.family == "equal_weight":
            return EqualWeightGenerating()
        if self.family == "diversity":
            return DiversityGenerating(self.p)
        if self.family == "large_rank":
            return RankPoweredGenerating(self.r, self.m, small=False)
        if self.family == "small_rank":
            return RankPoweredGenerating(self.r, self.m, small=True)
        if self.family == "mixed":
            return MixedGenerating(self.p_plus, self.p_minus)
        return None

    def label(self) -> str:
        """Short series name used in reports and plot data."""
        f = self.family
        if f == "market":
            return "mu"
        if f == "equal_weight":
            return "pi_E"
        if f == "diversity":
            return f"dwp_p={self.p:g}"
        if f == "large_rank":
            return f"large_r={self.r:g}_m={self.m}"
        if f == "small_rank":
            return f"small_r={self.r:g}_m={self.m}"
        if f == "mixed":
            return f"mix_p+={self.p_plus:g}_p-={self.p_minus:g}"
        if f == "gamma_threshold":
            return f"gamma_k={self.k:g}_theta={self.theta:g}"
        return f"beta_alpha={self.alpha:g}_beta={self.beta:g}"

    def params_dict(self) -> dict:
        """Flat {family, param: value} mapping for config files."""
        out = {"family": self.family}
        for key in ("p", "r", "m", "p_plus", "p_minus", "k", "theta", "alpha", "beta"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    @classmethod
    def from_params(cls, family: str, **params) -> "PortfolioSpec":
        known = {"p", "r", "m", "p_plus", "p_minus", "k", "theta", "alpha", "beta"}
        bad = set(params) - known
        if bad:
            raise ConfigError(f"unknown portfolio parameters {sorted(bad)}")
        if "m" in params and params["m"] is not None:
            params["m"] = int(params["m"])
        if family == "diversity" and params.get("p") == 0.0:
            return cls("equal_weight")
        return cls(family, **params)
