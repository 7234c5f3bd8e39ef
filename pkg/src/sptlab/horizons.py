"""Closed-form time-horizon thresholds beyond which the weight rules are
guaranteed to outperform (strongly) under the matching market conditions.

Every calculator returns a HorizonBound carrying a validity flag instead of
raising, so parameter sweeps can cross validity boundaries on purpose.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

__all__ = [
    "HorizonBound",
    "horizon_thm1",
    "horizon_fkk_positive",
    "horizon_prop2",
    "horizon_prop3",
    "horizon_prop4",
    "lf_from_diversity",
]


@dataclass
class HorizonBound:
    """Outperformance horizon threshold with its validity range.

    valid implies threshold_T > 0 and the swept parameter lies inside
    parameter_range (when one applies); reason explains any invalidity.
    """

    threshold_T: float
    valid: bool
    parameter_range: tuple[float, float] | None
    inputs: dict = field(default_factory=dict)
    reason: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _invalid(inputs: dict, reason: str, rng=None, threshold=math.nan) -> HorizonBound:
    return HorizonBound(
        threshold_T=threshold, valid=False, parameter_range=rng, inputs=inputs, reason=reason
    )


def horizon_thm1(n: int, phi: float, eps: float, p: float) -> HorizonBound:
    """Negative-parameter diversity weighting vs. the market, under a floor
    phi on all market weights and eigenvalue floor eps.

    T > -2 n log(n phi) / (eps (1 - p)(n - (n phi)^p)) for
    p in (log n / log(n phi), 0).
    """
    inputs = {"n": n, "phi": phi, "eps": eps, "p": p}
    if n < 2:
        return _invalid(inputs, "need at least two assets")
    if not 0.0 < phi < 1.0 / n:
        return _invalid(inputs, f"phi must lie in (0, 1/n); got {phi}")
    if eps <= 0:
        return _invalid(inputs, "eps must be positive")
    lo = math.log(n) / math.log(n * phi)
    rng = (lo, 0.0)
    threshold = -2.0 * n * math.log(n * phi) / (eps * (1.0 - p) * (n - (n * phi) ** p))
    if not lo < p < 0.0:
        return _invalid(inputs, f"p must lie in ({lo:.6f}, 0)", rng, threshold)
    return HorizonBound(threshold_T=threshold, valid=True, parameter_range=rng, inputs=inputs)


def horizon_fkk_positive(n: int, eps: float, delta: float, p: float) -> HorizonBound:
    """Positive-parameter diversity weighting vs. the market under diversity
    delta: the classical 2 log n / (eps delta p) horizon, improved by a second
    candidate whenever n delta / (n - 1) < 1.
    """
    inputs = {"n": n, "eps": eps, "delta": delta, "p": p}
    if n < 2:
        return _invalid(inputs, "need at least two assets")
    if not 0.0 < delta < 1.0:
        return _invalid(inputs, "delta must lie in (0, 1)")
    if eps <= 0:
        return _invalid(inputs, "eps must be positive")
    rng = (0.0, 1.0)
    if not 0.0 < p < 1.0:
        return _invalid(inputs, "p must lie in (0, 1)", rng)
    first = 2.0 * math.log(n) / (eps * delta * p)
    ratio = n * delta / (n - 1)
    threshold = first
    if ratio < 1.0:
        second = -2.0 * math.log(ratio) / (eps * delta * (1.0 - p))
        threshold = min(first, second)
    return HorizonBound(threshold_T=threshold, valid=True, parameter_range=rng, inputs=inputs)


def horizon_prop2(case: str, n: int, m: int, barrier: float, eps: float, r: float) -> HorizonBound:
    """Small-stock rank rule vs. the market.

    case "small_stock_pos": the top m+2 ranked weights stay above kappa
    (pass kappa as barrier); requires kappa < 1/(2(m+1)) and a positive
    denominator factor 2 - ((m+1) kappa)^(-r), which confines r to
    (0, -log 2 / log((m+1) kappa)).
    case "small_stock_neg": all weights stay above phi (pass phi as barrier);
    r in (log(n-m) / log((m+1) phi), 0).
    """
    inputs = {"case": case, "n": n, "m": m, "barrier": barrier, "eps": eps, "r": r}
    if not 1 <= m < n:
        return _invalid(inputs, "need 1 <= m < n")
    if eps <= 0:
        return _invalid(inputs, "eps must be positive")
    if case == "small_stock_neg":
        phi = barrier
        if not 0.0 < phi < 1.0 / n:
            return _invalid(inputs, "phi must lie in (0, 1/n)")
        lo = math.log(n - m) / math.log((m + 1) * phi)
        rng = (lo, 0.0)
        denom = eps * (1.0 - r) * (n - m - ((m + 1) * phi) ** r)
        threshold = -2.0 * (n - m) * math.log((m + 1) * phi) / denom if denom != 0 else math.inf
        if not lo < r < 0.0:
            return _invalid(inputs, f"r must lie in ({lo:.6f}, 0)", rng, threshold)
        return HorizonBound(threshold_T=threshold, valid=True, parameter_range=rng, inputs=inputs)
    if case == "small_stock_pos":
        kappa = barrier
        if not 0.0 < kappa < 1.0 / (m + 2):
            return _invalid(inputs, "kappa must lie in (0, 1/(m+2))")
        mk = (m + 1) * kappa
        factor = 2.0 - mk ** (-r)
        num = 4.0 * (math.log((n - m) / 2.0) - r * math.log(mk))
        threshold = num / (eps * r * (1.0 - r) * factor) if r not in (0.0, 1.0) and factor != 0 else math.nan
        # positivity of the denominator factor pins r below -log2/log((m+1) kappa)
        hi = -math.log(2.0) / math.log(mk) if mk < 1.0 else math.nan
        rng = (0.0, hi) if not math.isnan(hi) else None
        if kappa >= 1.0 / (2 * (m + 1)):
            return _invalid(inputs, "requires kappa < 1/(2(m+1))", rng, threshold)
        if not 0.0 < r < 1.0:
            return _invalid(inputs, "r must lie in (0, 1)", rng, threshold)
        if factor <= 0.0:
            return _invalid(
                inputs, f"denominator factor 2 - ((m+1)kappa)^(-r) = {factor:.6f} <= 0", rng, threshold
            )
        if not threshold > 0:
            return _invalid(inputs, "threshold is not positive here", rng, threshold)
        return HorizonBound(threshold_T=threshold, valid=True, parameter_range=rng, inputs=inputs)
    return _invalid(inputs, f"unknown case {case!r}")


def horizon_prop3(
    n: int, phi: float, eps: float, K: float, p_plus: float, p_minus: float
) -> HorizonBound:
    """Negative- vs. positive-parameter diversity weighting.

    T > -2 log(n phi) / C with
    C = eps/2 (1 - (n phi)^(p-) / n)(1 - p-) - 2K (n-1)(1 - p+) / n;
    valid when p- is in the negative-parameter range, p+ close enough to 1
    for C to be positive.
    """
    inputs = {"n": n, "phi": phi, "eps": eps, "K": K, "p_plus": p_plus, "p_minus": p_minus}
    if n < 2:
        return _invalid(inputs, "need at least two assets")
    if not 0.0 < phi < 1.0 / n:
        return _invalid(inputs, "phi must lie in (0, 1/n)")
    if not 0.0 < eps <= K:
        return _invalid(inputs, "need 0 < eps <= K")
    lo_minus = math.log(n) / math.log(n * phi)
    if not lo_minus < p_minus < 0.0:
        return _invalid(inputs, f"p_minus must lie in ({lo_minus:.6f}, 0)")
    plus_lo = max(0.0, 1.0 - eps * (n - (n * phi) ** p_minus) * (1.0 - p_minus) / (4.0 * K * (n - 1)))
    rng = (plus_lo, 1.0)
    c = 0.5 * eps * (1.0 - (n * phi) ** p_minus / n) * (1.0 - p_minus) - (
        2.0 * K / n
    ) * (n - 1) * (1.0 - p_plus)
    inputs["C"] = c
    threshold = -2.0 * math.log(n * phi) / c if c != 0 else math.inf
    if not plus_lo < p_plus < 1.0:
        return _invalid(inputs, f"p_plus must lie in ({plus_lo:.6f}, 1)", rng, threshold)
    if c <= 0:
        return _invalid(inputs, f"constant C = {c:.6g} is not positive", rng, threshold)
    return HorizonBound(threshold_T=threshold, valid=True, parameter_range=rng, inputs=inputs)


def horizon_prop4(n: int, delta: float, eps: float, p_plus: float, p_minus: float) -> HorizonBound:
    """Mixed diversity portfolio vs. the market under diversity delta.

    T > 2 (1 + n^(1/p- - 1)) log(n^(1/p+ - 1) + n^(1/p- - 1)) / (eps delta (1 - p+)).
    """
    inputs = {"n": n, "delta": delta, "eps": eps, "p_plus": p_plus, "p_minus": p_minus}
    if n < 2:
        return _invalid(inputs, "need at least two assets")
    if not 0.0 < delta < 1.0:
        return _invalid(inputs, "delta must lie in (0, 1)")
    if eps <= 0:
        return _invalid(inputs, "eps must be positive")
    rng = (0.0, 1.0)
    if not 0.0 < p_plus < 1.0:
        return _invalid(inputs, "p_plus must lie in (0, 1)", rng)
    if not p_minus < 0.0:
        return _invalid(inputs, "p_minus must be negative", rng)
    small = float(n) ** (1.0 / p_minus - 1.0)
    big = float(n) ** (1.0 / p_plus - 1.0)
    threshold = 2.0 * (1.0 + small) * math.log(big + small) / (eps * delta * (1.0 - p_plus))
    return HorizonBound(threshold_T=threshold, valid=True, parameter_range=rng, inputs=inputs)


def lf_from_diversity(n: int, delta: float) -> tuple[int, float]:
    """Limited-failure parameters implied by diversity delta.

    m = floor(1 / (1 - delta)) and kappa = (1 - (m-1)(1-delta)) / (n - (m-1)),
    which always satisfies kappa < 1/m.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    x = 1.0 / (1.0 - delta)
    if n <= x:
        raise DomainError(f"need n > 1/(1-delta) = {x:.6g}")
    m = int(math.floor(x + 1e-12))
    kappa = (1.0 - (m - 1) * (1.0 - delta)) / (n - (m - 1))
    return m, kappa
