"""Exact and Monte Carlo moments of the Poissonized weighted statistic.

The statistic is sum_z sigma_z * sqrt(min(sigma_z, l1) * min(sigma_z, l2))
* w_z * 1(sigma_z >= 4) with independent sigma_z ~ Poisson(rate_z). Exact
moments reduce, by independence across z, to sums of per-slice capped
functional moments; the Monte Carlo harness and the two-step bound chain
check provide the cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ci_model import DStatisticModel
from .poisson_core import (
    DEFAULT_TOL,
    DENOMINATOR_FLOOR,
    CappedFunctional,
    expectation,
    variance,
)
from .inequality_lab import SkippedPoint


@dataclass(frozen=True)
class SliceMoments:
    z: int
    mean: float
    variance: float


@dataclass(frozen=True)
class DMoments:
    """Exact mean/variance, summed over slices by independence."""

    mean: float
    variance: float
    tail_bound: float
    per_z: tuple


@dataclass(frozen=True)
class MCResult:
    replications: int
    mean_hat: float
    var_hat: float
    se_mean: float
    se_var: float
    seed: int


def _slice_rng(seed: int, z: int) -> np.random.Generator:
    # Per-slice streams derived from the root seed keep every output
    # independent of evaluation order and thread count.
    return np.random.default_rng(np.random.SeedSequence([seed, z]))


def exact_moments(model: DStatisticModel, tol: float = DEFAULT_TOL) -> DMoments:
    """Per-slice capped-functional moments scaled by the slice weights."""
    per_z = []
    mean_parts, var_parts = [], []
    tail = 0.0
    for z in range(model.n):
        w = float(model.weights[z])
        rate = float(model.rates[z])
        if w == 0.0 or rate == 0.0:
            continue
        f = CappedFunctional(rate, float(model.cap_a), float(model.cap_b),
                             model.threshold)
        e = expectation(f, tol)
        v = variance(f, tol)
        mean_parts.append(w * e.value)
        var_parts.append(w * w * v.value)
        tail += w * e.tail_bound + w * w * v.tail_bound
        per_z.append(SliceMoments(z, w * e.value, w * w * v.value))
    return DMoments(math.fsum(mean_parts), math.fsum(var_parts), tail, tuple(per_z))


def _contribution(sigma, model: DStatisticModel, w: float):
    s = np.asarray(sigma, dtype=np.float64)
    return (
        w
        * s
        * np.sqrt(np.minimum(s, model.cap_a) * np.minimum(s, model.cap_b))
        * (s >= model.threshold)
    )


def sample_statistic(model: DStatisticModel, seed: int) -> float:
    """One seeded draw of the weighted statistic."""
    total = 0.0
    for z in range(model.n):
        w = float(model.weights[z])
        rate = float(model.rates[z])
        if w == 0.0 or rate == 0.0:
            continue
        sigma = _slice_rng(seed, z).poisson(rate)
        total += float(_contribution(sigma, model, w))
    return total


def mc_moments(model: DStatisticModel, replications: int, seed: int) -> MCResult:
    """Sample mean/variance over seeded replications, with standard errors
    from the same draws (variance SE via the fourth central moment)."""
    if replications < 2:
        raise ValueError("need at least 2 replications")
    totals = np.zeros(replications)
    for z in range(model.n):
        w = float(model.weights[z])
        rate = float(model.rates[z])
        if w == 0.0 or rate == 0.0:
            continue
        sigma = _slice_rng(seed, z).poisson(rate, size=replications)
        totals += _contribution(sigma, model, w)
    mean_hat = float(totals.mean())
    var_hat = float(totals.var(ddof=1))
    se_mean = math.sqrt(var_hat / replications)
    m4 = float(np.mean((totals - mean_hat) ** 4))
    r = replications
    se_var = math.sqrt(max(m4 - (r - 3.0) / (r - 1.0) * var_hat**2, 0.0) / r)
    return MCResult(replications, mean_hat, var_hat, se_mean, se_var, seed)


def variance_mean_ratio(model: DStatisticModel, tol: float = DEFAULT_TOL) -> float:
    """Var/E of the weighted statistic; degenerate models are skipped."""
    moments = exact_moments(model, tol)
    if moments.mean < DENOMINATOR_FLOOR:
        raise SkippedPoint("statistic mean below the denominator floor")
    return moments.variance / moments.mean


@dataclass(frozen=True)
class ChainCheck:
    """Numeric audit of the two-step variance bound.

    var_total <= c1_observed * mid_sum (per-slice capped ratio bound, with
    c1_observed the largest observed Var/(l1*l2*E)), and
    mid_sum <= mean_total / 4 exactly, because every weight is at most
    1/(4*l1*l2).
    """

    var_total: float
    mean_total: float
    mid_sum: float
    c1_observed: float
    first_step_ok: bool
    quarter_step_ok: bool


def bound_chain_check(model: DStatisticModel, tol: float = DEFAULT_TOL) -> ChainCheck:
    ll = float(model.cap_a * model.cap_b)
    var_parts, mean_parts, mid_parts = [], [], []
    c1 = 0.0
    for z in range(model.n):
        w = float(model.weights[z])
        rate = float(model.rates[z])
        if w == 0.0 or rate == 0.0:
            continue
        f = CappedFunctional(rate, float(model.cap_a), float(model.cap_b),
                             model.threshold)
        e_raw = expectation(f, tol).value
        v_raw = variance(f, tol).value
        var_parts.append(w * w * v_raw)
        mean_parts.append(w * e_raw)
        mid_parts.append(w * w * ll * e_raw)
        if e_raw > DENOMINATOR_FLOOR:
            c1 = max(c1, v_raw / (ll * e_raw))
    var_total = math.fsum(var_parts)
    mean_total = math.fsum(mean_parts)
    mid_sum = math.fsum(mid_parts)
    first_ok = var_total <= c1 * mid_sum * (1.0 + 1e-9) + 1e-300
    quarter_ok = mid_sum <= 0.25 * mean_total * (1.0 + 1e-12) + 1e-300
    return ChainCheck(var_total, mean_total, mid_sum, c1, first_ok, quarter_ok)
