"""Grid certification of variance-to-mean ratio bounds for capped functionals.

Provides the corrected ratio Var/(max{ab, sqrt(a)*b, sqrt(ab)} * E), the
uncorrected ratio Var/E together with a deterministic counterexample search
showing it is unbounded, the plain-indicator ratio Var[X 1(X>=4)]/E[X 1(X>=4)],
the capped-mean lower-envelope ratio E / min(lam*sqrt(min(lam,a)*min(lam,b)),
lam^4), and the closed-form comparison function whose positive infimum backs
the small-count tail argument.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .poisson_core import (
    DEFAULT_TOL,
    DENOMINATOR_FLOOR,
    CappedFunctional,
    TruncationError,
    expectation,
    plain_indicator_moments,
    variance,
)


class SkippedPoint(Exception):
    """Denominator below the floor: both sides vanish, the ratio is vacuous."""


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid: rates, cap pairs (a <= b), and engine tolerance."""

    lambda_points: tuple
    cap_pairs: tuple
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.lambda_points or not self.cap_pairs:
            raise ValueError("grid must have at least one rate and one cap pair")
        if any(not math.isfinite(l) for l in self.lambda_points):
            raise ValueError("rates must be finite")
        for a, b in self.cap_pairs:
            if not (a >= 0 and b >= 0 and a <= b):
                raise ValueError(f"cap pair must satisfy 0 <= a <= b, got {(a, b)}")


@dataclass(frozen=True)
class RatioRecord:
    lam: float
    cap_a: float
    cap_b: float
    numerator: float
    denominator: float
    ratio: float

    def key(self):
        return (self.lam, self.cap_a, self.cap_b)


@dataclass
class RatioCertificate:
    """Result of a grid sweep: per-point ratios plus observed extrema."""

    which: str
    tol: float
    records: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    sup_ratio: float = math.nan
    inf_ratio: float = math.nan
    arg_sup: tuple = None
    arg_inf: tuple = None

    def to_json_dict(self) -> dict:
        return {
            "which": self.which,
            "tol": self.tol,
            "sup_ratio": self.sup_ratio,
            "inf_ratio": self.inf_ratio,
            "arg_sup": list(self.arg_sup) if self.arg_sup else None,
            "arg_inf": list(self.arg_inf) if self.arg_inf else None,
            "records": [
                {
                    "lambda": r.lam,
                    "a": r.cap_a,
                    "b": r.cap_b,
                    "numerator": r.numerator,
                    "denominator": r.denominator,
                    "ratio": r.ratio,
                }
                for r in self.records
            ],
            "skipped": [
                {"lambda": lam, "a": a, "b": b, "reason": reason}
                for (lam, a, b, reason) in self.skipped
            ],
        }

    def write_csv(self, stream) -> None:
        stream.write("lambda,a,b,numerator,denominator,ratio\n")
        for r in self.records:
            stream.write(
                f"{r.lam!r},{r.cap_a!r},{r.cap_b!r},"
                f"{r.numerator!r},{r.denominator!r},{r.ratio!r}\n"
            )


def correction_factor(a: float, b: float) -> float:
    """max{ab, sqrt(a)*b, sqrt(ab)} evaluated with canonical a <= b order."""
    a, b = min(a, b), max(a, b)
    return max(a * b, math.sqrt(a) * b, math.sqrt(a * b))


def _variance_and_mean(lam, a, b, tol):
    f = CappedFunctional(lam, a, b)
    var = variance(f, tol)
    mean = expectation(f, tol)
    return var.value, mean.value


def corrected_ratio(lam, a, b, tol=DEFAULT_TOL):
    """Var / (max{ab, sqrt(a)*b, sqrt(ab)} * E); returns (ratio, num, den)."""
    a, b = min(a, b), max(a, b)
    var, mean = _variance_and_mean(lam, a, b, tol)
    den = correction_factor(a, b) * mean
    if den < DENOMINATOR_FLOOR:
        raise SkippedPoint(f"denominator {den} below floor at {(lam, a, b)}")
    return var / den, var, den


def original_ratio(lam, a, b, tol=DEFAULT_TOL):
    """Plain Var / E ratio (the uncorrected, falsifiable bound)."""
    var, mean = _variance_and_mean(lam, a, b, tol)
    if mean < DENOMINATOR_FLOOR:
        raise SkippedPoint(f"mean {mean} below floor at {(lam, a, b)}")
    return var / mean


@dataclass(frozen=True)
class WitnessSearch:
    """Outcome of the deterministic unbounded-ratio search."""

    found: bool
    lam: float
    cap_a: float
    cap_b: float
    ratio: float
    trail: tuple  # ((k, lam, ratio), ...) along the schedule a=b=k, lam=100k^2


def find_counterexample(target_ratio: float, k_max: int = 2**20) -> WitnessSearch:
    """Search the schedule a=b=k, lam=100*k^2 (k doubling from 4) for a point
    whose plain Var/E ratio reaches the target.

    The normal approximation at lam >> b makes the ratio scale like
    sqrt(a*b) = k, so the search terminates for any reachable target; budget
    or summation-engine exhaustion returns the best witness found.
    """
    if target_ratio <= 0:
        raise ValueError("target ratio must be positive")
    trail = []
    best = None
    k = 4
    while k <= k_max:
        lam = 100.0 * k * k
        try:
            ratio = original_ratio(lam, float(k), float(k))
        except TruncationError:
            break
        trail.append((k, lam, ratio))
        if best is None or ratio > best[2]:
            best = (k, lam, ratio)
        if ratio >= target_ratio:
            return WitnessSearch(True, lam, float(k), float(k), ratio, tuple(trail))
        k *= 2
    if best is None:
        return WitnessSearch(False, math.nan, math.nan, math.nan, math.nan, ())
    return WitnessSearch(
        False, best[1], float(best[0]), float(best[0]), best[2], tuple(trail)
    )


def indicator_ratio(lam: float, tol: float = DEFAULT_TOL) -> float:
    """Var[X 1(X>=4)] / E[X 1(X>=4)]."""
    if lam <= 0:
        raise SkippedPoint("rate must be positive for a nonvacuous ratio")
    mean, var = plain_indicator_moments(lam, tol)
    if mean.value < DENOMINATOR_FLOOR:
        raise SkippedPoint(f"indicator mean below floor at lam={lam}")
    return var.value / mean.value


def mean_lower_ratio(lam: float, a, b, tol: float = DEFAULT_TOL) -> float:
    """E[f(X)] / min(lam*sqrt(min(lam,a)*min(lam,b)), lam^4), integer caps >= 2."""
    for cap in (a, b):
        if cap != int(cap) or cap < 2:
            raise ValueError(f"caps must be integers >= 2, got {cap}")
    if lam <= 0:
        raise SkippedPoint("rate must be positive")
    den = min(lam * math.sqrt(min(lam, a) * min(lam, b)), lam**4)
    if den < DENOMINATOR_FLOOR:
        raise SkippedPoint(f"envelope below floor at lam={lam}")
    mean = expectation(CappedFunctional(lam, float(a), float(b)), tol)
    return mean.value / den


def h_function(lam: float) -> float:
    """min(lam, lam^4) / (E[X^4] * P(X <= 3)) in closed form.

    E[X^4] = lam^4 + 6 lam^3 + 7 lam^2 + lam and
    P(X <= 3) = (1 + lam + lam^2/2 + lam^3/6) e^{-lam}; the e^{-lam} factor
    is applied in log space so large rates do not underflow. The bound of
    interest concerns lam >= 1; smaller rates evaluate but are out of regime.
    """
    if lam <= 0:
        raise ValueError("rate must be positive")
    num = min(lam, lam**4)
    poly4 = (((lam + 6.0) * lam + 7.0) * lam + 1.0) * lam
    head = 1.0 + lam + lam * lam / 2.0 + lam**3 / 6.0
    log_den = math.log(poly4) + math.log(head) - lam
    try:
        return math.exp(math.log(num) - log_den)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class InfimumResult:
    value: float
    arg: float
    tail_certified: bool


def h_infimum(lambda_max: float = 60.0, grid_points: int = 10**4) -> InfimumResult:
    """Infimum of h on [1, lambda_max]: coarse grid plus golden-section
    refinement around the interior minimizer.

    The tail beyond the minimizer is certified by discrete-derivative
    positivity: the grid differences must turn positive and stay positive
    for at least 10 consecutive steps through the end of the grid.
    """
    if lambda_max < 1.0:
        raise ValueError("lambda_max must be >= 1")
    if grid_points < 2:
        raise ValueError("need at least 2 grid points")
    grid = np.linspace(1.0, lambda_max, grid_points)
    vals = np.array([h_function(x) for x in grid])
    i = int(np.argmin(vals))
    value, arg = float(vals[i]), float(grid[i])
    if 0 < i < grid_points - 1:
        res = minimize_scalar(
            h_function,
            bracket=(grid[i - 1], grid[i], grid[i + 1]),
            method="golden",
            options={"xtol": 1e-12},
        )
        if res.fun < value:
            value, arg = float(res.fun), float(res.x)

    diffs = np.diff(vals[i:])
    positive = diffs > 0
    tail_certified = False
    if len(positive) >= 10:
        run = 0
        for j, pos in enumerate(positive):
            run = run + 1 if pos else 0
            if run >= 10 and bool(np.all(positive[j - run + 1 :])):
                tail_certified = True
                break
    return InfimumResult(value, arg, tail_certified)


_DEFAULT_CAPS = (0.5, 1.0, 2.0, 4.0, 16.0, 64.0, 256.0)
_DEFAULT_INT_CAPS = (2, 4, 16, 64, 256)


def default_grid(which: str, tol: float = DEFAULT_TOL) -> GridSpec:
    """Default sweep grids: 25 log-spaced rates in [1e-2, 1e4]; geometric caps."""
    lambdas = tuple(float(v) for v in np.geomspace(1e-2, 1e4, 25))
    if which == "claim21":
        pairs = ((math.inf, math.inf),)
        return GridSpec(lambdas, pairs, tol)
    if which == "claim23":
        caps = _DEFAULT_INT_CAPS
    else:
        caps = _DEFAULT_CAPS
    pairs = tuple(
        (float(a), float(b)) for i, a in enumerate(caps) for b in caps[i:]
    )
    return GridSpec(lambdas, pairs, tol)


def _eval_point(which, lam, a, b, tol):
    try:
        if which == "corrected":
            ratio, num, den = corrected_ratio(lam, a, b, tol)
        elif which == "original":
            var, mean = _variance_and_mean(lam, a, b, tol)
            if mean < DENOMINATOR_FLOOR:
                raise SkippedPoint(f"mean below floor at {(lam, a, b)}")
            num, den, ratio = var, mean, var / mean
        elif which == "claim21":
            mean, var = plain_indicator_moments(lam, tol)
            if mean.value < DENOMINATOR_FLOOR:
                raise SkippedPoint(f"indicator mean below floor at lam={lam}")
            num, den, ratio = var.value, mean.value, var.value / mean.value
        elif which == "claim23":
            ratio = mean_lower_ratio(lam, a, b, tol)
            den = min(lam * math.sqrt(min(lam, a) * min(lam, b)), lam**4)
            num = ratio * den
        else:
            raise ValueError(f"unknown sweep kind {which!r}")
    except SkippedPoint as exc:
        return ("skipped", str(exc))
    except (TruncationError, ValueError) as exc:
        return ("error", f"{type(exc).__name__}: {exc}")
    return ("ok", num, den, ratio)


def sweep(grid: GridSpec, which: str, threads: int = 1) -> RatioCertificate:
    """Evaluate the chosen ratio at every grid point.

    Point evaluation may be parallel; record assembly and extremum selection
    run in a single deterministic pass over the point index order, with
    ratio ties broken by the lexicographically smallest (lambda, a, b).
    """
    if which not in ("corrected", "original", "claim21", "claim23"):
        raise ValueError(f"unknown sweep kind {which!r}")
    points = [
        (lam, a, b) for lam in grid.lambda_points for (a, b) in grid.cap_pairs
    ]
    if which == "claim21":
        points = [(lam, math.inf, math.inf) for lam in grid.lambda_points]

    def run(pt):
        return _eval_point(which, pt[0], pt[1], pt[2], grid.tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, points))
    else:
        outcomes = [run(pt) for pt in points]

    cert = RatioCertificate(which=which, tol=grid.tol)
    for (lam, a, b), outcome in zip(points, outcomes):
        if outcome[0] == "ok":
            _, num, den, ratio = outcome
            cert.records.append(RatioRecord(lam, a, b, num, den, ratio))
        else:
            cert.skipped.append((lam, a, b, outcome[1]))

    if cert.records:
        sup = max(r.ratio for r in cert.records)
        inf = min(r.ratio for r in cert.records)
        cert.sup_ratio = sup
        cert.inf_ratio = inf
        cert.arg_sup = min(
            (r for r in cert.records if r.ratio == sup), key=RatioRecord.key
        ).key()
        cert.arg_inf = min(
            (r for r in cert.records if r.ratio == inf), key=RatioRecord.key
        ).key()
    return cert


def plateau_check(
    cap_pairs, lam_lo: float = 1e3, lam_hi: float = 1e4,
    rel_tol: float = 0.10, tol: float = DEFAULT_TOL,
) -> bool:
    """Corrected-ratio plateau: for each pair with a, b >= 1 the ratio moves
    by less than rel_tol (relative) between lam_lo and lam_hi."""
    for a, b in cap_pairs:
        if min(a, b) < 1.0:
            continue
        r_lo, _, _ = corrected_ratio(lam_lo, a, b, tol)
        r_hi, _, _ = corrected_ratio(lam_hi, a, b, tol)
        if abs(r_hi - r_lo) / r_lo >= rel_tol:
            return False
    return True
