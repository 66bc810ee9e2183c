"""Monte Carlo distortion tails, minimal-dimension search and scaling sweeps."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import _trials
from .core import InvalidArgument, Kind, TailEstimate
from .instances import ShiftedFamily, family_is_disjoint, hard_vector

Z95 = statistics.NormalDist().inv_cdf(0.975)


def wilson_interval(failures: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = failures / trials
    z2 = z * z
    denom = 1 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # Guard the endpoints against rounding at p = 0 or p = 1.
    return min(lo, p), max(hi, p)


def make_estimate(epsilon: float, m: int, trials: int, failures: int) -> TailEstimate:
    lo, hi = wilson_interval(failures, trials)
    return TailEstimate(float(epsilon), int(m), int(trials), int(failures), failures / trials, lo, hi)


def _check_epsilon(epsilon: float):
    if not 0 < epsilon < 1:
        raise InvalidArgument(f"epsilon must lie in (0, 1), got {epsilon}")


def estimate_tail(x, m: int, epsilon: float, trials: int, master_seed: int, kind=Kind.TOEPLITZ, workers=None) -> TailEstimate:
    """Estimate Pr[ | ||f(x)||^2 - 1 | > epsilon ] over ``trials`` realizations.

    Trial i uses stream i of ``master_seed``; the count is the same however the
    trials are scheduled across threads.
    """
    _check_epsilon(epsilon)
    if trials < 1:
        raise InvalidArgument(f"trials must be positive, got {trials}")
    x = np.asarray(x, dtype=np.float64)
    if abs(float(np.linalg.norm(x)) - 1.0) > 1e-9:
        raise InvalidArgument("x must be a unit vector")
    failures = _trials.count_failures(x, m, kind, epsilon, master_seed, trials, workers)
    return make_estimate(epsilon, m, trials, failures)


def hard_tail(k: int, m: int, epsilon: float, trials: int, master_seed: int, kind=Kind.TOEPLITZ,
              sign_seed: int = 0, workers=None) -> TailEstimate:
    """estimate_tail on the hard vector with parameter k, embedded in n = 4k + m.

    Only the first 4k coordinates are nonzero, and n = 4k + m keeps every
    matrix family in its m <= n regime with no circulant wrap-around.
    """
    x = hard_vector(k, 4 * k + m, sign_seed).x
    return estimate_tail(x, m, epsilon, trials, master_seed, kind, workers)


def candidate_ks(m: int) -> list[int]:
    """Even k with k <= sqrt(m) and k <= m/4 - 1; [2] when none qualifies."""
    limit = min(math.isqrt(m), m // 4 - 1)
    ks = list(range(2, limit + 1, 2))
    return ks or [2]


def min_m_for(epsilon: float, delta: float, kind=Kind.TOEPLITZ, trials: int = 10_000, seed: int = 0,
              m_max: int = 4096, workers=None) -> int | None:
    """Smallest m whose worst hard instance fails with probability <= delta.

    An m passes when, for every candidate k, the upper end of the Wilson
    interval is at most delta.  m is searched by doubling, then bisection
    between the last failing and first passing value.  Returns None when no
    m <= m_max passes.
    """
    _check_epsilon(epsilon)
    if not 0 < delta <= 1:
        raise InvalidArgument(f"delta must lie in (0, 1], got {delta}")
    if trials < 100 / delta:
        raise InvalidArgument(f"trials={trials} cannot resolve delta={delta}; need at least {math.ceil(100 / delta)}")

    cache: dict[int, bool] = {}

    def passes(m: int) -> bool:
        if m not in cache:
            cache[m] = all(
                hard_tail(k, m, epsilon, trials, seed, kind, workers=workers).ci_high <= delta
                for k in candidate_ks(m)
            )
        return cache[m]

    lo, hi = 0, None  # lo: largest m known to fail (0 = none)
    m = 1
    while m <= m_max:
        if passes(m):
            hi = m
            break
        lo = m
        m *= 2
    if hi is None:
        if lo < m_max and passes(m_max):
            hi = m_max
        else:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class SweepRow:
    transform: str
    epsilon: float
    m: int
    k_used: int
    trials: int
    failures: int
    p_hat: float
    ci_low: float
    ci_high: float
    seed: int
    wall_time: float = 0.0
    c0: float = 1.0
    skipped: bool = False


def sweep_k(epsilon: float, m: int, c0: float = 1.0) -> int:
    """Even k from k = c0 * epsilon * sqrt(m), rounded down, never below 2."""
    return max(2, 2 * math.floor(c0 * epsilon * math.sqrt(m) / 2))


def scaling_sweep(kind, epsilon: float, m_grid, trials: int, seed: int, c0_grid=(1.0,),
                  timing: bool = False, workers=None) -> list[SweepRow]:
    """One row per (m, c0) with the hard instance rebuilt for each m.

    Rows whose k violates k < m/4 are returned with ``skipped=True``.
    Wall time is recorded only when ``timing`` is set, so output stays
    reproducible by default.
    """
    _check_epsilon(epsilon)
    kind = Kind(kind)
    grid = [int(v) for v in m_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgument("m-grid must be strictly increasing")
    rows = []
    for m in grid:
        for c0 in c0_grid:
            k = sweep_k(epsilon, m, c0)
            if 4 * k >= m:
                rows.append(SweepRow(kind.value, epsilon, m, k, 0, 0, 0.0, 0.0, 1.0, seed, 0.0, c0, True))
                continue
            started = time.perf_counter()
            est = hard_tail(k, m, epsilon, trials, seed, kind, workers=workers)
            elapsed = time.perf_counter() - started if timing else 0.0
            rows.append(SweepRow(kind.value, epsilon, m, k, est.trials, est.failures, est.p_hat,
                                 est.ci_low, est.ci_high, seed, elapsed, c0))
    return rows


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    points: int


def fit_log_tail(rows, against: str = "sqrt", min_failures: int = 10) -> LinearFit | None:
    """Least-squares fit of lg(1/p_hat) against sqrt(m) or m.

    Only rows with at least ``min_failures`` failures take part; None when
    fewer than two remain.
    """
    use = [r for r in rows if not r.skipped and r.failures >= min_failures]
    if len(use) < 2:
        return None
    xs = np.array([math.sqrt(r.m) if against == "sqrt" else float(r.m) for r in use])
    ys = np.array([-math.log2(r.p_hat) for r in use])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2, len(use))


def pair_preserved(fx, fy, x, y, epsilon: float) -> bool:
    """Whether the distance between x and y survives f within factor 1 +/- epsilon."""
    image = np.asarray(fx, dtype=np.float64) - np.asarray(fy, dtype=np.float64)
    original = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return bool(_trials.within_distortion(float(image @ image), float(original @ original), epsilon))


def norm_preserved(fx, x, epsilon: float) -> bool:
    """The pair (x, 0): f(0) = 0, so this is exactly the norm condition."""
    fx = np.asarray(fx, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return pair_preserved(fx, np.zeros_like(fx), x, np.zeros_like(x), epsilon)


@dataclass(frozen=True)
class AllPairsResult:
    trials: int
    successes: int
    member_failures: tuple  # failure count of each nonzero member
    success_fraction: float
    p_bar: float
    predicted: float  # (1 - p_bar) ** N
    stderr: float  # propagated standard error of success_fraction - predicted

    @property
    def deviation(self) -> float:
        return self.success_fraction - self.predicted


def allpairs_experiment(family: ShiftedFamily, epsilon: float, trials: int, seed: int, kind=Kind.TOEPLITZ,
                        workers=None) -> AllPairsResult:
    """Embed every member of the family with one realization per trial.

    A trial succeeds when every pair (member, 0) keeps its distance, which is
    the norm condition for each nonzero member.  Any epsilon > 0 is accepted.
    """
    if not epsilon > 0:
        raise InvalidArgument(f"epsilon must be positive, got {epsilon}")
    if trials < 1:
        raise InvalidArgument("trials must be positive")
    if not family_is_disjoint(family):
        raise InvalidArgument("family members touch overlapping variables; their embeddings are not independent")
    plans = [_trials.make_plan(v, family.m, kind) for v in family.members]
    size = min(p.chunk_size() for p in plans)

    def run(first, count):
        ok = np.ones(count, dtype=bool)
        fails = []
        for plan in plans:
            good = _trials.within_distortion(_trials.chunk_sq(plan, seed, first, count), plan.original_sq, epsilon)
            fails.append(int(count - np.count_nonzero(good)))
            ok &= good
        return int(np.count_nonzero(ok)), fails

    parts = _trials.map_chunks(run, trials, size, workers)
    successes = sum(p[0] for p in parts)
    member_failures = tuple(sum(p[1][q] for p in parts) for q in range(len(plans)))
    n_members = len(plans)
    s_hat = successes / trials
    p_bar = sum(member_failures) / (n_members * trials)
    predicted = (1 - p_bar) ** n_members
    var_s = s_hat * (1 - s_hat) / trials
    var_pred = (n_members * (1 - p_bar) ** (n_members - 1)) ** 2 * p_bar * (1 - p_bar) / (n_members * trials)
    return AllPairsResult(trials, successes, member_failures, s_hat, p_bar, predicted, math.sqrt(var_s + var_pred))
