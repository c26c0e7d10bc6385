"""Limit Pareto frontier between eager blocking and tolerant occupancy.

The frontier is traced by two-level threshold policies: best blocking level
below a threshold state L, an intermediate level d at L, worst level above.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .analytics import batch_performance, h_products, load_moments
from .errors import ClampWarning, Infeasible, RatioMonotonicityWarning, SearchCapExceeded, Unstable
from .model import EventuallyConstantSeq, PolicySpec, SystemParams, validate_params

INFINITE = math.inf
L_MAX = 10**6


@dataclass(frozen=True)
class LoadBounds:
    rho_max: float
    rho_min: float

    @property
    def min_expected_n(self) -> float:
        return self.rho_min / (1.0 - self.rho_min)

    @property
    def max_expected_n(self) -> float:
        return self.rho_max / (1.0 - self.rho_max)


@dataclass(frozen=True)
class ThresholdPolicy:
    """``d_min`` in states < L, ``d`` in state L, ``d_max`` above; L may be ``INFINITE``."""

    L: float
    d: float

    def __post_init__(self) -> None:
        if not (self.L == INFINITE or (int(self.L) == self.L and self.L >= 1)):
            raise ValueError(f"threshold must be a positive integer or INFINITE, got {self.L!r}")

    @property
    def is_infinite(self) -> bool:
        return self.L == INFINITE

    def to_policy_spec(self, d_min: float, d_max: float) -> PolicySpec:
        if self.is_infinite:
            return PolicySpec.constant(d_min, d_min, d_max)
        L = int(self.L)
        return PolicySpec.from_levels([d_min] * L + [self.d], d_max, d_min, d_max)


@dataclass(frozen=True)
class FrontierPoint:
    expected_n: float
    blocking: float
    policy: ThresholdPolicy
    C: float | None = None


def _load(d: float, params: SystemParams) -> float:
    return params.lambda_tau / (params.mu_tau * (1.0 - params.rho_eps * (1.0 - d)))


def load_bounds(d_min: float, d_max: float, params: SystemParams) -> LoadBounds:
    validate_params(params)
    if not (0.0 <= d_min <= d_max <= 1.0):
        raise ValueError(f"need 0 <= d_min <= d_max <= 1, got ({d_min}, {d_max})")
    rho_max, rho_min = _load(d_min, params), _load(d_max, params)
    if rho_max >= 1.0:
        raise Unstable(f"worst-case tolerant load {rho_max!r} >= 1")
    return LoadBounds(rho_max, rho_min)


def threshold_policy_performance(
    tp: ThresholdPolicy, bounds: LoadBounds, params: SystemParams, d_min: float, d_max: float
) -> FrontierPoint:
    """Closed-form (E[N], P_B) of a threshold policy."""
    r, s = bounds.rho_max, bounds.rho_min
    if tp.is_infinite:
        return FrontierPoint(r / (1.0 - r), d_min, tp)
    L = int(tp.L)
    rho = _load(tp.d, params)
    if not math.isfinite(rho) or rho <= 0:
        raise Unstable(f"load at threshold state is {rho!r}")
    rL1 = r ** (L - 1)
    rL = rL1 * r
    geo = (rL - 1.0) / (r - 1.0)  # sum_{j<L} r^j
    above = s / (1.0 - s)
    psi = 1.0 / (geo + rho * rL1 + rho * rL1 * above)
    # sum_{j<L} j r^j = r(1-r^L)/(1-r)^2 - L r^L/(1-r)
    expected_n = psi * (
        r * (1.0 - rL) / (1.0 - r) ** 2
        - L * rL / (1.0 - r)
        + rho * rL1 * (s + L - L * s) / (1.0 - s) ** 2
    )
    blocking = psi * (tp.d * rho * rL1 + rho * d_max * rL1 * above + geo * d_min)
    return FrontierPoint(expected_n, blocking, tp)


def _search_ratio(r: float, s: float, C: float, cap: int) -> tuple[int, float, float]:
    """Largest i >= 0 whose all-best-up-to-i policy has E[N] < C.

    Returns ``(i, sum_{j<=i} r^j, sum_{j<=i} j r^j)``; i = -1 when none does.
    """
    above = s / (1.0 - s)
    above1 = s / (1.0 - s) ** 2
    sr, sjr, ri = 1.0, 0.0, 1.0
    prev = -math.inf
    i = 0
    best = (-1, 0.0, 0.0)
    while True:
        ratio = (sjr + ri * (i * above + above1)) / (sr + ri * above)
        if ratio < prev - 1e-12 * max(1.0, abs(prev)):
            warnings.warn(
                f"threshold ratio decreased at i={i}: {ratio!r} < {prev!r}", RatioMonotonicityWarning, stacklevel=3
            )
        if not ratio < C:
            return best
        best = (i, sr, sjr)
        prev = ratio
        i += 1
        if i > cap:
            raise SearchCapExceeded(f"threshold search passed L_MAX={cap} for C={C!r}")
        ri *= r
        sr += ri
        sjr += i * ri


def optimal_threshold(
    C: float, bounds: LoadBounds, d_min: float, d_max: float, params: SystemParams, l_max: int = L_MAX
) -> ThresholdPolicy:
    """Threshold policy minimizing eager blocking subject to E[N] <= C."""
    r, s = bounds.rho_max, bounds.rho_min
    if C < bounds.min_expected_n:
        raise Infeasible(f"C={C!r} is below the best achievable E[N]={bounds.min_expected_n!r}")
    if C >= bounds.max_expected_n:
        return ThresholdPolicy(INFINITE, d_min)
    i, sr, sjr = _search_ratio(r, s, C, l_max)
    if i < 0:
        return ThresholdPolicy(1, d_max)
    # constraint g = 0 is linear in the load at state i+1
    a = sjr - C * sr
    b = (i + 1 - C) / (1.0 - s) + s / (1.0 - s) ** 2
    lam, mu, re = params.lambda_tau, params.mu_tau, params.rho_eps
    rho_star = -a / (r**i * b)
    d_star = (lam / rho_star - mu * (1.0 - re)) / (mu * re)
    if d_star < d_min - 1e-9 or d_star > d_max + 1e-9:
        warnings.warn(f"closed-form level {d_star!r} outside [{d_min}, {d_max}]", ClampWarning, stacklevel=2)
    d_star = min(max(d_star, d_min), d_max)
    return ThresholdPolicy(i + 1, d_star)


def frontier_sweep(
    C_grid: Iterable[float], bounds: LoadBounds, d_min: float, d_max: float, params: SystemParams
) -> list[FrontierPoint]:
    points = []
    for C in C_grid:
        tp = optimal_threshold(C, bounds, d_min, d_max, params)
        pt = threshold_policy_performance(tp, bounds, params, d_min, d_max)
        points.append(FrontierPoint(pt.expected_n, pt.blocking, tp, float(C)))
    points.sort(key=lambda p: (p.expected_n, p.blocking))
    return points


def frontier_blocking_at(
    C: float, bounds: LoadBounds, d_min: float, d_max: float, params: SystemParams
) -> float:
    """Minimal limit blocking achievable with E[N] <= C."""
    tp = optimal_threshold(C, bounds, d_min, d_max, params)
    return threshold_policy_performance(tp, bounds, params, d_min, d_max).blocking


def threshold_grid_search(
    C: float,
    bounds: LoadBounds,
    d_min: float,
    d_max: float,
    params: SystemParams,
    L_values: Sequence[int],
    d_values: Sequence[float],
) -> tuple[float, float, ThresholdPolicy] | None:
    """Best feasible (L, d) over a grid, using the threshold closed form."""
    r, s = bounds.rho_max, bounds.rho_min
    L = np.asarray(L_values, dtype=float)[:, None]
    d = np.asarray(d_values, dtype=float)[None, :]
    rho = params.lambda_tau / (params.mu_tau * (1.0 - params.rho_eps * (1.0 - d)))
    rL1 = r ** (L - 1)
    rL = rL1 * r
    geo = (rL - 1.0) / (r - 1.0)
    above = s / (1.0 - s)
    psi = 1.0 / (geo + rho * rL1 + rho * rL1 * above)
    en = psi * (r * (1.0 - rL) / (1.0 - r) ** 2 - L * rL / (1.0 - r) + rho * rL1 * (s + L - L * s) / (1.0 - s) ** 2)
    pb = psi * (d * rho * rL1 + rho * d_max * rL1 * above + geo * d_min)
    pb = np.where(en <= C, pb, np.inf)
    k = np.argmin(pb)
    a, b = np.unravel_index(k, pb.shape)
    if not np.isfinite(pb[a, b]):
        return None
    return float(en[a, b]), float(pb[a, b]), ThresholdPolicy(int(L_values[a]), float(d_values[b]))


def _pick(en: np.ndarray, pb: np.ndarray, rows: np.ndarray, C: float) -> int | None:
    """Index of the feasible minimizer of (P_B, then lexicographic policy)."""
    ok = np.flatnonzero(np.isfinite(en) & (en <= C))
    if ok.size == 0:
        return None
    best = pb[ok].min()
    tied = ok[pb[ok] == best]
    if tied.size > 1:
        order = np.lexsort(rows[tied].T[::-1])
        return int(tied[order[0]])
    return int(tied[0])


def brute_force_optimum(
    C: float,
    d_grid: Sequence[float],
    max_state: int,
    params: SystemParams,
    max_candidates: int = 200_000,
) -> tuple[float, float, PolicySpec]:
    """Search monotone eventually-constant policies over ``d_grid``.

    Policies have prefix length ``max_state`` and a tail, all values from
    ``d_grid`` and nondecreasing. The search is exhaustive when the number of
    such policies is at most ``max_candidates``; otherwise a monotone
    coordinate descent starts from the best pure two-level threshold.
    """
    grid = np.unique(np.asarray(d_grid, dtype=float))
    width = max_state + 1
    count = math.comb(len(grid) + width - 1, width)
    if count <= max_candidates:
        rows = np.array(list(itertools.combinations_with_replacement(grid, width)), dtype=float).reshape(-1, width)
        en, pb = batch_performance(rows[:, :-1], rows[:, -1], params)
        k = _pick(en, pb, rows, C)
        if k is None:
            raise Infeasible(f"no monotone grid policy reaches E[N] <= {C!r}")
        best = rows[k]
    else:
        best = _coordinate_descent(C, grid, width, params)
    e, p = batch_performance(best[None, :-1], best[-1:], params)
    spec = PolicySpec.from_levels(best[:-1], best[-1], float(grid[0]), float(grid[-1]))
    return float(e[0]), float(p[0]), spec


def _coordinate_descent(C: float, grid: np.ndarray, width: int, params: SystemParams) -> np.ndarray:
    lo, hi = grid[0], grid[-1]
    starts = np.array([[lo] * L + [hi] * (width - L) for L in range(width + 1)], dtype=float)
    en, pb = batch_performance(starts[:, :-1], starts[:, -1], params)
    k = _pick(en, pb, starts, C)
    if k is None:
        raise Infeasible(f"no monotone grid policy reaches E[N] <= {C!r}")
    current, current_pb = starts[k].copy(), pb[k]
    improved = True
    while improved:
        improved = False
        for pos in range(width):
            left = current[pos - 1] if pos > 0 else -np.inf
            right = current[pos + 1] if pos + 1 < width else np.inf
            choices = grid[(grid >= left) & (grid <= right)]
            cand = np.repeat(current[None, :], len(choices), axis=0)
            cand[:, pos] = choices
            en, pb = batch_performance(cand[:, :-1], cand[:, -1], params)
            j = _pick(en, pb, cand, C)
            if j is not None and pb[j] < current_pb:
                current, current_pb = cand[j].copy(), pb[j]
                improved = True
    return current


# Objective/constraint pair of the equivalent load-space problem: maximize
# f = sum_i h_i subject to g = sum_i (i - C) h_i <= 0.


def objective_f(rho: EventuallyConstantSeq) -> float:
    return load_moments(rho)[0]


def constraint_g(rho: EventuallyConstantSeq, C: float) -> float:
    z, first = load_moments(rho)
    return first - C * z


def _expanded(rho: EventuallyConstantSeq, upto: int) -> list[float]:
    return list(rho.head(max(upto + 1, len(rho.prefix))))


def swap_components(rho: EventuallyConstantSeq, i: int) -> EventuallyConstantSeq:
    """Exchange the loads of states i and i+1."""
    vals = _expanded(rho, i + 1)
    vals[i], vals[i + 1] = vals[i + 1], vals[i]
    return EventuallyConstantSeq(tuple(vals), rho.tail)


def perturb_component(rho: EventuallyConstantSeq, i: int, eps: float) -> EventuallyConstantSeq:
    vals = _expanded(rho, i)
    vals[i] += eps
    return EventuallyConstantSeq(tuple(vals), rho.tail)


def epsilon_improvement(
    rho: EventuallyConstantSeq, i: int, C: float, rho_max: float, shrink: float = 0.5, max_halvings: int = 200
) -> tuple[float, EventuallyConstantSeq] | None:
    """Line search for eps > 0 raising the load of state i while keeping g <= 0."""
    eps = rho_max - rho[i]
    f0 = objective_f(rho)
    for _ in range(max_halvings):
        if eps <= 0:
            return None
        cand = perturb_component(rho, i, eps)
        if constraint_g(cand, C) <= 0 and objective_f(cand) > f0:
            return eps, cand
        eps *= shrink
    return None


def h_vector(rho: EventuallyConstantSeq, n: int) -> np.ndarray:
    return h_products(rho, n)
