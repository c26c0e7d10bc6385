"""Exact limit performance of a stationary Markov policy.

In the limit the tolerant queue is an M/M/1 queue whose server speed depends
on its occupancy. Everything below is closed form: eventually-constant inputs
give geometric tails, which are summed exactly rather than truncated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PreconditionViolation, Unstable
from .model import EventuallyConstantSeq, PolicySpec, ServiceRateProfile, SystemParams, validate_params

DEFAULT_EPS_TOL = 1e-12
LOG_SPACE_BELOW = 1e-3


@dataclass(frozen=True)
class StationaryDistribution:
    """Limit occupancy law, reported up to ``truncation_index``.

    Beyond the last reported state the law is geometric with ratio
    ``tail_ratio``; ``tail_mass_bound`` is that remaining mass.
    """

    probs: np.ndarray
    tail_mass_bound: float
    truncation_index: int
    tail_ratio: float

    def __post_init__(self) -> None:
        self.probs.setflags(write=False)

    def total(self) -> float:
        return math.fsum(self.probs) + self.tail_mass_bound

    def head(self, n: int) -> np.ndarray:
        """Probabilities of states 0..n-1, continuing the geometric tail past the truncation."""
        return _extend(self.probs, self.tail_ratio, n)


def _extend(probs: np.ndarray, ratio: float, n: int) -> np.ndarray:
    if n <= len(probs):
        return probs[:n].copy()
    k = np.arange(1, n - len(probs) + 1, dtype=float)
    return np.concatenate((probs, probs[-1] * ratio**k))


@dataclass(frozen=True)
class EmbeddedDistribution:
    """Occupancy law sampled just after tolerant arrivals and departures."""

    probs: np.ndarray
    tail_mass_bound: float
    tail_ratio: float

    def __post_init__(self) -> None:
        self.probs.setflags(write=False)

    @property
    def truncation_index(self) -> int:
        return len(self.probs) - 1

    def total(self) -> float:
        return math.fsum(self.probs) + self.tail_mass_bound

    def head(self, n: int) -> np.ndarray:
        return _extend(self.probs, self.tail_ratio, n)


def service_profile(policy: PolicySpec, params: SystemParams) -> ServiceRateProfile:
    validate_params(params)
    rho_eps = params.rho_eps
    nu = policy.d.map(lambda d: 1.0 - rho_eps * (1.0 - d))
    return ServiceRateProfile(nu, params.lambda_tau, params.mu_tau)


def stability_check(profile: ServiceRateProfile, delta_tau: float = 0.0) -> bool:
    return profile.rho.sup() < 1.0 - delta_tau


def _geometric_law(
    head: Sequence[float], ratio: float, eps_tol: float, log_space: bool
) -> tuple[np.ndarray, float, int]:
    """Normalize weights ``head[0..M]`` followed by ``head[M] * ratio**k``.

    With ``log_space`` the head holds log-weights. Returns the probabilities up
    to the truncation index T >= M, the exact remaining mass and T.
    """
    M = len(head) - 1
    log_ratio = math.log(ratio)
    log_geo = math.log(ratio) - math.log1p(-ratio)  # log(r/(1-r))
    if log_space:
        logs = np.asarray(head, dtype=float)
        top = logs.max()
        scaled = np.exp(logs - top)
        log_z = top + math.log(math.fsum(scaled) + scaled[-1] * math.exp(log_geo))
        log_last = logs[-1] - log_z
        head_probs = np.exp(logs - log_z)
    else:
        w = np.asarray(head, dtype=float)
        z = math.fsum(w) + w[-1] * ratio / (1.0 - ratio)
        head_probs = w / z
        log_last = math.log(head_probs[-1]) if head_probs[-1] > 0 else -math.inf

    # smallest k >= 0 with  p_M * r**(k+1) / (1-r) <= eps_tol
    if log_last == -math.inf:
        k = 0
    else:
        need = (math.log(eps_tol) - log_last - log_geo) / log_ratio
        k = max(0, math.ceil(need))
        while k > 0 and log_last + log_geo + (k - 1) * log_ratio <= math.log(eps_tol):
            k -= 1
        while log_last + log_geo + k * log_ratio > math.log(eps_tol):
            k += 1
    T = M + k
    probs = np.empty(T + 1)
    probs[: M + 1] = head_probs
    if k:
        probs[M + 1 :] = head_probs[-1] * ratio ** np.arange(1, k + 1, dtype=float)
    tail = probs[-1] * ratio / (1.0 - ratio)
    return probs, float(tail), T


def stationary_distribution(
    profile: ServiceRateProfile, eps_tol: float = DEFAULT_EPS_TOL
) -> StationaryDistribution:
    if not stability_check(profile, 0.0):
        raise Unstable(f"sup of per-state loads is {profile.rho.sup()!r} >= 1")
    rho = profile.rho
    M = max(rho.m, 0)
    loads = np.array([rho[i] for i in range(1, M + 1)], dtype=float)
    log_space = rho.inf() < LOG_SPACE_BELOW
    if log_space:
        head = np.concatenate(([0.0], np.cumsum(np.log(loads))))
    else:
        head = np.concatenate(([1.0], np.cumprod(loads)))
    probs, tail, T = _geometric_law(head, rho.tail, eps_tol, log_space)
    return StationaryDistribution(probs, tail, T, rho.tail)


def _tail_first_moment(p_last: float, T: int, r: float) -> float:
    """sum_{k>=1} (T+k) * p_last * r**k."""
    return p_last * (T * r / (1.0 - r) + r / (1.0 - r) ** 2)


def expected_number(dist: StationaryDistribution, profile: ServiceRateProfile | None = None) -> float:
    T = dist.truncation_index
    body = math.fsum(np.arange(T + 1) * dist.probs)
    return body + _tail_first_moment(dist.probs[-1], T, dist.tail_ratio)


def limit_blocking(policy: PolicySpec, dist: StationaryDistribution) -> float:
    T = dist.truncation_index
    if policy.d.m > T:
        raise PreconditionViolation("policy prefix extends past the distribution's truncation index")
    d = policy.d.head(T + 1)
    return math.fsum(d * dist.probs) + policy.d.tail * dist.tail_mass_bound


def policy_performance(
    policy: PolicySpec, params: SystemParams, eps_tol: float = DEFAULT_EPS_TOL
) -> tuple[float, float]:
    """(expected tolerant number, eager blocking) of ``policy`` in the limit."""
    profile = service_profile(policy, params)
    dist = stationary_distribution(profile, eps_tol)
    return expected_number(dist, profile), limit_blocking(policy, dist)


def limit_transition_probs(profile: ServiceRateProfile, j: int) -> tuple[float, float]:
    """Up/down probabilities of the limit embedded chain in state ``j``.

    State 0 has no departures, so it always moves up.
    """
    if j < 0:
        raise IndexError(f"negative state {j}")
    if j == 0:
        return 1.0, 0.0
    lam = profile.lambda_tau
    p = lam / (lam + profile.nu[j] * profile.mu_tau)
    return p, 1.0 - p


def embedded_from_continuous(dist: StationaryDistribution) -> EmbeddedDistribution:
    pi = dist.probs
    r = dist.tail_ratio
    out = np.empty(len(pi) + 1)
    out[0] = 0.5 * pi[0]
    out[1:-1] = 0.5 * (pi[:-1] + pi[1:])
    out[-1] = 0.5 * (pi[-1] + pi[-1] * r)
    tail = dist.tail_mass_bound - 0.5 * pi[-1] * r
    return EmbeddedDistribution(out, max(tail, 0.0), r)


def _check_pair(p: float, q: float, state: int) -> None:
    if not (0.0 < p < 1.0) or not (0.0 < q < 1.0) or abs(p + q - 1.0) > 1e-12:
        raise PreconditionViolation(f"invalid transition pair (p={p!r}, q={q!r}) at state {state}")


def embedded_prelimit_distribution(
    prefix: Sequence[tuple[float, float]],
    tail: tuple[float, float],
    eps_tol: float = DEFAULT_EPS_TOL,
) -> EmbeddedDistribution:
    """Stationary law of the tolerant birth-death chain at transition epochs.

    ``prefix[k]`` is ``(p, q)`` for state ``k + 1``; ``tail`` applies to every
    later state. State 0 always moves up.
    """
    for k, (p, q) in enumerate(prefix):
        _check_pair(p, q, k + 1)
    _check_pair(tail[0], tail[1], len(prefix) + 1)
    r = tail[0] / tail[1]
    if r >= 1.0:
        raise Unstable(f"tail up/down ratio {r!r} >= 1")
    pairs = list(prefix) + [tail]
    # weight of state i is p_0...p_{i-1} / (q_1...q_i), with p_0 = 1
    ratios = [1.0 / pairs[0][1]] + [pairs[i - 1][0] / pairs[i][1] for i in range(1, len(pairs))]
    log_space = min(ratios) < LOG_SPACE_BELOW
    if log_space:
        head = np.concatenate(([0.0], np.cumsum(np.log(ratios))))
    else:
        head = np.concatenate(([1.0], np.cumprod(ratios)))
    probs, mass, _ = _geometric_law(head, r, eps_tol, log_space)
    return EmbeddedDistribution(probs, mass, r)


def limit_pq_sequence(profile: ServiceRateProfile) -> tuple[list[tuple[float, float]], tuple[float, float]]:
    """Limit transition pairs in the ``(prefix, tail)`` layout of the pre-limit solver."""
    last = max(profile.nu.m, 0)
    prefix = [limit_transition_probs(profile, j) for j in range(1, last + 1)]
    return prefix, limit_transition_probs(profile, last + 1)


def h_products(rho: EventuallyConstantSeq, n: int) -> np.ndarray:
    """``h_0 = 1`` and ``h_i = rho_1 ... rho_i`` for i < n."""
    loads = rho.head(n)[1:]
    return np.concatenate(([1.0], np.cumprod(loads)))


def load_moments(rho: EventuallyConstantSeq) -> tuple[float, float]:
    """``(sum_i h_i, sum_i i*h_i)`` over all states, tails in closed form."""
    if rho.tail >= 1.0:
        raise Unstable(f"tail load {rho.tail!r} >= 1")
    M = max(rho.m, 0)
    h = h_products(rho, M + 1)
    t = rho.tail
    z = math.fsum(h) + h[-1] * t / (1.0 - t)
    first = math.fsum(np.arange(M + 1) * h) + h[-1] * (M * t / (1.0 - t) + t / (1.0 - t) ** 2)
    return z, first


def batch_performance(
    d_prefix: np.ndarray, d_tail: np.ndarray, params: SystemParams
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized limit (E[N], P_B) for many policies sharing one prefix length.

    Row ``k`` of ``d_prefix`` holds ``d_0..d_{m}`` of policy ``k``; ``d_tail[k]``
    applies beyond. Tails are summed in closed form; unstable rows give ``nan``.
    """
    validate_params(params)
    d_prefix = np.atleast_2d(np.asarray(d_prefix, dtype=float))
    d_tail = np.asarray(d_tail, dtype=float).reshape(-1)
    lam, mu, re = params.lambda_tau, params.mu_tau, params.rho_eps
    n, width = d_prefix.shape
    if width == 0:
        d_prefix = d_tail[:, None].copy()
        width = 1
    rho = lam / (mu * (1.0 - re * (1.0 - d_prefix)))
    t = lam / (mu * (1.0 - re * (1.0 - d_tail)))
    h = np.ones((n, width))
    if width > 1:
        h[:, 1:] = np.cumprod(rho[:, 1:], axis=1)
    M = width - 1
    idx = np.arange(width)
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = t / (1.0 - t)
        z = h.sum(axis=1) + h[:, -1] * geo
        first = (idx * h).sum(axis=1) + h[:, -1] * (M * geo + t / (1.0 - t) ** 2)
        block = (d_prefix * h).sum(axis=1) + d_tail * h[:, -1] * geo
        unstable = (t >= 1.0) | (rho.max(axis=1) >= 1.0)
        en = np.where(unstable, np.nan, first / z)
        pb = np.where(unstable, np.nan, block / z)
    return en, pb
