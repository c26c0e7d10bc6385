"""Eager sub-policies and their tolerant-static blocking probabilities.

Under the short-frequent-jobs limit the only attribute of a sub-policy that
affects either class is its standalone blocking probability, so every
sub-policy here reduces to a single number via :func:`static_blocking`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.optimize import brentq

from .errors import EmptyCatalog, InvalidPolicy

# LPS admits only while strictly fewer than K eager jobs are in service, so at
# most K share the server (per-job rate >= 1/K). Setting this True admits at
# occupancy K as well, allowing K+1 concurrent jobs.
LPS_ADMIT_AT_CAP = False


def lps_capacity(K: int) -> int:
    """Maximum eager occupancy under LPS-(p, K)."""
    return K + 1 if LPS_ADMIT_AT_CAP else K


KINDS = ("cd", "lps", "direct")


@dataclass(frozen=True)
class SubPolicy:
    """One eager sub-policy.

    ``kind`` is ``"cd"`` (capacity division), ``"lps"`` (limited processor
    sharing) or ``"direct"`` (a bare blocking level ``d``).
    """

    kind: str
    p: float = 1.0
    K: int = 1
    d: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidPolicy(f"unknown sub-policy kind {self.kind!r}")
        if self.kind == "direct":
            if not (0.0 <= self.d <= 1.0):
                raise InvalidPolicy(f"direct blocking level {self.d!r} outside [0, 1]")
        else:
            if not (0.0 <= self.p <= 1.0):
                raise InvalidPolicy(f"admission probability {self.p!r} outside [0, 1]")
            if int(self.K) != self.K or self.K < 1:
                raise InvalidPolicy(f"K must be a positive integer, got {self.K!r}")
            object.__setattr__(self, "K", int(self.K))

    @classmethod
    def cd(cls, p: float, K: int) -> "SubPolicy":
        return cls("cd", p=p, K=K)

    @classmethod
    def lps(cls, p: float, K: int) -> "SubPolicy":
        return cls("lps", p=p, K=K)

    @classmethod
    def direct(cls, d: float) -> "SubPolicy":
        return cls("direct", d=d)

    def to_dict(self) -> dict:
        if self.kind == "direct":
            return {"kind": "direct", "d": self.d}
        return {"kind": self.kind, "p": self.p, "K": self.K}

    @classmethod
    def from_dict(cls, data: dict) -> "SubPolicy":
        kind = data["kind"]
        if kind == "direct":
            return cls.direct(float(data["d"]))
        return cls(kind, p=float(data["p"]), K=int(data["K"]))


def erlang_b(offered_load: float, servers: int) -> float:
    """Erlang-B blocking probability via the standard stable recurrence."""
    if offered_load < 0:
        raise ValueError("offered_load must be nonnegative")
    if servers < 1:
        raise ValueError("servers must be >= 1")
    b = 1.0
    for k in range(1, servers + 1):
        b = offered_load * b / (k + offered_load * b)
    return b


def cd_blocking(p: float, K: int, rho_eps: float) -> float:
    return (1.0 - p) + p * erlang_b(K * rho_eps * p, K)


def lps_blocking(p: float, K: int, rho_eps: float) -> float:
    """Blocking of LPS-(p, K) in isolation (time unit 1/mu_eps).

    Eager occupancy is a birth-death chain on {0..cap}: births ``p*rho_eps``
    below the cap, total death rate 1 (the full unit capacity is shared).
    """
    cap = lps_capacity(K)
    a = p * rho_eps
    weights = a ** np.arange(cap + 1, dtype=float)
    pi = weights / weights.sum()
    return float((1.0 - p) * pi[:cap].sum() + pi[cap])


def static_blocking(s: SubPolicy, rho_eps: float) -> float:
    if s.kind == "cd":
        return cd_blocking(s.p, s.K, rho_eps)
    if s.kind == "lps":
        return lps_blocking(s.p, s.K, rho_eps)
    return s.d


def blocking_bounds(catalog: Iterable[SubPolicy], rho_eps: float) -> tuple[float, float]:
    values = [static_blocking(s, rho_eps) for s in catalog]
    if not values:
        raise EmptyCatalog("blocking bounds need at least one sub-policy")
    return min(values), max(values)


def tune_admission(kind: str, K: int, rho_eps: float, target: float, xtol: float = 1e-15) -> SubPolicy:
    """Find the admission probability p so that ``kind``-(p, K) blocks ``target``.

    Blocking decreases continuously from 1 (p=0) to its p=1 value, so any target
    in that range has a solution.
    """
    fn = cd_blocking if kind == "cd" else lps_blocking
    floor = fn(1.0, K, rho_eps)
    if not (floor - 1e-15 <= target <= 1.0):
        raise InvalidPolicy(
            f"{kind}-(p,{K}) cannot reach blocking {target!r} at rho_eps={rho_eps} (minimum {floor!r})"
        )
    if target >= 1.0:
        return SubPolicy(kind, p=0.0, K=K)
    if target <= floor:
        return SubPolicy(kind, p=1.0, K=K)
    p = brentq(lambda x: fn(x, K, rho_eps) - target, 0.0, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return SubPolicy(kind, p=float(p), K=K)
