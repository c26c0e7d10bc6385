"""Core value types: system parameters, eventually-constant sequences, policies."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import InvalidPolicy, LoadOutOfRange, NonPositiveRate


@dataclass(frozen=True)
class SystemParams:
    """Rates of the two-class system.

    ``mu_eps`` is the eager scale parameter and only matters before the limit;
    the eager arrival rate is ``rho_eps * mu_eps``.
    """

    lambda_tau: float
    mu_tau: float
    rho_eps: float
    mu_eps: float | None = None

    @property
    def lambda_eps(self) -> float | None:
        if self.mu_eps is None:
            return None
        return self.rho_eps * self.mu_eps

    def with_mu_eps(self, mu_eps: float) -> "SystemParams":
        return SystemParams(self.lambda_tau, self.mu_tau, self.rho_eps, mu_eps)

    def to_dict(self) -> dict:
        out = {"lambda_tau": self.lambda_tau, "mu_tau": self.mu_tau, "rho_eps": self.rho_eps}
        if self.mu_eps is not None:
            out["mu_eps"] = self.mu_eps
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        mu_eps = data.get("mu_eps")
        return cls(
            float(data["lambda_tau"]),
            float(data["mu_tau"]),
            float(data["rho_eps"]),
            None if mu_eps is None else float(mu_eps),
        )


def validate_params(p: SystemParams) -> SystemParams:
    """Return ``p`` unchanged if it is a valid parameter set, raise otherwise."""
    for name in ("lambda_tau", "mu_tau"):
        value = getattr(p, name)
        if not (math.isfinite(value) and value > 0):
            raise NonPositiveRate(f"{name} must be a positive finite rate, got {value!r}")
    if p.mu_eps is not None and not (math.isfinite(p.mu_eps) and p.mu_eps > 0):
        raise NonPositiveRate(f"mu_eps must be a positive finite rate, got {p.mu_eps!r}")
    if not (0.0 <= p.rho_eps < 1.0):
        raise LoadOutOfRange(f"rho_eps must lie in [0, 1), got {p.rho_eps!r}")
    return p


@dataclass(frozen=True)
class EventuallyConstantSeq:
    """Sequence ``prefix[0], ..., prefix[m], tail, tail, ...``."""

    prefix: tuple[float, ...] = ()
    tail: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix", tuple(float(x) for x in self.prefix))
        object.__setattr__(self, "tail", float(self.tail))

    @property
    def m(self) -> int:
        """Index of the last prefix entry (-1 for a pure tail)."""
        return len(self.prefix) - 1

    def __getitem__(self, j: int) -> float:
        return seq_at(self, j)

    def head(self, n: int) -> np.ndarray:
        """First ``n`` values as an array."""
        out = np.full(n, self.tail, dtype=float)
        k = min(n, len(self.prefix))
        out[:k] = self.prefix[:k]
        return out

    def map(self, fn: Callable[[float], float]) -> "EventuallyConstantSeq":
        return EventuallyConstantSeq(tuple(fn(x) for x in self.prefix), fn(self.tail))

    def distinct_values(self) -> Iterator[float]:
        yield from self.prefix
        yield self.tail

    def sup(self) -> float:
        return max(self.distinct_values())

    def inf(self) -> float:
        return min(self.distinct_values())

    def to_dict(self) -> dict:
        return {"prefix": list(self.prefix), "tail": self.tail}

    @classmethod
    def from_dict(cls, data: dict) -> "EventuallyConstantSeq":
        return cls(tuple(data.get("prefix", ())), data["tail"])


def seq_at(s: EventuallyConstantSeq, j: int) -> float:
    if j < 0:
        raise IndexError(f"negative index {j}")
    if j < len(s.prefix):
        return s.prefix[j]
    return s.tail


@dataclass(frozen=True)
class PolicySpec:
    """Stationary Markov top-level policy: blocking level ``d[j]`` in tolerant state ``j``."""

    d: EventuallyConstantSeq
    d_min: float = 0.0
    d_max: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.d_min <= self.d_max <= 1.0):
            raise InvalidPolicy(f"need 0 <= d_min <= d_max <= 1, got ({self.d_min}, {self.d_max})")
        for x in self.d.distinct_values():
            if not (self.d_min <= x <= self.d_max):
                raise InvalidPolicy(f"blocking level {x!r} outside [{self.d_min}, {self.d_max}]")

    @classmethod
    def constant(cls, d: float, d_min: float = 0.0, d_max: float = 1.0) -> "PolicySpec":
        return cls(EventuallyConstantSeq((), d), d_min, d_max)

    @classmethod
    def from_levels(
        cls, prefix: Sequence[float], tail: float, d_min: float = 0.0, d_max: float = 1.0
    ) -> "PolicySpec":
        return cls(EventuallyConstantSeq(tuple(prefix), tail), d_min, d_max)

    def to_dict(self) -> dict:
        out = self.d.to_dict()
        out["d_min"] = self.d_min
        out["d_max"] = self.d_max
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PolicySpec":
        return cls(
            EventuallyConstantSeq.from_dict(data),
            float(data.get("d_min", 0.0)),
            float(data.get("d_max", 1.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PolicySpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ServiceRateProfile:
    """Limit tolerant service rates ``nu[j]`` and per-state loads ``rho[j]``."""

    nu: EventuallyConstantSeq
    lambda_tau: float
    mu_tau: float
    rho: EventuallyConstantSeq = field(init=False)

    def __post_init__(self) -> None:
        for x in self.nu.distinct_values():
            if not (0.0 < x <= 1.0):
                raise InvalidPolicy(f"service rate {x!r} outside (0, 1]")
        lam, mu = self.lambda_tau, self.mu_tau
        object.__setattr__(self, "rho", self.nu.map(lambda v: lam / (mu * v)))
