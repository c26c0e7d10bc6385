"""Simulation configuration."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

from ..errors import InvalidConfig, InvalidPolicy
from ..model import PolicySpec, SystemParams, validate_params
from ..subpolicy import SubPolicy, lps_capacity, static_blocking, tune_admission

EPS_JOB_DISTS = ("exponential", "deterministic")


@dataclass(frozen=True)
class SimConfig:
    """One simulation experiment.

    ``policy_prefix[j]`` is the sub-policy in tolerant state ``j``;
    ``policy_tail`` covers every later state. Exactly one of
    ``horizon_events`` and ``horizon_time`` is set.
    """

    params: SystemParams
    policy_prefix: tuple[SubPolicy, ...]
    policy_tail: SubPolicy
    eps_job_dist: str = "exponential"
    drop_on_tau_transition: bool = False
    horizon_events: int | None = 10**6
    horizon_time: float | None = None
    warmup_fraction: float = 0.2
    replications: int = 1
    base_seed: int = 0
    batch_count: int = 20
    direct_K: int = 5
    max_tracked_state: int = 256
    debug: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy_prefix", tuple(self.policy_prefix))
        try:
            validate_params(self.params)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc
        if self.params.mu_eps is None:
            raise InvalidConfig("simulation needs params.mu_eps")
        if self.eps_job_dist not in EPS_JOB_DISTS:
            raise InvalidConfig(f"eps_job_dist must be one of {EPS_JOB_DISTS}, got {self.eps_job_dist!r}")
        if (self.horizon_events is None) == (self.horizon_time is None):
            raise InvalidConfig("set exactly one of horizon_events and horizon_time")
        if self.horizon_events is not None and not (int(self.horizon_events) == self.horizon_events > 0):
            raise InvalidConfig(f"horizon_events must be a positive integer, got {self.horizon_events!r}")
        if self.horizon_time is not None and not (math.isfinite(self.horizon_time) and self.horizon_time > 0):
            raise InvalidConfig(f"horizon_time must be positive, got {self.horizon_time!r}")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise InvalidConfig(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction!r}")
        if self.replications < 1 or self.batch_count < 1:
            raise InvalidConfig("replications and batch_count must be >= 1")
        if self.direct_K < 1:
            raise InvalidConfig("direct_K must be >= 1")
        if self.max_tracked_state < 1:
            raise InvalidConfig("max_tracked_state must be >= 1")
        if not (0 <= self.base_seed < 2**64):
            raise InvalidConfig("base_seed must be a 64-bit unsigned integer")
        # fails early when a direct level is out of reach
        self.realized_policy()

    @property
    def subpolicies(self) -> tuple[SubPolicy, ...]:
        return self.policy_prefix + (self.policy_tail,)

    def realized(self, s: SubPolicy) -> SubPolicy:
        """Direct levels are run as CD-(p, direct_K) with p tuned to the level."""
        if s.kind != "direct":
            return s
        try:
            return tune_admission("cd", self.direct_K, self.params.rho_eps, s.d)
        except InvalidPolicy as exc:
            raise InvalidConfig(str(exc)) from exc

    def realized_policy(self) -> tuple[SubPolicy, ...]:
        return tuple(self.realized(s) for s in self.subpolicies)

    def blocking_levels(self) -> tuple[list[float], float]:
        rho = self.params.rho_eps
        levels = [static_blocking(s, rho) for s in self.subpolicies]
        return levels[:-1], levels[-1]

    def limit_policy(self) -> PolicySpec:
        """Top-level policy seen by the limit analysis."""
        prefix, tail = self.blocking_levels()
        lo = min(prefix + [tail])
        hi = max(prefix + [tail])
        return PolicySpec.from_levels(prefix, tail, lo, hi)

    def max_occupancy(self) -> int:
        caps = [lps_capacity(s.K) if s.kind == "lps" else s.K for s in self.realized_policy()]
        return max(caps)

    def with_mu_eps(self, mu_eps: float) -> "SimConfig":
        return replace(self, params=self.params.with_mu_eps(mu_eps))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "policy": {
                "prefix": [s.to_dict() for s in self.policy_prefix],
                "tail": self.policy_tail.to_dict(),
            },
            "eps_job_dist": self.eps_job_dist,
            "drop_on_tau_transition": self.drop_on_tau_transition,
            "horizon": {"events": self.horizon_events}
            if self.horizon_events is not None
            else {"time": self.horizon_time},
            "warmup_fraction": self.warmup_fraction,
            "replications": self.replications,
            "base_seed": self.base_seed,
            "batch_count": self.batch_count,
            "direct_K": self.direct_K,
            "max_tracked_state": self.max_tracked_state,
            "debug": self.debug,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        try:
            policy = data["policy"]
            horizon = data.get("horizon", {"events": 10**6})
            unknown = set(horizon) - {"events", "time"}
            if unknown:
                raise InvalidConfig(f"unknown horizon keys {sorted(unknown)}")
            return cls(
                params=SystemParams.from_dict(data["params"]),
                policy_prefix=tuple(SubPolicy.from_dict(s) for s in policy.get("prefix", [])),
                policy_tail=SubPolicy.from_dict(policy["tail"]),
                eps_job_dist=data.get("eps_job_dist", "exponential"),
                drop_on_tau_transition=bool(data.get("drop_on_tau_transition", False)),
                horizon_events=int(horizon["events"]) if "events" in horizon else None,
                horizon_time=float(horizon["time"]) if "time" in horizon else None,
                warmup_fraction=float(data.get("warmup_fraction", 0.2)),
                replications=int(data.get("replications", 1)),
                base_seed=int(data.get("base_seed", 0)),
                batch_count=int(data.get("batch_count", 20)),
                direct_K=int(data.get("direct_K", 5)),
                max_tracked_state=int(data.get("max_tracked_state", 256)),
                debug=bool(data.get("debug", False)),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidConfig(f"malformed simulation config: {exc!r}") from exc
        except InvalidPolicy as exc:
            raise InvalidConfig(str(exc)) from exc

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def threshold_config(
    params: SystemParams,
    L: int,
    below: SubPolicy,
    at_or_above: SubPolicy,
    **kwargs,
) -> SimConfig:
    """``below`` in tolerant states < L, ``at_or_above`` from L on."""
    if L < 0:
        raise InvalidConfig(f"threshold must be >= 0, got {L}")
    return SimConfig(params, (below,) * L, at_or_above, **kwargs)


def static_config(params: SystemParams, sub: SubPolicy, **kwargs) -> SimConfig:
    return SimConfig(params, (), sub, **kwargs)
