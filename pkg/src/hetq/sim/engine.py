"""Replication driver, estimators and checks against the limit analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..analytics import limit_transition_probs, policy_performance, service_profile
from ..errors import HorizonTooShort, InvalidConfig, InsufficientSamples, InsufficientVisits
from ..model import SystemParams
from ..subpolicy import SubPolicy, lps_capacity
from . import kernel as kr
from .config import SimConfig

BUFFER_SIZE = 1 << 16
CONFIDENCE = 0.95


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float

    @property
    def low(self) -> float:
        return self.value - self.half_width

    @property
    def high(self) -> float:
        return self.value + self.half_width

    def covers(self, x: float) -> bool:
        return self.low <= x <= self.high


@dataclass(frozen=True)
class BusyStats:
    """Per tolerant state (at the start of the period or cycle): counts, sums, sums of squares."""

    busy_count: np.ndarray
    busy_sum: np.ndarray
    busy_sumsq: np.ndarray
    busy_sum4: np.ndarray
    cycle_count: np.ndarray
    cycle_sum: np.ndarray
    cycle_sumsq: np.ndarray
    unused_sum: np.ndarray
    unused_sumsq: np.ndarray

    def busy_moments(self, state: int | None = None) -> tuple[int, float, float]:
        """(samples, mean, second moment) of eager busy periods; all states pooled if ``state`` is None."""
        sl = slice(None) if state is None else slice(state, state + 1)
        n = int(self.busy_count[sl].sum())
        if n == 0:
            return 0, math.nan, math.nan
        return n, float(self.busy_sum[sl].sum() / n), float(self.busy_sumsq[sl].sum() / n)

    def cycle_moments(self, state: int) -> tuple[int, float, float, float, float]:
        """(samples, E[cycle], E[cycle^2], E[unused], E[unused^2]) for cycles starting in ``state``."""
        n = int(self.cycle_count[state])
        if n == 0:
            return 0, math.nan, math.nan, math.nan, math.nan
        return (
            n,
            float(self.cycle_sum[state] / n),
            float(self.cycle_sumsq[state] / n),
            float(self.unused_sum[state] / n),
            float(self.unused_sumsq[state] / n),
        )


@dataclass(frozen=True)
class SimReport:
    blocking_est: Estimate
    expected_n_est: Estimate
    tau_state_occupancy: np.ndarray
    occupancy_half_widths: np.ndarray
    embedded_occupancy: np.ndarray
    embedded_half_widths: np.ndarray
    up_counts: np.ndarray
    down_counts: np.ndarray
    service_rate_est: np.ndarray
    busy_cycle_stats: BusyStats
    events_processed: int
    eps_arrivals: int
    eps_blocked: int
    no_eps_arrivals: bool
    dropped: int
    work_conservation_violations: int
    occupancy_violations: int
    batch_blocking: np.ndarray
    batch_expected_n: np.ndarray
    batch_occupancy: np.ndarray
    batch_embedded: np.ndarray

    def visits(self, j: int) -> int:
        return int(self.up_counts[j] + self.down_counts[j])

    def summary(self) -> str:
        b, e = self.blocking_est, self.expected_n_est
        lines = [
            f"events processed : {self.events_processed}",
            f"eager arrivals   : {self.eps_arrivals} (blocked {self.eps_blocked})",
            f"blocking         : {b.value:.6f} +/- {b.half_width:.6f}",
            f"tolerant E[N]    : {e.value:.6f} +/- {e.half_width:.6f}",
        ]
        if self.no_eps_arrivals:
            lines.append("note: no eager arrivals; blocking reported as 0")
        return "\n".join(lines)


def _t_half_width(samples: np.ndarray) -> float:
    samples = samples[np.isfinite(samples)]
    n = samples.size
    if n < 2:
        return math.inf
    sd = float(np.std(samples, ddof=1))
    return float(stats.t.ppf(0.5 + CONFIDENCE / 2, n - 1)) * sd / math.sqrt(n)


def _half_widths(rows: np.ndarray) -> np.ndarray:
    return np.array([_t_half_width(rows[:, k]) for k in range(rows.shape[1])])


def _streams(base_seed: int, rep: int) -> list[np.random.Generator]:
    root = np.random.SeedSequence(base_seed, spawn_key=(rep,))
    return [np.random.Generator(np.random.Philox(s)) for s in root.spawn(kr.N_STREAMS)]


def _draw(gen: np.random.Generator, stream: int, n: int) -> np.ndarray:
    if stream == kr.COIN:
        return gen.random(n)
    return gen.standard_exponential(n)


class _Replication:
    """Buffers and accumulators of one replication."""

    def __init__(self, cfg: SimConfig, rep: int, buffer_size: int):
        p = cfg.params
        realized = cfg.realized_policy()
        self.kinds = np.array([kr.KIND_CD if s.kind == "cd" else kr.KIND_LPS for s in realized], dtype=np.int64)
        self.pvals = np.array([s.p for s in realized], dtype=float)
        self.Ks = np.array([s.K for s in realized], dtype=np.int64)
        self.caps = np.array([lps_capacity(s.K) if s.kind == "lps" else s.K for s in realized], dtype=np.int64)
        self.cfg = cfg
        self.gens = _streams(cfg.base_seed, rep)
        self.buffer_size = buffer_size
        self.bufs = np.stack([_draw(g, k, buffer_size) for k, g in enumerate(self.gens)])
        self.pos = np.zeros(kr.N_STREAMS, dtype=np.int64)
        self.ist = np.zeros(kr.N_ISTATE, dtype=np.int64)
        self.fst = np.zeros(kr.N_FSTATE)
        self.fst[kr.F_NEXT_TAU] = np.nan
        self.cnt = np.zeros(kr.N_COUNTERS, dtype=np.int64)
        self.rem = np.zeros(int(self.caps.max()) + 1)
        S = cfg.max_tracked_state + 1
        B = cfg.batch_count
        self.b_time = np.zeros(B)
        self.b_occ = np.zeros((B, S))
        self.b_nint = np.zeros(B)
        self.b_arr = np.zeros(B, dtype=np.int64)
        self.b_blk = np.zeros(B, dtype=np.int64)
        self.b_emb = np.zeros((B, S), dtype=np.int64)
        self.b_ntr = np.zeros(B, dtype=np.int64)
        self.up = np.zeros(S, dtype=np.int64)
        self.down = np.zeros(S, dtype=np.int64)
        self.cap_time = np.zeros(S)
        self.busy = [np.zeros(S, dtype=np.int64 if k in (0, 4) else float) for k in range(9)]
        if cfg.horizon_events is not None:
            self.mode = kr.MODE_EVENTS
            self.horizon = float(cfg.horizon_events)
            self.warm = float(math.floor(cfg.warmup_fraction * cfg.horizon_events))
            if cfg.horizon_events - self.warm < B:
                raise HorizonTooShort(
                    f"{cfg.horizon_events - int(self.warm)} post-warmup events cannot fill {B} batches"
                )
        else:
            self.mode = kr.MODE_TIME
            self.horizon = float(cfg.horizon_time)
            self.warm = cfg.warmup_fraction * cfg.horizon_time
        self.lam_eps = float(p.lambda_eps)

    def _refill(self, k: int) -> None:
        left = self.bufs[k, self.pos[k]:].copy()
        fresh = _draw(self.gens[k], k, self.buffer_size - left.size)
        self.bufs[k, : left.size] = left
        self.bufs[k, left.size:] = fresh
        self.pos[k] = 0

    def run(self) -> "_Replication":
        p, cfg = self.cfg.params, self.cfg
        mode_events = self.mode == kr.MODE_EVENTS
        horizon = int(self.horizon) if mode_events else self.horizon
        warm = int(self.warm) if mode_events else self.warm
        while True:
            code = kr.run_kernel(
                self.ist, self.fst, self.cnt, self.rem, self.bufs, self.pos,
                self.kinds, self.pvals, self.caps, self.Ks,
                p.lambda_tau, p.mu_tau, self.lam_eps, p.mu_eps,
                cfg.eps_job_dist == "deterministic", cfg.drop_on_tau_transition, cfg.debug,
                self.mode, float(horizon), float(warm), cfg.batch_count,
                self.b_time, self.b_occ, self.b_nint, self.b_arr, self.b_blk, self.b_emb, self.b_ntr,
                self.up, self.down, self.cap_time, *self.busy,
            )
            if code == kr.DONE:
                return self
            self._refill(code - 1)


def _merge(cfg: SimConfig, reps: list[_Replication]) -> SimReport:
    b_time = np.concatenate([r.b_time for r in reps])
    b_occ = np.concatenate([r.b_occ for r in reps])
    b_nint = np.concatenate([r.b_nint for r in reps])
    b_arr = np.concatenate([r.b_arr for r in reps])
    b_blk = np.concatenate([r.b_blk for r in reps])
    b_emb = np.concatenate([r.b_emb for r in reps])
    b_ntr = np.concatenate([r.b_ntr for r in reps])
    if b_time.sum() <= 0:
        raise HorizonTooShort("no simulated time after warmup")

    total_time = b_time.sum()
    arrivals = int(b_arr.sum())
    blocked = int(b_blk.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        batch_blocking = np.where(b_arr > 0, b_blk / np.maximum(b_arr, 1), np.nan)
        batch_n = np.where(b_time > 0, b_nint / b_time, np.nan)
        batch_occ = b_occ / b_time[:, None]
        batch_emb = b_emb / b_ntr[:, None]

    if arrivals == 0:
        blocking = Estimate(0.0, 0.0)
    else:
        blocking = Estimate(blocked / arrivals, _t_half_width(batch_blocking))
    expected_n = Estimate(float(b_nint.sum() / total_time), _t_half_width(batch_n))
    occupancy = b_occ.sum(axis=0) / total_time
    n_tr = b_ntr.sum()
    embedded = b_emb.sum(axis=0) / n_tr if n_tr > 0 else np.zeros(b_emb.shape[1])

    occ_time = b_occ.sum(axis=0)
    cap_time = sum(r.cap_time for r in reps)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu_hat = np.where(occ_time > 0, cap_time / occ_time, np.nan)

    busy = BusyStats(*[sum(r.busy[k] for r in reps) for k in range(9)])
    cnt = sum(r.cnt for r in reps)
    return SimReport(
        blocking_est=blocking,
        expected_n_est=expected_n,
        tau_state_occupancy=occupancy,
        occupancy_half_widths=_half_widths(batch_occ),
        embedded_occupancy=embedded,
        embedded_half_widths=_half_widths(batch_emb),
        up_counts=sum(r.up for r in reps),
        down_counts=sum(r.down for r in reps),
        service_rate_est=nu_hat,
        busy_cycle_stats=busy,
        events_processed=int(sum(int(r.ist[kr.I_EV]) for r in reps)),
        eps_arrivals=arrivals,
        eps_blocked=blocked,
        no_eps_arrivals=arrivals == 0,
        dropped=int(cnt[kr.C_DROPPED]),
        work_conservation_violations=int(cnt[kr.C_WC_VIOL]),
        occupancy_violations=int(cnt[kr.C_OCC_VIOL]),
        batch_blocking=batch_blocking,
        batch_expected_n=batch_n,
        batch_occupancy=batch_occ,
        batch_embedded=batch_emb,
    )


def simulate(cfg: SimConfig, buffer_size: int = BUFFER_SIZE) -> SimReport:
    """Run every replication in index order and pool their batches."""
    reps = [_Replication(cfg, r, buffer_size).run() for r in range(cfg.replications)]
    return _merge(cfg, reps)


@dataclass(frozen=True)
class ConvergenceRow:
    mu_eps: float
    lambda_eps: float
    blocking: Estimate
    expected_n: Estimate
    limit_blocking: float
    limit_expected_n: float

    @property
    def blocking_rel_error(self) -> float:
        return abs(self.blocking.value - self.limit_blocking) / self.limit_blocking

    @property
    def expected_n_rel_error(self) -> float:
        return abs(self.expected_n.value - self.limit_expected_n) / self.limit_expected_n


def limit_values(cfg: SimConfig) -> tuple[float, float]:
    """(E[N], P_B) of the configured policy in the limit."""
    return policy_performance(cfg.limit_policy(), cfg.params)


def convergence_sweep(template: SimConfig, mu_eps_list) -> list[ConvergenceRow]:
    limit_n, limit_b = limit_values(template)
    rows = []
    for mu in mu_eps_list:
        cfg = template.with_mu_eps(float(mu))
        rep = simulate(cfg)
        rows.append(ConvergenceRow(float(mu), cfg.params.lambda_eps, rep.blocking_est, rep.expected_n_est, limit_b, limit_n))
    return rows


def estimate_transition_probs(report: SimReport, j: int, min_visits: int = 100) -> tuple[float, float, float]:
    """(p_hat, q_hat, half-width) of the up/down split out of tolerant state ``j``."""
    if j < 0 or j >= report.up_counts.size:
        raise InsufficientVisits(f"state {j} is not tracked")
    visits = report.visits(j)
    if visits < min_visits:
        raise InsufficientVisits(f"state {j} left {visits} times, need {min_visits}")
    p_hat = report.up_counts[j] / visits
    q_hat = 1.0 - p_hat
    z = stats.norm.ppf(0.5 + CONFIDENCE / 2)
    return float(p_hat), float(q_hat), float(z * math.sqrt(p_hat * q_hat / visits))


def limit_down_probability(cfg: SimConfig, j: int) -> float:
    profile = service_profile(cfg.limit_policy(), cfg.params)
    return limit_transition_probs(profile, j)[1]


def mg_inf_busy_period_bound(lam: float, ex: float, ex2: float) -> float:
    """Upper bound on the second moment of an M/G/inf busy period."""
    theta = lam * ex
    return math.exp(theta) * ex2 * (math.expm1(theta) + (math.e**2 - 1.0) / 2.0)


def busy_period_bound_check(
    report: SimReport, sub: SubPolicy, params: SystemParams, state: int | None = None, min_samples: int = 1000
) -> dict:
    """Compare the simulated busy-period second moment with the M/G/inf bound.

    The bound treats every eager job as served at the slowest per-job rate 1/K
    of ``sub``, so X = B_eps * K. Exponential job sizes are assumed.
    """
    n, _, m2 = report.busy_cycle_stats.busy_moments(state)
    if n < min_samples:
        raise InsufficientSamples(f"{n} busy periods recorded, need {min_samples}")
    if params.mu_eps is None:
        raise InsufficientSamples("params.mu_eps is needed for the bound")
    if sub.kind == "direct":
        raise InvalidConfig("pass the realized CD/LPS sub-policy, not a direct level")
    ex = sub.K / params.mu_eps
    ex2 = 2.0 * sub.K**2 / params.mu_eps**2
    lam = params.rho_eps * params.mu_eps
    bound = mg_inf_busy_period_bound(lam, ex, ex2)
    bs = report.busy_cycle_stats
    sl = slice(None) if state is None else slice(state, state + 1)
    m4 = float(bs.busy_sum4[sl].sum()) / n
    half = float(stats.norm.ppf(0.5 + CONFIDENCE / 2)) * math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    return {"bound": bound, "estimate": m2, "half_width": half, "samples": n, "holds": m2 <= bound + half}
