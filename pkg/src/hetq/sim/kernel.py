"""Compiled event loop for one replication.

The loop is resumable: random draws come from five caller-owned buffers and
the loop returns early whenever one of them runs low, so the caller can refill
it and call again. Because each stream is consumed strictly in order the
trajectory does not depend on the buffer size.
"""

import numpy as np
from numba import njit

# random streams
TAU_ARR, TAU_SVC, EPS_ARR, EPS_SVC, COIN = 0, 1, 2, 3, 4
N_STREAMS = 5

# integer state slots
I_N, I_ELL, I_EV, I_BP_ON, I_BP_STATE, I_CYC_ON, I_CYC_STATE, I_DONE = range(8)
N_ISTATE = 8
# float state slots
F_T, F_W, F_NEXT_TAU, F_NEXT_EPS, F_BP_START, F_CYC_START, F_S_ACC = range(7)
N_FSTATE = 7
# integer counters
C_DROPPED, C_WC_VIOL, C_OCC_VIOL, C_ARR_ALL = range(4)
N_COUNTERS = 4

KIND_CD, KIND_LPS = 0, 1
MODE_EVENTS, MODE_TIME = 0, 1

DONE = 0


@njit(cache=True)
def _rates(kind, K, ell):
    """(per eager job rate, capacity available to the tolerant class)."""
    if kind == KIND_CD:
        if ell == 0:
            return 0.0, 1.0
        per = 1.0 / max(K, ell)
        return per, max(0.0, (K - ell) / K)
    if ell == 0:
        return 0.0, 1.0
    return 1.0 / ell, 0.0


@njit(cache=True)
def run_kernel(
    ist, fst, cnt, rem, bufs, pos,
    kinds, pvals, caps, Ks,
    lam_tau, mu_tau, lam_eps, mu_eps, deterministic, drop_on_switch, debug,
    mode, horizon, warm, n_batches,
    b_time, b_occ, b_nint, b_arr, b_blk, b_emb, b_ntr,
    up, down, cap_time,
    bp_cnt, bp_sum, bp_sq, bp_q4, cy_cnt, cy_sum, cy_sq, sv_sum, sv_sq,
):
    """Advance one replication; returns 0 when finished or ``k + 1`` if stream ``k`` needs refilling."""
    S = b_occ.shape[1]
    top = kinds.shape[0] - 1
    buf_len = bufs.shape[1]
    post = horizon - warm

    if np.isnan(fst[F_NEXT_TAU]):
        if pos[TAU_ARR] >= buf_len:
            return TAU_ARR + 1
        if pos[EPS_ARR] >= buf_len:
            return EPS_ARR + 1
        fst[F_NEXT_TAU] = bufs[TAU_ARR, pos[TAU_ARR]] / lam_tau
        pos[TAU_ARR] += 1
        if lam_eps > 0.0:
            fst[F_NEXT_EPS] = bufs[EPS_ARR, pos[EPS_ARR]] / lam_eps
            pos[EPS_ARR] += 1
        else:
            fst[F_NEXT_EPS] = np.inf

    while True:
        for k in range(N_STREAMS):
            if pos[k] + 2 > buf_len:
                return k + 1

        t = fst[F_T]
        n = ist[I_N]
        ell = ist[I_ELL]
        ev = ist[I_EV]
        st = min(n, top)
        kind = kinds[st]
        per, avail = _rates(kind, Ks[st], ell)
        tau_rate = avail if n > 0 else 0.0

        if debug and n > 0 and abs(tau_rate + ell * per - 1.0) > 1e-12:
            cnt[C_WC_VIOL] += 1

        # candidate event times; ties go to the lowest index
        t_tau_arr = fst[F_NEXT_TAU]
        t_eps_arr = fst[F_NEXT_EPS]
        t_eps_done = np.inf
        j_min = -1
        if ell > 0:
            r_min = rem[0]
            j_min = 0
            for j in range(1, ell):
                if rem[j] < r_min:
                    r_min = rem[j]
                    j_min = j
            t_eps_done = t + r_min / per
        t_tau_done = np.inf
        if n > 0 and tau_rate > 0.0:
            t_tau_done = t + fst[F_W] / tau_rate

        nxt = t_tau_arr
        which = 0
        if t_eps_arr < nxt:
            nxt = t_eps_arr
            which = 1
        if t_eps_done < nxt:
            nxt = t_eps_done
            which = 2
        if t_tau_done < nxt:
            nxt = t_tau_done
            which = 3

        if mode == MODE_TIME and nxt > horizon:
            nxt = horizon
            which = -1

        if mode == MODE_EVENTS:
            recording = ev >= warm
            batch = int((ev - warm) * n_batches // post) if recording else -1
        else:
            recording = t >= warm
            batch = min(int((t - warm) * n_batches / post), n_batches - 1) if recording else -1

        dt = nxt - t
        if recording:
            b_time[batch] += dt
            b_occ[batch, min(n, S - 1)] += dt
            b_nint[batch] += n * dt
            cap_time[min(n, S - 1)] += avail * dt
        fst[F_S_ACC] += avail * dt

        for j in range(ell):
            rem[j] -= per * dt
        if n > 0:
            fst[F_W] -= tau_rate * dt
        fst[F_T] = nxt

        if which == -1:
            ist[I_DONE] = 1
            return DONE

        if which == 0 or which == 3:
            # tolerant transition
            if which == 0:
                n_new = n + 1
                fst[F_NEXT_TAU] = nxt + bufs[TAU_ARR, pos[TAU_ARR]] / lam_tau
                pos[TAU_ARR] += 1
                if n == 0:
                    fst[F_W] = bufs[TAU_SVC, pos[TAU_SVC]] / mu_tau
                    pos[TAU_SVC] += 1
            else:
                n_new = n - 1
                if n_new > 0:
                    fst[F_W] = bufs[TAU_SVC, pos[TAU_SVC]] / mu_tau
                    pos[TAU_SVC] += 1
                else:
                    fst[F_W] = 0.0
            ist[I_N] = n_new
            if recording:
                if which == 0:
                    up[min(n, S - 1)] += 1
                else:
                    down[min(n, S - 1)] += 1
                b_emb[batch, min(n_new, S - 1)] += 1
                b_ntr[batch] += 1
            if drop_on_switch and ell > 0:
                if recording:
                    cnt[C_DROPPED] += ell
                ist[I_ELL] = 0
                if ist[I_BP_ON] == 1:
                    if ist[I_BP_STATE] >= 0:
                        d = nxt - fst[F_BP_START]
                        bp_cnt[ist[I_BP_STATE]] += 1
                        bp_sum[ist[I_BP_STATE]] += d
                        bp_sq[ist[I_BP_STATE]] += d * d
                        bp_q4[ist[I_BP_STATE]] += d * d * d * d
                    ist[I_BP_ON] = 0
        elif which == 1:
            fst[F_NEXT_EPS] = nxt + bufs[EPS_ARR, pos[EPS_ARR]] / lam_eps
            pos[EPS_ARR] += 1
            u = bufs[COIN, pos[COIN]]
            pos[COIN] += 1
            if deterministic:
                size = 1.0 / mu_eps
            else:
                size = bufs[EPS_SVC, pos[EPS_SVC]] / mu_eps
                pos[EPS_SVC] += 1
            cnt[C_ARR_ALL] += 1
            admitted = u < pvals[st] and ell < caps[st]
            if recording:
                b_arr[batch] += 1
                if not admitted:
                    b_blk[batch] += 1
            if admitted:
                rem[ell] = size
                ist[I_ELL] = ell + 1
                if debug and ell + 1 > caps[st]:
                    cnt[C_OCC_VIOL] += 1
                if ell == 0:
                    # a busy period starts: close the running busy cycle
                    cs = min(n, S - 1)
                    if ist[I_CYC_ON] == 1 and ist[I_CYC_STATE] >= 0:
                        c = nxt - fst[F_CYC_START]
                        s_val = fst[F_S_ACC]
                        k = ist[I_CYC_STATE]
                        cy_cnt[k] += 1
                        cy_sum[k] += c
                        cy_sq[k] += c * c
                        sv_sum[k] += s_val
                        sv_sq[k] += s_val * s_val
                    ist[I_CYC_ON] = 1
                    ist[I_CYC_STATE] = cs if recording else -1
                    fst[F_CYC_START] = nxt
                    fst[F_S_ACC] = 0.0
                    ist[I_BP_ON] = 1
                    ist[I_BP_STATE] = cs if recording else -1
                    fst[F_BP_START] = nxt
        else:
            last = ell - 1
            rem[j_min] = rem[last]
            ist[I_ELL] = last
            if last == 0 and ist[I_BP_ON] == 1:
                if ist[I_BP_STATE] >= 0:
                    d = nxt - fst[F_BP_START]
                    bp_cnt[ist[I_BP_STATE]] += 1
                    bp_sum[ist[I_BP_STATE]] += d
                    bp_sq[ist[I_BP_STATE]] += d * d
                    bp_q4[ist[I_BP_STATE]] += d * d * d * d
                ist[I_BP_ON] = 0

        ist[I_EV] = ev + 1
        if mode == MODE_EVENTS and ev + 1 >= horizon:
            ist[I_DONE] = 1
            return DONE
