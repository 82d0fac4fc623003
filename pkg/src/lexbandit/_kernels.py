"""Compiled round loop mirroring ``lexbandit.policies`` operation for operation.

Arithmetic is kept in the same order as the reference classes so that both
paths produce bit-identical statistics and traces.
"""
import math

import numba
import numpy as np

OUT, IN, UCB, UNIFORM = 0, 1, 2, 3

# layout of the int64 scalar-state vector
T, NACT, PHASE, FINISHED, STOP, CK, NANOM, BALANCE, SHRINK, NESTING, LOST, REC = range(12)
STATE_SIZE = 12


@numba.njit(cache=True)
def _width(n, K, m, delta):
    return math.sqrt(4.0 / n * math.log(6 * K * m * n / delta))


@numba.njit(cache=True)
def _lowest_active(active):
    for b in range(active.shape[0]):
        if active[b]:
            return b
    return -1


@numba.njit(cache=True)
def _filter(objective, thr, mu, active, st, elim_round, elim_obj, elim_thr, round_no):
    """Remove active arms more than ``thr`` below the objective's empirical best."""
    K = active.shape[0]
    mx = -np.inf
    amx = -1
    for b in range(K):
        if active[b] and mu[b, objective] > mx:
            mx = mu[b, objective]
            amx = b
    for b in range(K):
        if active[b] and mx - mu[b, objective] > thr:
            active[b] = False
            st[NACT] -= 1
            elim_round[b] = round_no
            elim_obj[b] = objective
            elim_thr[b] = thr
    return amx


@numba.njit(cache=True)
def _advance_phase(st, sizes, phase_done, anomalies, round_no, m):
    while st[PHASE] < m and st[NACT] <= sizes[st[PHASE]]:
        p = st[PHASE]
        if st[NACT] < sizes[p]:
            k = st[NANOM]
            anomalies[k, 0] = round_no
            anomalies[k, 1] = p
            anomalies[k, 2] = st[NACT]
            anomalies[k, 3] = sizes[p]
            st[NANOM] = k + 1
        phase_done[p] = round_no
        st[PHASE] = p + 1


@numba.njit(cache=True)
def run_block(
    code, noise, sigma, true_means, delta, mult, sizes, astar, bai,
    st, pulls, mu, width, active, elim_round, elim_obj, elim_thr,
    phase_done, anomalies, ck_t, ck_pulls, ck_active, plays_out,
):
    """Advance one trial by at most ``noise.shape[0]`` rounds; return rows used."""
    K, m = true_means.shape
    used = 0
    for r in range(noise.shape[0]):
        t = st[T]
        if st[FINISHED]:
            if bai:
                break
            a = st[REC]
        elif code == OUT or code == IN:
            best = -1
            bw = -1.0
            nmin = np.iinfo(np.int64).max
            nmax = -1
            for b in range(K):
                if active[b]:
                    if width[b] > bw:
                        bw = width[b]
                        best = b
                    if pulls[b] < nmin:
                        nmin = pulls[b]
                    if pulls[b] > nmax:
                        nmax = pulls[b]
            if nmax - nmin > 1:
                st[BALANCE] += 1
            c = width[best]
            before = st[NACT]
            if code == OUT:
                _filter(st[PHASE], 2.0 * c, mu, active, st, elim_round, elim_obj, elim_thr, t + 1)
                _advance_phase(st, sizes, phase_done, anomalies, t + 1, m)
                done = st[PHASE] >= m
            else:
                prev = st[NACT]
                for i in range(m):
                    amx = _filter(i, mult[i] * c, mu, active, st, elim_round, elim_obj, elim_thr, t + 1)
                    if st[NACT] > prev or st[NACT] < 1 or not active[amx]:
                        st[NESTING] += 1
                    prev = st[NACT]
                done = st[NACT] <= 1
            if st[NACT] > before:
                st[SHRINK] += 1
            if st[LOST] < 0 and not active[astar]:
                st[LOST] = t + 1
            if done:
                st[FINISHED] = 1
                st[STOP] = t + 1
                st[REC] = _lowest_active(active)
            a = best
        elif code == UCB:
            a = -1
            bi = -np.inf
            for b in range(K):
                idx = mu[b, 0] + width[b]
                if idx > bi:
                    bi = idx
                    a = b
        else:
            a = t % K

        n = pulls[a]
        for i in range(m):
            reward = true_means[a, i] + sigma * noise[r, i]
            mu[a, i] = (n * mu[a, i] + reward) / (n + 1)
        pulls[a] = n + 1
        width[a] = _width(n + 1, K, m, delta)
        plays_out[r] = a
        st[T] = t + 1
        used = r + 1
        k = st[CK]
        if k < ck_t.shape[0] and ck_t[k] == t + 1:
            for b in range(K):
                ck_pulls[k, b] = pulls[b]
            ck_active[k] = st[NACT]
            st[CK] = k + 1
    return used
