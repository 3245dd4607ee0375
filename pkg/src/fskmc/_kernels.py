"""Compiled event loops used by the ensemble harness.

Everything here mirrors the pure-Python reference paths in ``kmc`` and
``scheduler`` operation for operation: rates are recomputed over the
active site set after every event (full scan), waiting times use one
uniform via inverse transform, selection uses one uniform and a
cumulative scan in ascending (x, omega) order, and streams are keyed by
(seed, replica, cell, window, factor).  The test suite pins the two
paths together bit for bit, so any change here must keep the draw order
and floating-point expressions identical to the Python side.

Model dispatch is by integer code (0 = spin flip, 1 = Kawasaki) with a
flat parameter vector; observables are coded 0 = coverage,
1 = correlation (lag in ``obs_params``), 2 = variance.
"""

import math

import numpy as np
from numba import njit

from ._rng import derive_state, next_uniform

U64_SIM = np.uint64(1)
U64_PLAN = np.uint64(2)
U64_INIT = np.uint64(3)
U64_SSA = np.uint64(4)
_U0 = np.uint64(0)

SCHED_LIE = 0
SCHED_STRANG = 1
SCHED_RANDOM = 2

INIT_EMPTY = 0
INIT_FULL = 1
INIT_RANDOM = 2
INIT_EXPLICIT = 3


@njit(cache=True, nogil=True)
def eval_observable(sig, code, param):
    """Coverage / correlation / variance of one configuration row.

    Spin sums are integer-exact, so the result is bit-identical to the
    numpy evaluations in ``observables``.
    """
    n = sig.size
    if code == 1:
        s = 0
        for i in range(n):
            j = i + param
            if j >= n:
                j -= n
            s += sig[i] * sig[j]
        return s / n
    s = 0
    for i in range(n):
        s += sig[i]
    c = s / n
    if code == 0:
        return c
    return c - c * c


@njit(cache=True, nogil=True)
def _scan_rates(sigma, model_code, params, active, mask, nbr, rates):
    """Fill ``rates`` for all events rooted in ``active``; returns total.

    Spin flip: one event per active site.  Kawasaki: ``2*d`` direction
    slots per active site; inadmissible slots (no particle, occupied
    target, or partner outside the masked set) get rate 0.
    """
    n_active = active.size
    n_dirs = nbr.shape[1]
    lam = 0.0
    if model_code == 0:
        beta = params[0]
        coupling = params[1]
        field = params[2]
        ca = params[3]
        cd = params[4]
        for i in range(n_active):
            x = active[i]
            if sigma[x] == 0:
                r = cd
            else:
                s = 0
                for j in range(n_dirs):
                    s += sigma[nbr[x, j]]
                u = coupling * s + field
                r = ca * math.exp(-beta * u)
            rates[i] = r
            lam += r
        return lam, n_active
    beta = params[0]
    coupling = params[1]
    ch = params[2]
    e = 0
    for i in range(n_active):
        x = active[i]
        for j in range(n_dirs):
            y = nbr[x, j]
            r = 0.0
            if sigma[x] == 1 and sigma[y] == 0 and mask[y] == 1:
                s = 0
                for jj in range(n_dirs):
                    s += sigma[nbr[x, jj]]
                u = coupling * s
                r = ch * math.exp(-beta * u)
            rates[e] = r
            lam += r
            e += 1
    return lam, e


@njit(cache=True, nogil=True)
def advance_interval(sigma, model_code, params, active, mask, nbr, state,
                     tau, snap_t, snap_rows, snap_sites, snap_buf, rates):
    """Simulate the active set over internal time [0, tau], in place.

    Whenever the internal clock passes ``snap_t[k]`` the sites in
    ``snap_sites`` are copied into ``snap_buf[snap_rows[k]]`` (the value
    holding at that time; a jump exactly at a snap time lands after the
    jump).  Returns the number of fired events.
    """
    t = 0.0
    k = 0
    nsnap = snap_t.size
    fired = 0
    n_dirs = nbr.shape[1]
    while True:
        lam, n_events = _scan_rates(sigma, model_code, params, active,
                                    mask, nbr, rates)
        u1 = next_uniform(state)
        exhausted = True
        t_new = tau
        if lam > 0.0:
            t_new = t + (-math.log(u1) / lam)
            exhausted = t_new > tau
        if exhausted:
            while k < nsnap:
                row = snap_rows[k]
                for ii in range(snap_sites.size):
                    s = snap_sites[ii]
                    snap_buf[row, s] = sigma[s]
                k += 1
            return fired
        while k < nsnap and snap_t[k] < t_new:
            row = snap_rows[k]
            for ii in range(snap_sites.size):
                s = snap_sites[ii]
                snap_buf[row, s] = sigma[s]
            k += 1
        u2 = next_uniform(state)
        r = u2 * lam
        sel = -1
        for e in range(n_events):
            re = rates[e]
            if re > 0.0:
                r -= re
                sel = e
                if r <= 0.0:
                    break
        if model_code == 0:
            x = active[sel]
            sigma[x] = 1 - sigma[x]
        else:
            i = sel // n_dirs
            j = sel - i * n_dirs
            x = active[i]
            y = nbr[x, j]
            tmp = sigma[x]
            sigma[x] = sigma[y]
            sigma[y] = tmp
        t = t_new
        fired += 1


@njit(cache=True, nogil=True)
def _fill_initial(sigma, sigma_init, init_mode, base_seed, replica):
    n = sigma.size
    if init_mode == INIT_EXPLICIT:
        for i in range(n):
            sigma[i] = sigma_init[i]
    elif init_mode == INIT_FULL:
        for i in range(n):
            sigma[i] = 1
    elif init_mode == INIT_RANDOM:
        st = derive_state(base_seed, replica, U64_INIT, _U0, _U0, _U0)
        for i in range(n):
            sigma[i] = 1 if next_uniform(st) < 0.5 else 0
    else:
        for i in range(n):
            sigma[i] = 0


@njit(cache=True, nogil=True)
def run_ssa_replica(out, sigma_init, init_mode, model_code, params, nbr,
                    grid, obs_codes, obs_params, base_seed, replica):
    """One serial-SSA replica; fills out[(G, n_obs)] at the grid times."""
    n = nbr.shape[0]
    n_dirs = nbr.shape[1]
    n_obs = obs_codes.size
    ngrid = grid.size
    sigma = np.empty(n, np.int8)
    _fill_initial(sigma, sigma_init, init_mode, base_seed, replica)
    for oi in range(n_obs):
        out[0, oi] = eval_observable(sigma, obs_codes[oi], obs_params[oi])
    active = np.arange(n)
    mask = np.ones(n, np.uint8)
    rates = np.empty(n if model_code == 0 else n * n_dirs, np.float64)
    buf = np.empty((ngrid - 1, n), np.int8)
    rows = np.arange(ngrid - 1)
    state = derive_state(base_seed, replica, U64_SSA, _U0, _U0, _U0)
    advance_interval(sigma, model_code, params, active, mask, nbr, state,
                     grid[ngrid - 1], grid[1:], rows, active, buf, rates)
    for j in range(ngrid - 1):
        for oi in range(n_obs):
            out[j + 1, oi] = eval_observable(buf[j], obs_codes[oi],
                                             obs_params[oi])


@njit(cache=True, nogil=True)
def run_fs_replica(out, sigma_init, init_mode, model_code, params, nbr,
                   cells, group1, group2, sched_kind, dt, p_group1,
                   rescaled, grid, obs_codes, obs_params,
                   base_seed, replica):
    """One fractional-step replica; fills out[(G, n_obs)].

    A plan covers one window of length dt (Lie, Strang) or a pair of
    windows of total length 2*dt (randomized schedule: two Bernoulli
    draws, each factor advancing the physical clock by dt while its
    sub-generator acts for dt in raw mode or 2*dt in rescaled mode).
    Streams are keyed (replica, cell, plan, factor); the schedule draws
    come from a dedicated plan stream.
    """
    n = nbr.shape[0]
    n_dirs = nbr.shape[1]
    n_obs = obs_codes.size
    ngrid = grid.size
    horizon = grid[ngrid - 1]
    sigma = np.empty(n, np.int8)
    _fill_initial(sigma, sigma_init, init_mode, base_seed, replica)
    for oi in range(n_obs):
        out[0, oi] = eval_observable(sigma, obs_codes[oi], obs_params[oi])

    n_windows = int(round(horizon / dt))
    if sched_kind == SCHED_RANDOM:
        n_plans = n_windows // 2
        span = 2.0 * dt
    else:
        n_plans = n_windows
        span = dt
    plan_state = derive_state(base_seed, replica, U64_PLAN, _U0, _U0, _U0)

    mask = np.zeros(n, np.uint8)
    rates = np.empty(n if model_code == 0 else n * n_dirs, np.float64)
    buf = np.empty((ngrid, n), np.int8)
    snap_t = np.empty(ngrid, np.float64)
    snap_rows = np.empty(ngrid, np.int64)
    f_group = np.empty(3, np.int64)
    f_sub = np.empty(3, np.float64)
    f_p0 = np.empty(3, np.float64)
    f_p1 = np.empty(3, np.float64)

    gp = 1  # next unrecorded grid index; grid[0] done above
    for plan in range(n_plans):
        w0 = span * plan
        w1 = span * (plan + 1)
        g_lo = gp
        if plan == n_plans - 1:
            g_hi = ngrid  # absorb any float drift at the horizon
        else:
            g_hi = g_lo
            while g_hi < ngrid and grid[g_hi] <= w1:
                g_hi += 1
        gp = g_hi
        n_rows = g_hi - g_lo
        for r in range(n_rows):
            for s in range(n):
                buf[r, s] = sigma[s]

        if sched_kind == SCHED_LIE:
            nf = 2
            f_group[0] = 1
            f_group[1] = 2
            f_sub[0] = dt
            f_sub[1] = dt
            f_p0[0] = w0
            f_p0[1] = w0
            f_p1[0] = w1
            f_p1[1] = w1
        elif sched_kind == SCHED_STRANG:
            nf = 3
            mid = w0 + dt * 0.5
            f_group[0] = 1
            f_group[1] = 2
            f_group[2] = 1
            f_sub[0] = dt * 0.5
            f_sub[1] = dt
            f_sub[2] = dt * 0.5
            f_p0[0] = w0
            f_p0[1] = w0
            f_p0[2] = mid
            f_p1[0] = mid
            f_p1[1] = w1
            f_p1[2] = w1
        else:
            nf = 2
            ua = next_uniform(plan_state)
            ub = next_uniform(plan_state)
            f_group[0] = 1 if ua < p_group1 else 2
            f_group[1] = 1 if ub < p_group1 else 2
            sub = 2.0 * dt if rescaled else dt
            boundary = w0 + dt
            f_sub[0] = sub
            f_sub[1] = sub
            f_p0[0] = w0
            f_p0[1] = boundary
            f_p1[0] = boundary
            f_p1[1] = w1

        for fi in range(nf):
            cell_ids = group1 if f_group[fi] == 1 else group2
            tau = f_sub[fi]
            p0 = f_p0[fi]
            p1 = f_p1[fi]
            ratio = tau / (p1 - p0)
            # grid rows covered by this factor's physical span
            a = g_lo
            while a < g_hi and grid[a] <= p0:
                a += 1
            b = a
            while b < g_hi and grid[b] <= p1:
                b += 1
            cnt = b - a
            for jj in range(cnt):
                snap_t[jj] = (grid[a + jj] - p0) * ratio
                snap_rows[jj] = a + jj - g_lo
            for ci in range(cell_ids.size):
                cell = cell_ids[ci]
                csites = cells[cell]
                if model_code == 1:
                    for ii in range(csites.size):
                        mask[csites[ii]] = 1
                state = derive_state(base_seed, replica, U64_SIM,
                                     np.uint64(cell), np.uint64(plan),
                                     np.uint64(fi))
                advance_interval(sigma, model_code, params, csites, mask,
                                 nbr, state, tau, snap_t[:cnt],
                                 snap_rows[:cnt], csites, buf, rates)
                if model_code == 1:
                    for ii in range(csites.size):
                        mask[csites[ii]] = 0
                # rows past this factor's span hold the factor-end state
                # until a later factor touches the cell again
                for j in range(b, g_hi):
                    row = j - g_lo
                    for ii in range(csites.size):
                        s = csites[ii]
                        buf[row, s] = sigma[s]

        for r in range(n_rows):
            for oi in range(n_obs):
                out[g_lo + r, oi] = eval_observable(buf[r], obs_codes[oi],
                                                    obs_params[oi])


@njit(cache=True, nogil=True)
def run_ssa_chunk(rep_lo, rep_hi, acc_sum, acc_sq, sigma_init, init_mode,
                  model_code, params, nbr, grid, obs_codes, obs_params,
                  base_seed):
    out = np.empty((grid.size, obs_codes.size), np.float64)
    for rep in range(rep_lo, rep_hi):
        run_ssa_replica(out, sigma_init, init_mode, model_code, params,
                        nbr, grid, obs_codes, obs_params, base_seed,
                        np.uint64(rep))
        for g in range(grid.size):
            for oi in range(obs_codes.size):
                v = out[g, oi]
                acc_sum[g, oi] += v
                acc_sq[g, oi] += v * v


@njit(cache=True, nogil=True)
def run_fs_chunk(rep_lo, rep_hi, acc_sum, acc_sq, sigma_init, init_mode,
                 model_code, params, nbr, cells, group1, group2,
                 sched_kind, dt, p_group1, rescaled, grid, obs_codes,
                 obs_params, base_seed):
    out = np.empty((grid.size, obs_codes.size), np.float64)
    for rep in range(rep_lo, rep_hi):
        run_fs_replica(out, sigma_init, init_mode, model_code, params,
                       nbr, cells, group1, group2, sched_kind, dt,
                       p_group1, rescaled, grid, obs_codes, obs_params,
                       base_seed, np.uint64(rep))
        for g in range(grid.size):
            for oi in range(obs_codes.size):
                v = out[g, oi]
                acc_sum[g, oi] += v
                acc_sq[g, oi] += v * v
