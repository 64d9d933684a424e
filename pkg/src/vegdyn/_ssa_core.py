"""Numba loops for the direct-method Gillespie simulation.

Both loops consume exactly three uniforms per attempted event (waiting time,
event choice, member choice) from a caller-supplied buffer so that the random
stream stays under NumPy's control.

Status codes returned: 0 reached t_end, 1 absorbed, 2 event buffer full.
"""
import math

import numpy as np
from numba import njit

REACHED_END = 0
ABSORBED = 1
BUFFER_FULL = 2

RATE_CONST = 0
RATE_LINEAR = 1
RATE_SIGMOID = 2

SHAPE_CONST = 0
SHAPE_RING = 1
SHAPE_LINE = 2
SHAPE_LINE_REFLECT = 3

_SQRT2PI = math.sqrt(2.0 * math.pi)


@njit(cache=True)
def rate_value(kind, par, u):
    # par = (value | lo, hi, center, slope, amplitude)
    if kind == RATE_CONST:
        return par[0]
    x = par[4] * u
    if kind == RATE_LINEAR:
        return x
    if x < 0.0:
        x = 0.0
    elif x > 1.0:
        x = 1.0
    z = -(x - par[2]) / par[3]
    if z > 700.0:
        z = 700.0
    elif z < -700.0:
        z = -700.0
    # expand around the nearer asymptote so a limit of 0 is approached without cancellation
    if z >= 0.0:
        return par[0] + (par[1] - par[0]) / (1.0 + math.exp(z))
    return par[1] + (par[0] - par[1]) / (1.0 + math.exp(-z))


@njit(cache=True)
def kernel_value(kind, par, ri, rj, cutoff):
    # par = (sigma, length, norm, value)
    if kind == SHAPE_CONST:
        return par[3]
    sigma = par[0]
    if kind == SHAPE_RING:
        d = abs(ri - rj) % par[1]
        if par[1] - d < d:
            d = par[1] - d
        if cutoff > 0.0 and d > cutoff:
            return 0.0
        return par[2] / (sigma * _SQRT2PI) * math.exp(-d * d / (2.0 * sigma * sigma))
    if kind == SHAPE_LINE:
        d = ri - rj
        if cutoff > 0.0 and abs(d) > cutoff:
            return 0.0
        return math.exp(-d * d / (2.0 * sigma * sigma)) / (sigma * _SQRT2PI)
    # reflecting images on [0, L]: even extension, then 2L-periodic
    L = par[1]
    n_img = int(math.ceil((10.0 * sigma) / (2.0 * L))) + 1
    total = 0.0
    for m in range(-n_img, n_img + 1):
        d1 = ri - rj + 2.0 * m * L
        d2 = ri + rj + 2.0 * m * L
        if cutoff <= 0.0 or abs(d1) <= cutoff:
            total += math.exp(-d1 * d1 / (2.0 * sigma * sigma))
        if cutoff <= 0.0 or abs(d2) <= cutoff:
            total += math.exp(-d2 * d2 / (2.0 * sigma * sigma))
    return total / (sigma * _SQRT2PI)


@njit(cache=True)
def _kernel_column(j, k, positions, rows, shape_kind, shape_par, cutoff, out):
    n = positions.shape[0]
    if rows.shape[0] > 0:
        for i in range(n):
            out[i] = rows[k, j, i]
    else:
        for i in range(n):
            out[i] = kernel_value(shape_kind[k], shape_par[k], positions[i], positions[j], cutoff)


@njit(cache=True)
def continuum_fields(states, positions, rows, shape_kind, shape_par, cutoff, ch_kernel, ch_dep, fields):
    """Recompute all channel fields from scratch."""
    n = positions.shape[0]
    col = np.empty(n)
    for c in range(ch_kernel.shape[0]):
        for i in range(n):
            fields[c, i] = 0.0
    for j in range(n):
        for c in range(ch_kernel.shape[0]):
            if states[j] == ch_dep[c]:
                _kernel_column(j, ch_kernel[c], positions, rows, shape_kind, shape_par, cutoff, col)
                for i in range(n):
                    fields[c, i] += col[i] / n


@njit(cache=True)
def continuum_rates(states, fields, src, kind, par, chan, rate_st, site_rate):
    n = states.shape[0]
    n_t = src.shape[0]
    for i in range(n):
        tot = 0.0
        for t in range(n_t):
            r = 0.0
            if states[i] == src[t]:
                u = fields[chan[t], i] if chan[t] >= 0 else 0.0
                r = rate_value(kind[t], par[t], u)
            rate_st[i, t] = r
            tot += r
        site_rate[i] = tot


@njit(cache=True)
def advance_continuum(
    t0, t_end, states, positions, counts,
    src, dst, kind, par, chan,
    ch_kernel, ch_dep,
    rows, shape_kind, shape_par, cutoff,
    fields, rate_st, site_rate,
    uniforms, ev_t, ev_site, ev_from, ev_to,
    snap_times, snap_ptr, snaps, refresh_every, event_counter,
):
    n = states.shape[0]
    n_t = src.shape[0]
    n_c = ch_kernel.shape[0]
    col = np.empty(n)
    t = t0
    n_ev = 0
    n_u = 0
    cap = ev_t.shape[0]
    while True:
        if n_ev >= cap or n_u + 3 > uniforms.shape[0]:
            return t, n_ev, n_u, BUFFER_FULL, event_counter
        total = 0.0
        for i in range(n):
            total += site_rate[i]
        if total <= 0.0:
            while snap_ptr[0] < snap_times.shape[0] and snap_times[snap_ptr[0]] <= t_end:
                snaps[snap_ptr[0], :] = states
                snap_ptr[0] += 1
            return t, n_ev, n_u, ABSORBED, event_counter
        tau = -math.log(1.0 - uniforms[n_u]) / total
        target = uniforms[n_u + 1] * total
        n_u += 3
        t_new = t + tau
        while snap_ptr[0] < snap_times.shape[0] and snap_times[snap_ptr[0]] < t_new and snap_times[snap_ptr[0]] <= t_end:
            snaps[snap_ptr[0], :] = states
            snap_ptr[0] += 1
        if t_new > t_end:
            return t_end, n_ev, n_u, REACHED_END, event_counter
        t = t_new
        # cumulative scan in fixed site order
        acc = 0.0
        site = -1
        for i in range(n):
            acc += site_rate[i]
            if acc > target and site_rate[i] > 0.0:
                site = i
                break
        if site < 0:
            for i in range(n - 1, -1, -1):
                if site_rate[i] > 0.0:
                    site = i
                    break
            acc = total
        rem = target - (acc - site_rate[site])
        tr = -1
        acc2 = 0.0
        for k in range(n_t):
            if rate_st[site, k] > 0.0:
                acc2 += rate_st[site, k]
                tr = k
                if acc2 > rem:
                    break
        x = states[site]
        y = dst[tr]
        states[site] = y
        counts[x] -= 1
        counts[y] += 1
        ev_t[n_ev] = t
        ev_site[n_ev] = site
        ev_from[n_ev] = x
        ev_to[n_ev] = y
        n_ev += 1
        event_counter += 1
        if refresh_every > 0 and event_counter % refresh_every == 0:
            continuum_fields(states, positions, rows, shape_kind, shape_par, cutoff, ch_kernel, ch_dep, fields)
        else:
            for c in range(n_c):
                d = ch_dep[c]
                if d != x and d != y:
                    continue
                if counts[d] == 0:
                    for i in range(n):
                        fields[c, i] = 0.0
                    continue
                sgn = 1.0 if d == y else -1.0
                _kernel_column(site, ch_kernel[c], positions, rows, shape_kind, shape_par, cutoff, col)
                for i in range(n):
                    fields[c, i] += sgn * col[i] / n
        # refresh rates touched by the flip, then re-sum site totals exactly
        for k in range(n_t):
            c = chan[k]
            touched = c >= 0 and (ch_dep[c] == x or ch_dep[c] == y)
            if not touched:
                r = 0.0
                if y == src[k]:
                    u = fields[c, site] if c >= 0 else 0.0
                    r = rate_value(kind[k], par[k], u)
                rate_st[site, k] = r
                continue
            for i in range(n):
                r = 0.0
                if states[i] == src[k]:
                    u = fields[c, i] if c >= 0 else 0.0
                    r = rate_value(kind[k], par[k], u)
                rate_st[i, k] = r
        for i in range(n):
            tot = 0.0
            for k in range(n_t):
                tot += rate_st[i, k]
            site_rate[i] = tot


@njit(cache=True)
def patch_fields(counts, wmat, ch_kernel, ch_dep, n_sites, fields):
    m_p = counts.shape[0]
    for c in range(ch_kernel.shape[0]):
        k = ch_kernel[c]
        d = ch_dep[c]
        for m in range(m_p):
            s = 0.0
            for mp in range(m_p):
                s += wmat[k, m, mp] * counts[mp, d]
            fields[c, m] = s / n_sites


@njit(cache=True)
def patch_rates(fields, src, kind, par, chan, rate_g):
    for m in range(rate_g.shape[0]):
        for t in range(src.shape[0]):
            u = fields[chan[t], m] if chan[t] >= 0 else 0.0
            rate_g[m, t] = rate_value(kind[t], par[t], u)


@njit(cache=True)
def advance_patches(
    t0, t_end, states, patch, counts,
    src, dst, kind, par, chan,
    ch_kernel, ch_dep, wmat,
    fields, rate_g,
    members, msize, mpos,
    uniforms, ev_t, ev_site, ev_from, ev_to,
    snap_times, snap_ptr, snaps,
):
    n = states.shape[0]
    m_p = counts.shape[0]
    n_k = counts.shape[1]
    n_t = src.shape[0]
    t = t0
    n_ev = 0
    n_u = 0
    cap = ev_t.shape[0]
    while True:
        if n_ev >= cap or n_u + 3 > uniforms.shape[0]:
            return t, n_ev, n_u, BUFFER_FULL
        total = 0.0
        for m in range(m_p):
            for k in range(n_t):
                total += counts[m, src[k]] * rate_g[m, k]
        if total <= 0.0:
            while snap_ptr[0] < snap_times.shape[0] and snap_times[snap_ptr[0]] <= t_end:
                snaps[snap_ptr[0], :] = states
                snap_ptr[0] += 1
            return t, n_ev, n_u, ABSORBED
        tau = -math.log(1.0 - uniforms[n_u]) / total
        target = uniforms[n_u + 1] * total
        pick = uniforms[n_u + 2]
        n_u += 3
        t_new = t + tau
        while snap_ptr[0] < snap_times.shape[0] and snap_times[snap_ptr[0]] < t_new and snap_times[snap_ptr[0]] <= t_end:
            snaps[snap_ptr[0], :] = states
            snap_ptr[0] += 1
        if t_new > t_end:
            return t_end, n_ev, n_u, REACHED_END
        t = t_new
        acc = 0.0
        gm = -1
        gk = -1
        for m in range(m_p):
            for k in range(n_t):
                g = counts[m, src[k]] * rate_g[m, k]
                if g > 0.0:
                    acc += g
                    gm = m
                    gk = k
                    if acc > target:
                        break
            if acc > target:
                break
        x = src[gk]
        y = dst[gk]
        grp = gm * n_k + x
        j = int(pick * msize[grp])
        if j >= msize[grp]:
            j = msize[grp] - 1
        site = members[grp, j]
        # move site from group (gm, x) to (gm, y)
        last = members[grp, msize[grp] - 1]
        members[grp, j] = last
        mpos[last] = j
        msize[grp] -= 1
        grp2 = gm * n_k + y
        members[grp2, msize[grp2]] = site
        mpos[site] = msize[grp2]
        msize[grp2] += 1
        states[site] = y
        counts[gm, x] -= 1
        counts[gm, y] += 1
        ev_t[n_ev] = t
        ev_site[n_ev] = site
        ev_from[n_ev] = x
        ev_to[n_ev] = y
        n_ev += 1
        patch_fields(counts, wmat, ch_kernel, ch_dep, n, fields)
        patch_rates(fields, src, kind, par, chan, rate_g)
