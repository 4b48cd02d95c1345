"""Event-driven coalescing random walks on Z^d (numba).

One jitted routine covers every dual computation in the package: plain
coalescing systems with activation delays, single walks that stop at the
origin, and the reversed-time lineage system of the origin's history.

Hot-path helpers are closures so that numba inlines them; calling separate
jitted functions with array arguments costs tens of nanoseconds per call.

Positions live in ``pos[slot]``; an open-addressing table with linear
probing maps a position to the slot currently holding it.  Every class has
an integer id; merges are recorded in a union-find ``parent`` array where
the resident class stays the root.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

_HMUL = np.int64(-7046029254386353131)  # 0x9E3779B97F4A7C15 as int64

STATUS_OK = 0
STATUS_STOPPED = 1
STATUS_CAPACITY = -1


@nb.njit(cache=True, nogil=True)
def lattice_engine(rng, pos0, delay, order, horizon, source_until, snap_time, query_times,
                   stop_on_origin, id_cap, log_cap, debug, diag_time,
                   points, prob, alias, exact_mass, prop_rate, k0, A, alpha, R2, escape):
    n0 = pos0.shape[0]
    d = pos0.shape[1]
    has_source = source_until > 0.0
    cap = id_cap
    parent = np.arange(cap)
    link_t = np.full(cap, np.inf)
    snap_id = np.zeros(cap, dtype=np.int64)
    snap_pos = np.zeros((cap, d), dtype=np.int64)
    nsnap = 0
    snap_nesc = 0
    snapped = snap_time < 0.0
    pos = np.zeros((cap, d), dtype=np.int64)
    slot_id = np.zeros(cap, dtype=np.int64)
    esc_id = np.zeros(cap, dtype=np.int64)
    esc_t = np.zeros(cap)
    merge_t = np.zeros(cap)
    seg_start = np.zeros(cap)
    seg_end = np.zeros(cap)
    counts = np.zeros(query_times.shape[0], dtype=np.int64)
    ev_t = np.zeros(log_cap)
    ev_id = np.zeros(log_cap, dtype=np.int64)
    ev_pos = np.zeros((log_cap, d), dtype=np.int64)
    hsize = 16
    while hsize < 4 * cap + 16:
        hsize *= 2
    table = -np.ones(hsize, dtype=np.int64)
    mask = hsize - 1
    hshift = 0
    while (1 << hshift) < hsize:
        hshift += 1
    hshift = 64 - hshift  # Fibonacci hashing keeps the top bits
    q = np.zeros(d, dtype=np.int64)
    jmp = np.zeros(d, dtype=np.int64)
    rng_nn = prob.shape[0]
    inv_alpha = 1.0 / alpha

    # helpers read rows in place: passing row views would cost a refcount
    # round trip per call
    def hash_row(slot):
        h = np.int64(0)
        for i in range(d):
            h = (h ^ pos[slot, i]) * _HMUL
        return (h >> hshift) & mask

    def hash_q():
        h = np.int64(0)
        for i in range(d):
            h = (h ^ q[i]) * _HMUL
        return (h >> hshift) & mask

    def same_q(slot):
        for i in range(d):
            if pos[slot, i] != q[i]:
                return False
        return True

    def find_q():
        h = hash_q()
        while True:
            s = table[h]
            if s == -1:
                return -1
            if same_q(s):
                return s
            h = (h + 1) & mask

    def table_index(slot):
        h = hash_row(slot)
        while table[h] != slot:
            h = (h + 1) & mask
        return h

    def insert(slot):
        h = hash_row(slot)
        while table[h] != -1:
            h = (h + 1) & mask
        table[h] = slot

    def remove(slot):
        i = table_index(slot)
        j = i
        while True:
            j = (j + 1) & mask
            s = table[j]
            if s == -1:
                break
            k = hash_row(s)
            if i <= j:
                inside = i < k and k <= j
            else:
                inside = i < k or k <= j
            if not inside:
                table[i] = s
                i = j
        table[i] = -1

    def drop_slot(slot, nact):
        # slot is already out of the table; move the last slot into its place
        last = nact - 1
        if slot != last:
            table[table_index(last)] = slot
            for i in range(d):
                pos[slot, i] = pos[last, i]
            slot_id[slot] = slot_id[last]
        return last

    def propose(out):
        # thinned jump clock: 1 = jump, 0 = null event, 2 = escape
        u = rng.random() * prop_rate
        if u < exact_mass:
            v = rng.random() * rng_nn
            j = int(v)
            if j >= rng_nn:
                j = rng_nn - 1
            if v - j >= prob[j]:
                j = alias[j]
            for i in range(d):
                out[i] = points[j, i]
            return 1
        w = 1.0 - rng.random()
        s = (k0 - 0.5) * w ** (-inv_alpha)
        if s > 1e18:
            return 2
        k = np.int64(math.floor(s + 0.5))
        kf = float(k)
        if d == 1:
            out[0] = k if rng.random() < 0.5 else -k
            r2 = kf * kf
            nk = 2.0
        else:
            while True:
                face = rng.integers(0, d)
                sgn = 1 if rng.random() < 0.5 else -1
                m = 0
                for i in range(d):
                    if i == face:
                        out[i] = sgn * k
                    else:
                        out[i] = rng.integers(-k, k + 1)
                    if out[i] == k or out[i] == -k:
                        m += 1
                if m == 1 or rng.random() * m < 1.0:
                    break
            r2 = 0.0
            for i in range(d):
                r2 += float(out[i]) * float(out[i])
            nk = (2.0 * kf + 1.0) ** d - (2.0 * kf - 1.0) ** d
        if r2 <= R2:
            return 0
        uk = A * inv_alpha * (kf - 0.5) ** (-alpha) * (-math.expm1(alpha * math.log1p(-1.0 / (kf + 0.5))))
        if rng.random() < r2 ** (-0.5 * (d + alpha)) * nk / uk:
            return 1
        return 0

    def check(nact):
        for s in range(nact):
            for i in range(d):
                q[i] = pos[s, i]
            if find_q() != s:
                raise AssertionError("position index out of sync with class positions")
            if parent[slot_id[s]] != slot_id[s]:
                raise AssertionError("active class id is not a partition root")

    nact = 0
    nesc = 0
    nmerge = 0
    nseg = 0
    nlog = 0
    n_ids = n0
    n_jumps = 0
    n_null = 0
    late_merges = 0
    origin_slot = -1
    status = 0
    t = 0.0
    qi = 0
    nq = query_times.shape[0]
    ai = 0  # next walker to activate, in `order`

    if has_source:
        slot = nact
        nact += 1
        for i in range(d):
            pos[slot, i] = 0
        slot_id[slot] = n_ids
        seg_start[nseg] = 0.0
        nseg += 1
        n_ids += 1
        insert(slot)
        origin_slot = slot

    t_act = t_q = t_src = t_snap = t_b = 0.0
    dirty = True
    while True:
        if dirty:
            # deterministic boundaries; they only move when one is processed
            t_act = delay[order[ai]] if ai < n0 else np.inf
            t_q = query_times[qi] if qi < nq else np.inf
            t_src = source_until if (has_source and origin_slot >= 0) else np.inf
            t_snap = np.inf if snapped else snap_time
            t_b = min(min(t_act, t_q), min(min(t_src, t_snap), horizon))
            dirty = False
        rate = nact * prop_rate
        if rate > 0.0:
            t_ev = t + rng.standard_exponential() / rate
        else:
            t_ev = np.inf
        if t_ev >= t_b:
            t = t_b
            dirty = True
            if t_act == t_b:
                # activation of a delayed walker
                wk = order[ai]
                ai += 1
                for i in range(d):
                    q[i] = pos0[wk, i]
                r = find_q()
                if r >= 0:
                    parent[wk] = slot_id[r]
                    link_t[wk] = t
                    merge_t[nmerge] = t
                    nmerge += 1
                else:
                    slot = nact
                    nact += 1
                    for i in range(d):
                        pos[slot, i] = q[i]
                    slot_id[slot] = wk
                    insert(slot)
                continue
            if t_q == t_b:
                counts[qi] = nact + nesc
                qi += 1
                continue
            if t_src == t_b:
                seg_end[nseg - 1] = t
                origin_slot = -1
                continue
            if t_snap == t_b:
                for k in range(nact):
                    snap_id[k] = slot_id[k]
                    for i in range(d):
                        snap_pos[k, i] = pos[k, i]
                nsnap = nact
                snap_nesc = nesc
                snapped = True
                continue
            break
        t = t_ev
        s = int(rng.random() * nact)
        if s >= nact:
            s = nact - 1
        res = propose(jmp)
        if res == 0:
            n_null += 1
            continue
        n_jumps += 1
        mover = slot_id[s]
        from_origin = s == origin_slot
        esc = res == 2
        if not esc:
            for i in range(d):
                q[i] = pos[s, i] + jmp[i]
                if q[i] >= escape or q[i] <= -escape:
                    esc = True
        if esc:
            remove(s)
            esc_id[nesc] = slot_id[s]
            esc_t[nesc] = t
            nesc += 1
            last = drop_slot(s, nact)
            nact -= 1
            if origin_slot == last:
                origin_slot = s
        else:
            r = find_q()
            if r >= 0:
                # coalescence: the resident class stays the root
                parent[mover] = slot_id[r]
                link_t[mover] = t
                merge_t[nmerge] = t
                nmerge += 1
                if t > diag_time:
                    late_merges += 1
                remove(s)
                last = drop_slot(s, nact)
                nact -= 1
                if origin_slot == last:
                    origin_slot = s
                if nlog < log_cap:
                    ev_t[nlog] = t
                    ev_id[nlog] = mover
                    for i in range(d):
                        ev_pos[nlog, i] = q[i]
                    nlog += 1
            else:
                remove(s)
                for i in range(d):
                    pos[s, i] = q[i]
                insert(s)
                if nlog < log_cap:
                    ev_t[nlog] = t
                    ev_id[nlog] = mover
                    for i in range(d):
                        ev_pos[nlog, i] = q[i]
                    nlog += 1
                if stop_on_origin:
                    at0 = True
                    for i in range(d):
                        if q[i] != 0:
                            at0 = False
                    if at0:
                        status = 1
                        break
        if from_origin:
            # the origin lineage left: a new history segment starts at 0
            seg_end[nseg - 1] = t
            if n_ids >= cap:
                status = -1
                break
            slot = nact
            nact += 1
            for i in range(d):
                pos[slot, i] = 0
            slot_id[slot] = n_ids
            seg_start[nseg] = t
            nseg += 1
            n_ids += 1
            for i in range(d):
                q[i] = 0
            r = find_q()
            if r >= 0:
                # only possible if another class sits at 0, which the
                # origin rule excludes
                raise AssertionError("origin site doubly occupied")
            insert(slot)
            origin_slot = slot
        if debug:
            check(nact)

    while qi < nq and query_times[qi] <= t:
        counts[qi] = nact + nesc
        qi += 1
    if has_source and origin_slot >= 0:
        seg_end[nseg - 1] = min(t, source_until)
    if not snapped:
        for k in range(nact):
            snap_id[k] = slot_id[k]
            for i in range(d):
                snap_pos[k, i] = pos[k, i]
        nsnap = nact
        snap_nesc = nesc
    return (status, t, parent[:n_ids].copy(), link_t[:n_ids].copy(),
            slot_id[:nact].copy(), pos[:nact].copy(),
            snap_id[:nsnap].copy(), snap_pos[:nsnap].copy(), snap_nesc,
            esc_id[:nesc].copy(), esc_t[:nesc].copy(), merge_t[:nmerge].copy(),
            seg_start[:nseg].copy(), seg_end[:nseg].copy(), counts,
            ev_t[:nlog].copy(), ev_id[:nlog].copy(), ev_pos[:nlog].copy(),
            n_jumps, n_null, late_merges)


@nb.njit(cache=True, nogil=True)
def roots_at(parent, link_t, time):
    """Root of every id using only links created at or before `time`."""
    n = parent.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        x = i
        while parent[x] != x and link_t[x] <= time:
            x = parent[x]
        out[i] = x
    return out


@nb.njit(cache=True, nogil=True)
def find_roots(parent):
    """Root label of every id (path halving)."""
    n = parent.shape[0]
    par = parent.copy()
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        x = i
        while par[x] != x:
            par[x] = par[par[x]]
            x = par[x]
        out[i] = x
    return out


@nb.njit(cache=True, nogil=True)
def torus_engine(rng, site0, delay, order, horizon, query_times, L, d,
                 tprob, talias, ttotal, id_cap):
    """Coalescing walks on (Z/LZ)^d with folded jump weights.

    Sites are flat indices; ``occ[site]`` holds the slot of the class there.
    No thinning is needed because the folded table is finite.
    """
    n0 = site0.shape[0]
    nsites = L ** d
    occ = -np.ones(nsites, dtype=np.int64)
    parent = np.arange(max(n0, 1))
    site = np.zeros(max(n0, 1), dtype=np.int64)
    slot_id = np.zeros(max(n0, 1), dtype=np.int64)
    counts = np.zeros(query_times.shape[0], dtype=np.int64)
    merge_t = np.zeros(max(n0, 1))
    link_t = np.full(max(n0, 1), np.inf)
    nn = tprob.shape[0]
    nact = 0
    nmerge = 0
    t = 0.0
    qi = 0
    nq = query_times.shape[0]
    ai = 0
    n_jumps = 0

    def shift(x, z):
        if d == 1:
            return (x + z) % L
        out = 0
        mul = 1
        for i in range(d):
            c = ((x // mul) % L + (z // mul) % L) % L
            out += c * mul
            mul *= L
        return out

    while True:
        t_act = delay[order[ai]] if ai < n0 else np.inf
        t_q = query_times[qi] if qi < nq else np.inf
        t_b = min(t_act, t_q, horizon)
        rate = nact * ttotal
        t_ev = t + rng.standard_exponential() / rate if rate > 0.0 else np.inf
        if t_ev >= t_b:
            t = t_b
            dirty = True
            if t_act == t_b:
                wk = order[ai]
                ai += 1
                x = site0[wk]
                r = occ[x]
                if r >= 0:
                    parent[wk] = slot_id[r]
                    link_t[wk] = t
                    merge_t[nmerge] = t
                    nmerge += 1
                else:
                    slot = nact
                    nact += 1
                    site[slot] = x
                    slot_id[slot] = wk
                    occ[x] = slot
                continue
            if t_q == t_b:
                counts[qi] = nact
                qi += 1
                continue
            break
        t = t_ev
        s = int(rng.random() * nact)
        if s >= nact:
            s = nact - 1
        v = rng.random() * nn
        j = int(v)
        if j >= nn:
            j = nn - 1
        if v - j >= tprob[j]:
            j = talias[j]
        n_jumps += 1
        y = shift(site[s], j)
        r = occ[y]
        occ[site[s]] = -1
        if r >= 0:
            parent[slot_id[s]] = slot_id[r]
            link_t[slot_id[s]] = t
            merge_t[nmerge] = t
            nmerge += 1
            last = nact - 1
            if s != last:
                site[s] = site[last]
                slot_id[s] = slot_id[last]
                occ[site[s]] = s
            nact -= 1
        else:
            site[s] = y
            occ[y] = s
    while qi < nq and query_times[qi] <= t:
        counts[qi] = nact
        qi += 1
    return (t, parent[:n0].copy(), link_t[:n0].copy(), slot_id[:nact].copy(),
            site[:nact].copy(), merge_t[:nmerge].copy(), counts, n_jumps)
