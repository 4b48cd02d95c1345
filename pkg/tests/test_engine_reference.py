"""The compiled engines against plain-Python transcriptions fed the same draws."""
import numpy as np
import pytest

from lrvoter import _engine
from lrvoter.kernel import KernelParams, torus_kernel
from lrvoter.voter import _forward


def _alias_pick(rng, prob, alias):
    K = prob.size
    u = rng.random() * K
    col = min(int(u), K - 1)
    return col if u - col < prob[col] else int(alias[col])


def _add(x, z, L, d):
    out, mul = 0, 1
    for _ in range(d):
        out += ((x // mul) % L + (z // mul) % L) % L * mul
        mul *= L
    return out


def forward_reference(rng, eta, L, d, prob, alias, rate, T, obs, checkpoints):
    eta = eta.copy()
    n = eta.size
    total = rate * n
    t = 0.0
    xi = np.zeros(len(obs))
    partial = np.zeros((len(obs), len(checkpoints)))
    ic = 0
    n_ev = n_chg = 0
    while True:
        t_next = t + rng.standard_exponential() / total
        t_end = min(t_next, T)
        while ic < len(checkpoints) and checkpoints[ic] <= t_end:
            partial[:, ic] = xi + eta[obs] * (checkpoints[ic] - t)
            ic += 1
        if t_next >= T:
            xi += eta[obs] * (T - t)
            break
        xi += eta[obs] * (t_next - t)
        t = t_next
        x = min(int(rng.random() * n), n - 1)
        k = _alias_pick(rng, prob, alias)
        src = _add(x, k, L, d)
        n_ev += 1
        if eta[src] != eta[x]:
            eta[x] = eta[src]
            n_chg += 1
    return eta, xi, partial, n_ev, n_chg


def torus_reference(rng, site0, delay, horizon, query_times, L, d, prob, alias, total):
    order = sorted(range(len(site0)), key=lambda i: delay[i])
    parent = list(range(len(site0)))
    link_t = [np.inf] * len(site0)
    occ = {}          # site -> walker id
    active = []       # walker ids in slot order
    where = {}
    counts = []
    t, ai, qi = 0.0, 0, 0
    while True:
        t_act = delay[order[ai]] if ai < len(order) else np.inf
        t_q = query_times[qi] if qi < len(query_times) else np.inf
        t_b = min(t_act, t_q, horizon)
        rate = len(active) * total
        t_ev = t + rng.standard_exponential() / rate if rate > 0 else np.inf
        if t_ev >= t_b:
            t = t_b
            if t_act == t_b:
                wk = order[ai]
                ai += 1
                x = int(site0[wk])
                if x in occ:
                    parent[wk] = occ[x]
                    link_t[wk] = t
                else:
                    active.append(wk)
                    where[wk] = x
                    occ[x] = wk
                continue
            if t_q == t_b:
                counts.append(len(active))
                qi += 1
                continue
            break
        t = t_ev
        s = min(int(rng.random() * len(active)), len(active) - 1)
        j = _alias_pick(rng, prob, alias)
        wk = active[s]
        y = _add(where[wk], j, L, d)
        del occ[where[wk]]
        if y in occ:
            parent[wk] = occ[y]
            link_t[wk] = t
            # swap-remove, as the engine does
            active[s] = active[-1]
            active.pop()
            del where[wk]
        else:
            where[wk] = y
            occ[y] = wk
    while qi < len(query_times) and query_times[qi] <= t:
        counts.append(len(active))
        qi += 1
    return np.array(parent), np.array(link_t), np.array(counts)


@pytest.mark.parametrize("d,alpha,L", [(1, 0.5, 16), (2, 1.5, 6)])
def test_forward_engine_matches_reference(d, alpha, L):
    tk = torus_kernel(KernelParams(d, alpha), L)
    n = L ** d
    eta0 = (np.random.default_rng(1).random(n) < 0.5).astype(np.uint8)
    obs = np.array([0, 1, n - 1], dtype=np.int64)
    cps = np.array([0.5, 1.0, 2.5])
    T = 3.0
    eta = eta0.copy()
    xi, partial, _snaps, n_ev, n_chg = _forward(np.random.default_rng(77), eta, L, d, tk.prob, tk.alias,
                                                float(tk.total), T, obs, cps, np.zeros(0), False)
    r_eta, r_xi, r_partial, r_ev, r_chg = forward_reference(np.random.default_rng(77), eta0, L, d, tk.prob,
                                                            tk.alias, float(tk.total), T, obs, cps)
    assert n_ev == r_ev and n_chg == r_chg and n_ev > 50
    assert np.array_equal(eta, r_eta)
    assert np.array_equal(xi, r_xi)
    assert np.array_equal(partial, r_partial)


@pytest.mark.parametrize("d,alpha,L", [(1, 0.5, 32), (2, 1.5, 8)])
def test_torus_engine_matches_reference(d, alpha, L):
    tk = torus_kernel(KernelParams(d, alpha), L)
    n = L ** d
    site0 = np.array([0, 1, 3, 7, n - 1, 5], dtype=np.int64)
    delay = np.array([0.0, 0.0, 0.4, 0.0, 1.3, 2.0])
    order = np.argsort(delay, kind="stable").astype(np.int64)
    qt = np.array([0.5, 1.0, 2.0, 5.0, 20.0])
    out = _engine.torus_engine(np.random.default_rng(5), site0, delay, order, 20.0, qt, L, d,
                               tk.prob, tk.alias, float(tk.total), site0.size)
    parent, link_t, counts = torus_reference(np.random.default_rng(5), site0, delay, 20.0, qt, L, d,
                                             tk.prob, tk.alias, float(tk.total))
    assert np.array_equal(out[1], parent)
    assert np.array_equal(out[2], link_t)
    assert np.array_equal(out[6], counts)
    assert np.isfinite(link_t).sum() >= 1
