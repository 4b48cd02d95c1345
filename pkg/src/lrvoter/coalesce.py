"""Random walks and coalescing systems on Z^d (and on the torus).

Everything is driven by the event engine in ``_engine``.  The functions
here translate between lattice objects and engine arrays, choose buffer
sizes, retry when a buffer turns out too small, and turn raw engine output
into estimates.

Delayed walkers are inert until their activation time: they neither move
nor absorb walkers that land on their start site.  A walker activated on
a site that is already occupied merges at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _engine
from .errors import DomainError
from .kernel import ESCAPE_COORD, JumpSampler, KernelParams, TorusKernel
from .streams import as_streams, run_replicas

__all__ = [
    "WalkPath",
    "CoalescingSystem",
    "Estimate",
    "simulate_walk",
    "simulate_coalescing",
    "dual_cardinalities",
    "dual_moment",
    "estimate_escape",
    "estimate_capacity",
    "StationarySample",
    "StationaryBatch",
    "sample_stationary",
    "stationary_batch",
    "OriginLineages",
    "origin_lineages",
]

_MAX_RETRY = 12


class Estimate(tuple):
    """(estimate, std_error) pair carrying extra diagnostics as attributes."""

    def __new__(cls, estimate, std_error, **info):
        self = super().__new__(cls, (float(estimate), float(std_error)))
        self.__dict__.update(info)
        return self

    @property
    def estimate(self):
        return self[0]

    @property
    def std_error(self):
        return self[1]

    def as_dict(self):
        out = {"estimate": self[0], "std_error": self[1]}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def __repr__(self):
        extra = ", ".join(f"{k}={v!r}" for k, v in self.__dict__.items())
        return f"Estimate({self[0]!r}, {self[1]!r}{', ' + extra if extra else ''})"


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return float(x.mean()) if n else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


def _lattice_points(points, d=None) -> np.ndarray:
    arr = np.asarray([np.asarray(p, dtype=np.int64).reshape(-1) for p in points], dtype=np.int64)
    if arr.ndim != 2:
        raise DomainError("sites must all have the same dimension")
    if d is not None and arr.shape[1] != d:
        raise DomainError(f"sites have dimension {arr.shape[1]}, kernel has d={d}")
    return arr


def _split_starts(starts, d):
    # entries are bare sites or (site, delay) pairs; a length-2 entry is a
    # pair when its first item is itself a site (or d == 1)
    xs, ts = [], []
    for s in starts:
        if isinstance(s, tuple) and len(s) == 2 and (np.ndim(s[0]) == 1 or d == 1) and np.ndim(s[1]) == 0:
            xs.append(s[0])
            ts.append(float(s[1]))
        else:
            xs.append(s)
            ts.append(0.0)
    pos = _lattice_points(xs, d) if xs else np.zeros((0, d), dtype=np.int64)
    delay = np.asarray(ts, dtype=float)
    if np.any(delay < 0) or not np.all(np.isfinite(delay)):
        raise DomainError("activation delays must be finite and >= 0")
    return pos, delay


# --------------------------------------------------------------------------
# engine drivers


def _run_lattice(sampler: JumpSampler, rng: np.random.Generator, pos0, delay, horizon, *,
                 source_until=0.0, snap_time=-1.0, query_times=None, stop_on_origin=False,
                 log_cap=0, debug=False, diag_time=np.inf, id_cap=None, want_log=False):
    """Run the lattice engine, enlarging buffers (same random stream) if needed."""
    pos0 = np.ascontiguousarray(pos0, dtype=np.int64).reshape(-1, sampler.params.d)
    delay = np.ascontiguousarray(delay, dtype=float)
    order = np.argsort(delay, kind="stable").astype(np.int64)
    qt = np.ascontiguousarray(np.sort(np.asarray(query_times if query_times is not None else [], float)))
    n0 = pos0.shape[0]
    if id_cap is None:
        m = sampler.proposal_rate * source_until
        id_cap = n0 + 2 + (int(m + 8.0 * math.sqrt(m) + 16) if source_until > 0 else 0)
    state = rng.bit_generator.state
    args = sampler.arrays()
    for _ in range(_MAX_RETRY):
        out = _engine.lattice_engine(rng, pos0, delay, order, float(horizon), float(source_until),
                                     float(snap_time), qt, bool(stop_on_origin), int(id_cap),
                                     int(log_cap), bool(debug), float(diag_time), *args,
                                     ESCAPE_COORD)
        full_log = want_log and out[15].shape[0] >= log_cap
        if out[0] != _engine.STATUS_CAPACITY and not full_log:
            return out
        rng.bit_generator.state = state
        if out[0] == _engine.STATUS_CAPACITY:
            id_cap *= 2
        if full_log:
            log_cap = 2 * log_cap + 64
    raise RuntimeError("engine buffers kept overflowing")


def _run_torus(torus: TorusKernel, rng, site0, delay, horizon, query_times=None):
    site0 = np.ascontiguousarray(site0, dtype=np.int64)
    delay = np.ascontiguousarray(delay, dtype=float)
    order = np.argsort(delay, kind="stable").astype(np.int64)
    qt = np.ascontiguousarray(np.sort(np.asarray(query_times if query_times is not None else [], float)))
    return _engine.torus_engine(rng, site0, delay, order, float(horizon), qt, int(torus.L),
                                int(torus.params.d), torus.prob, torus.alias, float(torus.total),
                                int(site0.shape[0]))


def _flat_sites(points, L, d):
    pts = _lattice_points(points, d) % L
    mul = L ** np.arange(d, dtype=np.int64)
    return (pts * mul).sum(axis=1)


def _unflat(sites, L, d):
    sites = np.asarray(sites, dtype=np.int64)
    return np.stack([(sites // L ** i) % L for i in range(d)], axis=-1)


# --------------------------------------------------------------------------
# single walks


@dataclass
class WalkPath:
    """Piecewise-constant trajectory: ``positions[k]`` holds on [times[k], times[k+1])."""

    start: np.ndarray
    horizon: float
    jump_times: np.ndarray
    positions: np.ndarray  # (n_jumps + 1, d), first row is the start

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.shape[0])

    @property
    def end(self) -> np.ndarray:
        return self.positions[-1]

    def position_at(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon:
            raise DomainError("time outside [0, horizon]")
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.positions[k]

    def holding_times(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.jump_times]))


def simulate_walk(x0, T: float, sampler: JumpSampler, rng: np.random.Generator) -> WalkPath:
    """Exact continuous-time walk: Exp(lambda) holding times, jumps from the kernel."""
    if T < 0:
        raise DomainError("T must be >= 0")
    d = sampler.params.d
    start = np.asarray(x0, dtype=np.int64).reshape(d)
    m = sampler.rate * T
    log_cap = int(m + 8.0 * math.sqrt(m) + 32)
    out = _run_lattice(sampler, rng, start[None, :], np.zeros(1), T, log_cap=log_cap, want_log=True)
    times = out[15]
    pos = np.vstack([start[None, :], out[17]])
    if out[9].shape[0]:
        # an escaped walk has left any representable window; keep the
        # recorded part, the path is flagged by its final row
        pass
    return WalkPath(start, float(T), times, pos)


# --------------------------------------------------------------------------
# coalescing systems


@dataclass
class CoalescingSystem:
    """Outcome of one coalescing run.

    ``parent``/``link_t`` encode the partition history: walker i was merged
    into ``parent[i]`` at time ``link_t[i]`` (inf if never).  Walker ids
    are the indices into ``starts``.
    """

    starts: np.ndarray
    delays: np.ndarray
    horizon: float
    time: float
    parent: np.ndarray
    link_t: np.ndarray
    active_ids: np.ndarray
    active_pos: np.ndarray
    escaped_ids: np.ndarray
    merge_times: np.ndarray
    query_times: np.ndarray
    counts: np.ndarray
    n_jumps: int
    events: tuple | None = field(default=None, repr=False)
    torus_L: int | None = None

    @property
    def n_walkers(self) -> int:
        return int(self.starts.shape[0])

    def roots(self, time: float | None = None) -> np.ndarray:
        if time is None:
            return _engine.find_roots(self.parent)
        return _engine.roots_at(self.parent, self.link_t, float(time))

    def cardinality(self, time: float) -> int:
        """A_t: number of classes among walkers activated by `time`."""
        if time > self.time + 1e-12:
            raise DomainError("time beyond the simulated horizon")
        act = self.delays <= time
        return int(np.unique(self.roots(time)[act]).size)

    def partition(self, time: float | None = None) -> list:
        r = self.roots(time)
        groups: dict = {}
        for i, ri in enumerate(r):
            groups.setdefault(int(ri), []).append(i)
        return sorted(groups.values())

    def position(self, walker: int):
        """Current position of a walker's class, None if it escaped."""
        root = int(self.roots()[walker])
        hit = np.nonzero(self.active_ids == root)[0]
        if hit.size:
            return self.active_pos[hit[0]]
        if root in set(self.escaped_ids.tolist()):
            return None
        return self.starts[walker]  # never activated


def simulate_coalescing(starts: Sequence, T: float, rng: np.random.Generator,
                        sampler: JumpSampler | None = None, *, torus: TorusKernel | None = None,
                        query_times=None, record_events: bool = False,
                        debug: bool = False) -> CoalescingSystem:
    """Coalescing walks from ``starts`` = [(x_k, t_k), ...] (or bare sites) up to time T."""
    if (sampler is None) == (torus is None):
        raise ValueError("give exactly one of sampler or torus")
    d = (sampler or torus).params.d
    pos0, delay = _split_starts(starts, d)
    qt = np.sort(np.asarray(query_times if query_times is not None else [], float))
    if torus is not None:
        sites = _flat_sites(pos0, torus.L, d)
        t, parent, link_t, ids, site, mt, counts, nj = _run_torus(torus, rng, sites, delay, T, qt)
        return CoalescingSystem(pos0, delay, float(T), float(t), parent, link_t, ids,
                                _unflat(site, torus.L, d), np.zeros(0, np.int64), mt, qt, counts,
                                int(nj), None, torus.L)
    m = sampler.proposal_rate * T * max(len(pos0), 1)
    log_cap = int(m + 8.0 * math.sqrt(m) + 64) if record_events else 0
    out = _run_lattice(sampler, rng, pos0, delay, T, query_times=qt, log_cap=log_cap,
                       debug=debug, want_log=record_events)
    (_, t, parent, link_t, ids, pos, _, _, _, esc_id, _, mt, _, _, counts,
     ev_t, ev_id, ev_pos, nj, _, _) = out
    ev = (ev_t, ev_id, ev_pos) if record_events else None
    return CoalescingSystem(pos0, delay, float(T), float(t), parent, link_t, ids, pos, esc_id,
                            mt, qt, counts, int(nj), ev)


def dual_cardinalities(sites: Sequence, t: float, replicas: int, rng, *,
                       sampler: JumpSampler | None = None, torus: TorusKernel | None = None,
                       threads: int = 1) -> np.ndarray:
    """A_t for `replicas` independent coalescing runs from `sites` with zero delays."""
    if (sampler is None) == (torus is None):
        raise ValueError("give exactly one of sampler or torus")
    d = (sampler or torus).params.d
    pos0 = _lattice_points(sites, d)
    delay = np.zeros(pos0.shape[0])
    qt = np.array([float(t)])
    streams = as_streams(rng, "dual_moment")
    if torus is not None:
        flat = _flat_sites(pos0, torus.L, d)

        def one(i, g):
            return int(_run_torus(torus, g, flat, delay, t, qt)[6][0])
    else:
        def one(i, g):
            return int(_run_lattice(sampler, g, pos0, delay, t, query_times=qt)[14][0])
    return np.asarray(run_replicas(one, int(replicas), streams, threads), dtype=np.int64)


def dual_moment(sites: Sequence, t: float, p: float, replicas: int, rng, *,
                sampler: JumpSampler | None = None, torus: TorusKernel | None = None,
                threads: int = 1) -> Estimate:
    """Monte Carlo estimate of P(eta_t(x_i) = 1 for all i) under product Bernoulli(p)."""
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    if replicas < 2:
        raise DomainError("need at least 2 replicas")
    A = dual_cardinalities(sites, t, replicas, rng, sampler=sampler, torus=torus, threads=threads)
    est, se = _mean_se(float(p) ** A)
    return Estimate(est, se, replicas=int(replicas), mean_cardinality=float(A.mean()))


def _green_model(params: KernelParams, green):
    if green is not None:
        return green
    from .green import GreenModel
    return GreenModel(params)


def estimate_escape(x, T: float, replicas: int, rng, sampler: JumpSampler, *, green=None,
                    threads: int = 1, with_bias: bool = True) -> Estimate:
    """Fraction of difference walks from x (rate 2 lambda, i.e. walk time 2T) avoiding 0.

    The truncation at a finite horizon overestimates the escape probability by
    at most C * green_tail(2T), reported as ``bias_bound``.
    """
    d = sampler.params.d
    x = np.asarray(x, dtype=np.int64).reshape(d)
    if not x.any():
        return Estimate(0.0, 0.0, replicas=int(replicas), horizon=float(T), bias_bound=0.0)
    streams = as_streams(rng, "escape")
    pos0 = x[None, :]
    zero = np.zeros(1)

    def one(i, g):
        return _run_lattice(sampler, g, pos0, zero, 2.0 * T, stop_on_origin=True)[0] != _engine.STATUS_STOPPED

    esc = np.asarray(run_replicas(one, int(replicas), streams, threads), dtype=float)
    est, se = _mean_se(esc)
    bias = float("nan")
    if with_bias:
        gm = _green_model(sampler.params, green)
        bias = float(gm.capacity * gm.green_tail(2.0 * T))
    return Estimate(est, se, replicas=int(replicas), horizon=float(T), bias_bound=bias)


def estimate_capacity(T: float, replicas: int, rng, sampler: JumpSampler, *, green=None,
                      threads: int = 1, with_bias: bool = True) -> Estimate:
    """C = lambda * P(no return to 0), from walks stopped on their first return.

    The finite horizon overestimates C by at most lambda * C * green_tail(T).
    """
    streams = as_streams(rng, "capacity")
    d = sampler.params.d
    pos0 = np.zeros((1, d), dtype=np.int64)
    zero = np.zeros(1)

    def one(i, g):
        return _run_lattice(sampler, g, pos0, zero, T, stop_on_origin=True)[0] != _engine.STATUS_STOPPED

    q = np.asarray(run_replicas(one, int(replicas), streams, threads), dtype=float)
    est, se = _mean_se(q)
    lam = sampler.rate
    bias = float("nan")
    if with_bias:
        gm = _green_model(sampler.params, green)
        bias = float(lam * gm.capacity * gm.green_tail(T))
    return Estimate(lam * est, lam * se, replicas=int(replicas), horizon=float(T), bias_bound=bias)


# --------------------------------------------------------------------------
# stationary configurations


@dataclass
class StationarySample:
    window: np.ndarray
    config: np.ndarray  # 0/1 per window site
    labels: np.ndarray  # class index per window site
    class_pos: np.ndarray  # (n_classes, d); rows of escaped classes are meaningless
    class_escaped: np.ndarray
    merges: int
    late_merges: int
    T_burn: float


def _stationary_one(sampler, window, p, T_burn, g, debug=False):
    n = window.shape[0]
    out = _run_lattice(sampler, g, window, np.zeros(n), T_burn, debug=debug,
                       diag_time=T_burn / 10.0)
    parent, ids, pos, esc_id, mt, late = out[2], out[4], out[5], out[9], out[11], out[20]
    roots = _engine.find_roots(parent)
    uniq, labels = np.unique(roots, return_inverse=True)
    k = uniq.size
    cpos = np.zeros((k, window.shape[1]), dtype=np.int64)
    escaped = np.zeros(k, dtype=bool)
    where = np.searchsorted(uniq, ids)
    cpos[where] = pos
    escaped[np.searchsorted(uniq, esc_id)] = True
    # one Bernoulli(p) per surviving class, drawn after the dynamics
    vals = (g.random(k) < p).astype(np.uint8)
    return (vals[labels], labels.astype(np.int64), cpos, escaped, int(mt.size), int(late))


def sample_stationary(window: Sequence, p: float, T_burn: float, rng: np.random.Generator,
                      sampler: JumpSampler, *, debug: bool = False) -> StationarySample:
    """Approximate draw from the stationary law restricted to `window`.

    Coalescing walks run from every window site for T_burn; each class gets
    an independent Bernoulli(p) value.  ``late_merges`` counts coalescences
    in (T_burn/10, T_burn], a direct measure of how unfinished the limit is.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    if T_burn <= 0:
        raise DomainError("T_burn must be > 0")
    sampler.params.require_transient("the stationary law")
    w = _lattice_points(window, sampler.params.d)
    cfg, lab, cpos, esc, nm, late = _stationary_one(sampler, w, p, T_burn, rng, debug)
    return StationarySample(w, cfg, lab, cpos, esc, nm, late, float(T_burn))


@dataclass
class StationaryBatch:
    window: np.ndarray
    p: float
    T_burn: float
    configs: np.ndarray  # (n_samples, n_sites) uint8
    labels: np.ndarray  # (n_samples, n_sites)
    class_pos: list
    class_escaped: list
    merges: np.ndarray
    late_merges: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.configs.shape[0])

    def mean(self, i: int = 0) -> Estimate:
        return Estimate(*_mean_se(self.configs[:, i]))

    def covariance(self, i: int, j: int) -> Estimate:
        """Plain sample covariance of eta(x_i), eta(x_j) with a delta-method error."""
        a = self.configs[:, i].astype(float)
        b = self.configs[:, j].astype(float)
        n = a.size
        ma, mb = a.mean(), b.mean()
        z = (a - ma) * (b - mb)
        cov = z.sum() / (n - 1)
        return Estimate(cov, z.std(ddof=1) / math.sqrt(n))

    def pair_terms(self, i: int, j: int, green) -> np.ndarray:
        """Per-sample conditional covariance given the partition at T_burn.

        Same class: p(1-p).  Different classes at positions a, b: they merge
        later with probability C G(a - b).  Escaped classes never merge.
        """
        pq = self.p * (1.0 - self.p)
        n = self.n_samples
        out = np.empty(n)
        same = self.labels[:, i] == self.labels[:, j]
        out[same] = pq
        idx = np.nonzero(~same)[0]
        if idx.size:
            diff = np.stack([self.class_pos[s][self.labels[s, i]] - self.class_pos[s][self.labels[s, j]]
                             for s in idx])
            esc = np.array([self.class_escaped[s][self.labels[s, i]] or self.class_escaped[s][self.labels[s, j]]
                            for s in idx])
            g = np.zeros(idx.size)
            if np.any(~esc):
                g[~esc] = green.capacity * np.asarray(green.green_function(diff[~esc]), dtype=float)
            out[idx] = pq * g
        return out

    def rb_covariance(self, i: int, j: int, green) -> Estimate:
        """Conditional-expectation estimator: unbiased for the stationary covariance."""
        return Estimate(*_mean_se(self.pair_terms(i, j, green)))

    def bias_bound(self, green) -> float:
        """Upper bound on the deficit of the plain covariance estimator."""
        return float(self.p * (1 - self.p) * green.capacity * green.green_tail(2.0 * self.T_burn))


def stationary_batch(window: Sequence, p: float, T_burn: float, n_samples: int, rng,
                     sampler: JumpSampler, *, threads: int = 1) -> StationaryBatch:
    if T_burn <= 0:
        raise DomainError("T_burn must be > 0")
    sampler.params.require_transient("the stationary law")
    w = _lattice_points(window, sampler.params.d)
    streams = as_streams(rng, "stationary")
    res = run_replicas(lambda i, g: _stationary_one(sampler, w, p, T_burn, g), int(n_samples),
                       streams, threads)
    cfg = np.stack([r[0] for r in res]) if res else np.zeros((0, w.shape[0]), np.uint8)
    lab = np.stack([r[1] for r in res]) if res else np.zeros((0, w.shape[0]), np.int64)
    return StationaryBatch(w, float(p), float(T_burn), cfg, lab, [r[2] for r in res],
                           [r[3] for r in res], np.array([r[4] for r in res]),
                           np.array([r[5] for r in res]))


# --------------------------------------------------------------------------
# lineages of the origin's history


@dataclass
class OriginLineages:
    """Ancestral lineages of the origin over forward times [0, T].

    Reversed time r = T - u.  History segment k covers reversed times
    [seg_start[k], seg_end[k]); all of it traces back to one class, whose
    label at reversed time T is ``seg_root[k]``.  Those classes sit at
    ``root_pos`` (or have escaped), and ``final_label`` gives the class each
    of them belongs to after an extra burn-in period.
    """

    T: float
    burn: float
    seg_start: np.ndarray
    seg_end: np.ndarray
    seg_root: np.ndarray  # index into root_pos
    root_pos: np.ndarray
    root_escaped: np.ndarray
    final_label: np.ndarray
    n_final: int
    n_jumps: int

    @property
    def n_classes(self) -> int:
        return int(self.root_pos.shape[0])

    def weights(self, times) -> np.ndarray:
        """D[c, j] = forward time in [0, times[j]] whose lineage is class c."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        # forward interval (T - e, T - s]
        lo = self.T - self.seg_end
        hi = self.T - self.seg_start
        ov = np.clip(np.minimum(hi[:, None], times[None, :]) - np.maximum(lo[:, None], 0.0), 0.0, None)
        D = np.zeros((self.n_classes, times.size))
        np.add.at(D, self.seg_root, ov)
        return D

    def conditional_variance(self, times, p: float, green) -> np.ndarray:
        """Var(xi_t | lineages) for each t; averages to Var(xi_t) exactly."""
        D = self.weights(times)
        pq = p * (1.0 - p)
        out = (D * D).sum(axis=0)
        live = np.nonzero(~self.root_escaped)[0]
        if live.size > 1:
            Dl = D[live]
            out = out + 2.0 * _cross_green(self.root_pos[live], Dl, green)
        return pq * out

    def class_at(self, times) -> np.ndarray:
        """Class (index into root_pos) of the origin's lineage at forward times."""
        u = self.T - np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(u < 0) or np.any(u >= self.T):
            raise DomainError("forward times must lie in (0, T]")
        order = np.argsort(self.seg_start, kind="stable")
        k = np.searchsorted(self.seg_start[order], u, side="right") - 1
        k = order[k]
        if np.any(u >= self.seg_end[k]):
            raise AssertionError("history segments do not cover the window")
        return self.seg_root[k]

    def conditional_cov(self, s: float, t: float, p: float, green) -> float:
        """Cov(eta_s(0), eta_t(0) | lineages), exact given the classes at reversed time T."""
        a, b = self.class_at([s, t])
        pq = p * (1.0 - p)
        if a == b:
            return pq
        if self.root_escaped[a] or self.root_escaped[b]:
            return 0.0
        diff = self.root_pos[a] - self.root_pos[b]
        return pq * green.capacity * float(np.asarray(green.green_function(diff[None, :])).ravel()[0])

    def sample_values(self, times, p: float, rng: np.random.Generator) -> np.ndarray:
        """eta_t(0) at `times` with one Bernoulli(p) per class after the burn-in."""
        vals = (rng.random(self.n_final) < p).astype(np.uint8)
        return vals[self.final_label[self.class_at(times)]]

    def sample_path(self, times, p: float, rng: np.random.Generator) -> np.ndarray:
        """xi_t at `times` with opinions drawn per class after the burn-in."""
        vals = (rng.random(self.n_final) < p).astype(float)
        D = self.weights(times)
        return vals[self.final_label] @ D


def _cross_green(pos, D, green):
    """sum_{a<b} D_a D_b C G(x_a - x_b) for every column of D."""
    if hasattr(green, "pair_green_sum"):
        return green.pair_green_sum(pos, D)
    n = pos.shape[0]
    out = np.zeros(D.shape[1])
    C = green.capacity
    for a in range(n - 1):
        diff = pos[a + 1:] - pos[a]
        g = np.asarray(green.green_function(diff), dtype=float) * C
        out += D[a] * (g @ D[a + 1:])
    return out


def origin_lineages(T: float, sampler: JumpSampler, rng: np.random.Generator, *,
                    burn: float = 0.0, debug: bool = False) -> OriginLineages:
    """Coalescing lineages of the origin over a forward window of length T."""
    if T <= 0:
        raise DomainError("T must be > 0")
    d = sampler.params.d
    out = _run_lattice(sampler, rng, np.zeros((0, d), np.int64), np.zeros(0), T + burn,
                       source_until=T, snap_time=T, debug=debug)
    parent, link_t = out[2], out[3]
    snap_id, snap_pos, esc_id, esc_t = out[6], out[7], out[9], out[10]
    s0, s1, nj = out[12], out[13], out[18]
    nseg = s0.size
    seg_ids = np.arange(nseg)  # segment k has class id k (no initial walkers)
    r_T = _engine.roots_at(parent, link_t, float(T))
    roots = np.concatenate([snap_id, esc_id[esc_t <= T]])
    esc_flag = np.concatenate([np.zeros(snap_id.size, bool), np.ones(int((esc_t <= T).sum()), bool)])
    order = np.argsort(roots)
    roots = roots[order]
    esc_flag = esc_flag[order]
    rpos = np.zeros((roots.size, d), dtype=np.int64)
    rpos[np.searchsorted(roots, snap_id)] = snap_pos
    seg_root = np.searchsorted(roots, r_T[seg_ids])
    if np.any(roots[seg_root] != r_T[seg_ids]):
        raise AssertionError("segment class missing from the snapshot")
    fin = _engine.find_roots(parent)[roots]
    uf, final_label = np.unique(fin, return_inverse=True)
    return OriginLineages(float(T), float(burn), s0, s1, seg_root, rpos, esc_flag,
                          final_label.astype(np.int64), int(uf.size), int(nj))
