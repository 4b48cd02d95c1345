"""Forward voter dynamics on the torus, occupation times and the fluctuation field.

The torus engine realises the graphical construction directly: events come
at total rate L^d lambda_L, a uniform site x copies the opinion of x + z with
z drawn from the folded kernel.  Copies of an equal opinion are no-ops but
still consume an event, so the clock is never thinned.

Long stationary windows are out of reach on a torus of desk size (heavy
jumps wrap around long before the walk has spread), so the occupation
process at the origin under the stationary law is also generated on Z^d
from the lineages of the origin (``coalesce.origin_lineages``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .coalesce import Estimate, _mean_se, origin_lineages, sample_stationary, stationary_batch
from .errors import DomainError, GuardViolation
from .kernel import JumpSampler, KernelParams, TorusKernel, torus_kernel
from .spectral import _h_guard, scaling_Lambda
from .streams import as_streams, run_replicas

__all__ = [
    "Product",
    "Explicit",
    "Stationary",
    "VoterState",
    "init_state",
    "run",
    "OccupationObserver",
    "SnapshotObserver",
    "FieldObserver",
    "OccupationRecord",
    "occupation_time",
    "forward_moment",
    "OccupationConfig",
    "OccupationPaths",
    "centered_occupation_paths",
    "stationary_autocov",
    "torus_stationary_autocov",
    "FieldObservable",
    "gaussian_bump",
    "field_second_moment_predictor",
    "field_second_moment",
    "finite_size_guard",
]


# --------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class Product:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError("product density p must lie in [0, 1]")


@dataclass(frozen=True)
class Explicit:
    config: np.ndarray


@dataclass(frozen=True)
class Stationary:
    p: float
    T_burn: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DomainError("stationary density p must lie in (0, 1)")
        if not self.T_burn > 0:
            raise DomainError("T_burn must be > 0")


@dataclass
class VoterState:
    L: int
    d: int
    eta: np.ndarray  # uint8, flat index sum_i x_i L^i
    time: float
    torus: TorusKernel = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.L ** self.d

    @property
    def rate_per_site(self) -> float:
        return self.torus.total

    @property
    def total_rate(self) -> float:
        return self.n_sites * self.torus.total

    def copy(self) -> "VoterState":
        return VoterState(self.L, self.d, self.eta.copy(), self.time, self.torus)

    def grid(self) -> np.ndarray:
        return self.eta.reshape((self.L,) * self.d, order="F")

    def sites(self) -> np.ndarray:
        """Z^d coordinates of the flat sites, minimal images in [-L/2, L/2)."""
        k = np.arange(self.n_sites)
        c = np.stack([(k // self.L ** i) % self.L for i in range(self.d)], axis=1)
        return np.where(c >= self.L // 2, c - self.L, c)


def _torus_coords(L, d):
    k = np.arange(L ** d)
    c = np.stack([(k // L ** i) % L for i in range(d)], axis=1)
    return np.where(c >= L // 2, c - L, c)


def init_state(L: int, d: int, law, rng, *, params: KernelParams | None = None,
               torus: TorusKernel | None = None, sampler: JumpSampler | None = None) -> VoterState:
    """Initial configuration from product(p), an explicit array, or stationary(p, T_burn).

    The stationary branch draws the whole torus window from the Z^d
    stationary law with the dual sampler.
    """
    if torus is None:
        if params is None:
            raise DomainError("give the kernel params or a torus kernel")
        torus = torus_kernel(params, L)
    if torus.L != L or torus.params.d != d:
        raise DomainError("torus kernel does not match (L, d)")
    n = L ** d
    if isinstance(law, Product):
        if law.p in (0.0, 1.0):
            eta = np.full(n, int(law.p), dtype=np.uint8)
        else:
            eta = (rng.random(n) < law.p).astype(np.uint8)
    elif isinstance(law, Explicit):
        eta = np.asarray(law.config).reshape(-1, order="F").astype(np.uint8)
        if eta.size != n or np.any(eta > 1):
            raise DomainError("explicit configuration must be a 0/1 array with L^d entries")
        eta = eta.copy()
    elif isinstance(law, Stationary):
        sampler = sampler or JumpSampler.build(torus.params)
        smp = sample_stationary(_torus_coords(L, d), law.p, law.T_burn, rng, sampler)
        eta = smp.config.astype(np.uint8)
    else:
        raise DomainError(f"unknown initial law {law!r}")
    return VoterState(int(L), int(d), eta, 0.0, torus)


# --------------------------------------------------------------------------
# forward engine


@nb.njit(cache=True)
def _forward(rng, eta, L, d, prob, alias, rate, T, obs, checkpoints, snap_times, debug):
    n = eta.size
    total = rate * n
    K = prob.size
    t = 0.0
    ones = 0
    for i in range(n):
        ones += eta[i]
    m = obs.size
    xi = np.zeros(m)
    partial = np.zeros((m, checkpoints.size))
    snaps = np.zeros((snap_times.size, n), dtype=np.uint8)
    ic = 0
    isnap = 0
    n_ev = 0
    n_chg = 0
    while True:
        t_next = t + rng.standard_exponential() / total
        t_end = min(t_next, T)
        while ic < checkpoints.size and checkpoints[ic] <= t_end:
            for j in range(m):
                partial[j, ic] = xi[j] + eta[obs[j]] * (checkpoints[ic] - t)
            ic += 1
        while isnap < snap_times.size and snap_times[isnap] < t_next and snap_times[isnap] <= T:
            snaps[isnap, :] = eta
            isnap += 1
        if t_next >= T:
            for j in range(m):
                xi[j] += eta[obs[j]] * (T - t)
            t = T
            break
        for j in range(m):
            xi[j] += eta[obs[j]] * (t_next - t)
        t = t_next
        u = rng.random() * n
        x = int(u)
        if x >= n:
            x = n - 1
        u = rng.random() * K
        col = int(u)
        if col >= K:
            col = K - 1
        k = col if u - col < prob[col] else alias[col]
        src = 0
        stride = 1
        xx = x
        kk = k
        for i in range(d):
            c = (xx % L + kk % L) % L
            src += c * stride
            stride *= L
            xx //= L
            kk //= L
        n_ev += 1
        if eta[src] != eta[x]:
            if debug and (ones == 0 or ones == n):
                raise AssertionError("absorbing configuration changed")
            if eta[src] == 1:
                ones += 1
            else:
                ones -= 1
            eta[x] = eta[src]
            n_chg += 1
    return xi, partial, snaps, n_ev, n_chg


class OccupationObserver:
    """Exact integral of eta_u(site) du, optionally at checkpoint times."""

    def __init__(self, sites=(0,), checkpoints=()):
        self.sites = sites
        self.checkpoints = np.sort(np.asarray(checkpoints, dtype=float))
        self.result = None

    def flat_sites(self, state: VoterState) -> np.ndarray:
        pts = np.array([np.atleast_1d(np.asarray(s, dtype=np.int64)) for s in self.sites])
        if pts.shape[1] == 1 and state.d > 1:
            # bare integers are flat site indices
            return pts[:, 0] % state.n_sites
        if pts.shape[1] != state.d:
            raise DomainError("observation sites have the wrong dimension")
        mul = state.L ** np.arange(state.d, dtype=np.int64)
        return ((pts % state.L) * mul).sum(axis=1)

    def collect(self, state, T, xi, partial, snaps):
        self.result = [OccupationRecord(s, T, float(xi[j]), self.checkpoints.copy(), partial[j].copy())
                       for j, s in enumerate(self.sites)]


class SnapshotObserver:
    def __init__(self, times):
        self.times = np.sort(np.asarray(times, dtype=float))
        self.result = None

    def collect(self, state, T, xi, partial, snaps):
        self.result = snaps


class FieldObserver:
    """Values of a FieldObservable at snapshot times."""

    def __init__(self, observable: "FieldObservable", times):
        self.observable = observable
        self.times = np.sort(np.asarray(times, dtype=float))
        self.result = None

    def collect(self, state, T, xi, partial, snaps):
        self.result = np.array([self.observable.value_torus(state, s) for s in snaps])


@dataclass
class OccupationRecord:
    site: object
    T: float
    xi: float
    checkpoints: np.ndarray
    partial: np.ndarray


def run(state: VoterState, T: float, observers: Sequence = (), rng=None, *, debug: bool = False):
    """Advance `state` in place by T and fill each observer's ``result``.

    Observers only read the trajectory; their order never changes anything.
    """
    if T < 0:
        raise DomainError("T must be >= 0")
    if rng is None:
        raise DomainError("an explicit Generator is required")
    sites, cps, snap = [], [], []
    spans = []
    for ob in observers:
        if isinstance(ob, OccupationObserver):
            fs = ob.flat_sites(state)
            spans.append(("occ", len(sites), len(sites) + fs.size, len(cps), len(cps) + ob.checkpoints.size))
            sites.extend(fs.tolist())
            cps.extend(ob.checkpoints.tolist())
        elif isinstance(ob, (SnapshotObserver, FieldObserver)):
            spans.append(("snap", len(snap), len(snap) + ob.times.size))
            snap.extend(ob.times.tolist())
        else:
            raise DomainError(f"unknown observer {ob!r}")
    cp_all = np.array(sorted(set(cps)), dtype=float)
    sn_all = np.array(sorted(set(snap)), dtype=float)
    # relative times
    xi, partial, snaps, n_ev, n_chg = _forward(rng, state.eta, state.L, state.d, state.torus.prob,
                                               state.torus.alias, float(state.torus.total), float(T),
                                               np.asarray(sites, dtype=np.int64), cp_all, sn_all, debug)
    for ob, sp in zip(observers, spans):
        if sp[0] == "occ":
            cidx = np.searchsorted(cp_all, ob.checkpoints)
            ob.collect(state, T, xi[sp[1]:sp[2]], partial[sp[1]:sp[2]][:, cidx], None)
        else:
            ob.collect(state, T, None, None, snaps[np.searchsorted(sn_all, ob.times)])
    state.time += T
    return state, {"events": int(n_ev), "changes": int(n_chg)}


def occupation_time(state: VoterState, site, T: float, rng, checkpoints=(), *, debug: bool = False):
    """Run a copy of `state` for T and return the occupation record of `site`."""
    ob = OccupationObserver([site], checkpoints)
    run(state.copy(), T, [ob], rng, debug=debug)
    return ob.result[0]


def forward_moment(sites, t: float, law, replicas: int, rng, *, torus: TorusKernel,
                   threads: int = 1) -> Estimate:
    """P(eta_t(x) = 1 for every x in `sites`) from forward torus runs."""
    L, d = torus.L, torus.params.d
    streams = as_streams(rng, "forward_moment")
    ob_sites = [np.atleast_1d(s) for s in sites]

    def one(i, g):
        st = init_state(L, d, law, g, torus=torus)
        ob = SnapshotObserver([t])
        run(st, t, [ob], g)
        snap = ob.result[0]
        mul = L ** np.arange(d, dtype=np.int64)
        idx = [int(((np.asarray(s) % L) * mul).sum()) for s in ob_sites]
        return float(np.all(snap[idx] == 1))

    vals = np.array(run_replicas(one, int(replicas), streams, threads))
    est, se = _mean_se(vals)
    return Estimate(est, se, replicas=int(replicas))


# --------------------------------------------------------------------------
# occupation paths under the stationary law


def finite_size_guard(L: int, T_max: float, alpha: float) -> None:
    """Refuse when h_alpha(T_max) > L/8; the error carries a sufficient L."""
    h = _h_guard(max(T_max, 1.0), alpha)
    if h > L / 8.0:
        need = 8.0 * h
        sugg = 1 << int(math.ceil(math.log2(need)))
        raise GuardViolation(f"h_alpha({T_max:g}) = {h:.4g} exceeds L/8 = {L / 8:g}; use L >= {sugg}",
                             suggested_L=sugg)


@dataclass
class OccupationConfig:
    d: int
    alpha: float
    p: float
    L: int
    N_list: Sequence[int]
    t_grid: Sequence[float]
    replicas: int
    T_burn: float = 0.0
    method: str = "lineage"

    def validate(self):
        KernelParams(self.d, self.alpha).require_transient("stationary occupation paths")
        if not 0 < self.p < 1:
            raise DomainError("p must lie in (0, 1)")
        if self.replicas < 1:
            raise DomainError("need at least one replica")
        t = np.asarray(self.t_grid, dtype=float)
        if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0) or t[-1] > 1.0:
            raise DomainError("t_grid must be increasing within (0, 1]")
        if self.method == "torus":
            finite_size_guard(self.L, max(self.N_list) * float(t[-1]), self.alpha)
        elif self.method != "lineage":
            raise DomainError(f"unknown method {self.method!r}")


@dataclass
class OccupationPaths:
    config: OccupationConfig
    N: np.ndarray
    t: np.ndarray
    paths: np.ndarray  # (replicas, nN, nt): xi_{tN} - p t N
    cond_var: np.ndarray | None  # (replicas, nN, nt): Var given the lineages, or None
    Lambda: np.ndarray
    n_jumps: np.ndarray

    def normalized(self) -> np.ndarray:
        return self.paths / self.Lambda[None, :, None]

    def variance(self, j: int | None = None) -> list:
        """Var(xi_N - p N) per N as an Estimate (conditional form when available)."""
        k = self.t.size - 1 if j is None else j
        out = []
        for i in range(self.N.size):
            if self.cond_var is not None:
                est, se = _mean_se(self.cond_var[:, i, k])
            else:
                x = self.paths[:, i, k]
                est = float(np.mean(x ** 2))
                se = float(np.std(x ** 2, ddof=1) / math.sqrt(x.size))
            out.append(Estimate(est, se, replicas=int(self.paths.shape[0]), N=int(self.N[i])))
        return out

    def to_rows(self):
        R, nN, nt = self.paths.shape
        for r in range(R):
            for i in range(nN):
                for j in range(nt):
                    yield (r, int(self.N[i]), float(self.t[j]), float(self.paths[r, i, j]), float(self.Lambda[i]))


def centered_occupation_paths(config: OccupationConfig, rng, *, green=None, threads: int = 1,
                              sampler: JumpSampler | None = None) -> OccupationPaths:
    """xi_{tN} - p t N for every replica, N and t.

    method "lineage": exact stationary process at the origin of Z^d built
    from the origin's lineages; classes still apart after T_burn get
    independent opinions, and with `green` the exact conditional variance
    given the lineages is returned as well.
    method "torus": forward runs from a stationary window, guarded by
    h_alpha(max tN) <= L/8.
    """
    config.validate()
    params = KernelParams(config.d, config.alpha)
    p = float(config.p)
    N = np.asarray(config.N_list, dtype=np.int64)
    t = np.asarray(config.t_grid, dtype=float)
    R = int(config.replicas)
    Lam = np.array([scaling_Lambda(float(n), config.d, config.alpha) for n in N])
    streams = as_streams(rng, "occupation")
    paths = np.zeros((R, N.size, t.size))
    cvar = np.zeros((R, N.size, t.size)) if (green is not None and config.method == "lineage") else None
    jumps = np.zeros((R, N.size), dtype=np.int64)
    if config.method == "lineage":
        sampler = sampler or JumpSampler.build(params)
        for i, n in enumerate(N):
            times = t * float(n)

            def one(r, g, times=times, n=n):
                lin = origin_lineages(float(n), sampler, g, burn=float(config.T_burn))
                xi = lin.sample_path(times, p, g)
                cv = lin.conditional_variance(times, p, green) if cvar is not None else None
                return xi - p * times, cv, lin.n_jumps

            res = run_replicas(one, R, streams.child(f"N{int(n)}"), threads)
            for r, (x, cv, nj) in enumerate(res):
                paths[r, i] = x
                if cvar is not None:
                    cvar[r, i] = cv
                jumps[r, i] = nj
    else:
        torus = torus_kernel(params, config.L)
        sampler = sampler or JumpSampler.build(params)
        for i, n in enumerate(N):
            times = t * float(n)

            def one(r, g, times=times, n=n):
                st = init_state(config.L, config.d, Stationary(p, config.T_burn or 1000.0), g,
                                torus=torus, sampler=sampler)
                ob = OccupationObserver([0], times)
                _, info = run(st, float(n), [ob], g)
                return ob.result[0].partial - p * times, info["events"]

            res = run_replicas(one, R, streams.child(f"N{int(n)}"), threads)
            for r, (x, ne) in enumerate(res):
                paths[r, i] = x
                jumps[r, i] = ne
    return OccupationPaths(config, N, t, paths, cvar, Lam, jumps)


def stationary_autocov(thetas, p: float, replicas: int, rng, sampler: JumpSampler, green, *,
                       burn: float = 0.0, threads: int = 1) -> dict:
    """Cov(eta_theta(0), eta_0(0)) under the stationary law on Z^d.

    Each replica draws the lineages of the origin over a window of length
    max(theta) + 1; the returned estimate averages the exact conditional
    covariance given the lineages (``rb``), and ``raw`` uses sampled opinions
    with classes still apart after `burn` treated as independent.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if np.any(thetas < 0):
        raise DomainError("theta must be >= 0")
    T = float(thetas.max()) + 1.0
    s0 = 1.0
    streams = as_streams(rng, "autocov")

    def one(i, g):
        lin = origin_lineages(T, sampler, g, burn=burn)
        rb = [lin.conditional_cov(s0, s0 + th, p, green) for th in thetas]
        v = lin.sample_values(np.concatenate([[s0], s0 + thetas]), p, g).astype(float)
        raw = (v[1:] - p) * (v[0] - p)
        return rb, raw

    res = run_replicas(one, int(replicas), streams, threads)
    rb = np.array([r[0] for r in res])
    raw = np.array([r[1] for r in res])
    out = {}
    for j, th in enumerate(thetas):
        out[float(th)] = {"rb": Estimate(*_mean_se(rb[:, j]), replicas=int(replicas)),
                          "raw": Estimate(*_mean_se(raw[:, j]), replicas=int(replicas))}
    return out


def torus_stationary_autocov(thetas, p: float, replicas: int, rng, *, torus: TorusKernel,
                             T_burn: float, sampler: JumpSampler | None = None, threads: int = 1) -> dict:
    """Same covariance from forward torus runs started from a stationary window.

    The jumps that wrap around the torus bias this estimate upward; it is
    kept as a diagnostic next to ``stationary_autocov``.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    L, d = torus.L, torus.params.d
    sampler = sampler or JumpSampler.build(torus.params)
    streams = as_streams(rng, "torus_autocov")

    def one(i, g):
        st = init_state(L, d, Stationary(p, T_burn), g, torus=torus, sampler=sampler)
        e0 = float(st.eta[0])
        ob = SnapshotObserver(thetas)
        run(st, float(thetas.max()), [ob], g)
        return (ob.result[:, 0].astype(float) - p) * (e0 - p)

    vals = np.array(run_replicas(one, int(replicas), streams, threads))
    return {float(th): Estimate(*_mean_se(vals[:, j]), replicas=int(replicas)) for j, th in enumerate(thetas)}


# --------------------------------------------------------------------------
# fluctuation field


def gaussian_bump(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * (u ** 2).sum(axis=-1))


@dataclass
class FieldObservable:
    """eps^{(d+alpha)/2} sum_x (eta(x) - p) f(eps x) over `window`."""

    f: Callable
    eps: float
    p: float
    window: np.ndarray
    alpha: float

    def __post_init__(self):
        self.window = np.asarray(self.window, dtype=np.int64)
        if self.window.ndim == 1:
            self.window = self.window[:, None]
        if not self.eps > 0:
            raise DomainError("eps must be > 0")
        self.fvals = np.asarray(self.f(self.eps * self.window.astype(float)), dtype=float).reshape(-1)

    @property
    def d(self):
        return self.window.shape[1]

    @property
    def prefactor(self) -> float:
        return self.eps ** (0.5 * (self.d + self.alpha))

    def value(self, config) -> float:
        c = np.asarray(config, dtype=float).reshape(-1)
        return self.prefactor * float(((c - self.p) * self.fvals).sum())

    def values(self, configs) -> np.ndarray:
        c = np.asarray(configs, dtype=float)
        return self.prefactor * ((c - self.p) @ self.fvals)

    def value_torus(self, state: VoterState, snap=None) -> float:
        eta = state.eta if snap is None else snap
        mul = state.L ** np.arange(state.d, dtype=np.int64)
        idx = ((self.window % state.L) * mul).sum(axis=1)
        return self.value(eta[idx])


def field_second_moment_predictor(obs: FieldObservable, model, block: int = 4096) -> float:
    """p(1-p) eps^{d+alpha} sum_x sum_y (1 - Phi(x - y)) f(eps x) f(eps y).

    The double sum is exact; windows larger than `block` sites are summed
    block by block.
    """
    if not 0.0 < obs.p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    f = obs.fvals
    w = obs.window
    n = f.size
    nz = np.nonzero(f)[0]
    f, w = f[nz], w[nz]
    n = f.size
    total = 0.0
    for a0 in range(0, n, block):
        a1 = min(a0 + block, n)
        for b0 in range(0, n, block):
            b1 = min(b0 + block, n)
            diff = (w[a0:a1, None, :] - w[None, b0:b1, :]).reshape(-1, w.shape[1])
            one_minus = 1.0 - np.asarray(model.escape_probability(diff), dtype=float)
            total += float(f[a0:a1] @ one_minus.reshape(a1 - a0, b1 - b0) @ f[b0:b1])
    return obs.p * (1.0 - obs.p) * obs.prefactor ** 2 * total


def field_second_moment(obs: FieldObservable, T_burn: float, n_samples: int, rng, sampler: JumpSampler,
                        green, *, threads: int = 1) -> dict:
    """Empirical E[Y(f)^2] under stationary windows.

    ``rb`` averages the exact second moment given the dual partition at
    T_burn (classes merge later with probability C G of their distance);
    ``raw`` squares the field of the sampled configurations.
    """
    batch = stationary_batch(obs.window, obs.p, T_burn, n_samples, rng, sampler, threads=threads)
    pq = obs.p * (1.0 - obs.p)
    pre2 = obs.prefactor ** 2
    rb = np.empty(batch.n_samples)
    for s in range(batch.n_samples):
        lab = batch.labels[s]
        k = batch.class_pos[s].shape[0]
        Fc = np.bincount(lab, weights=obs.fvals, minlength=k)
        live = np.nonzero(~batch.class_escaped[s] & (Fc != 0))[0]
        cross = 0.0
        if live.size > 1:
            cross = 2.0 * float(green.pair_green_sum(batch.class_pos[s][live], Fc[live])[0])
        rb[s] = pq * pre2 * (float((Fc ** 2).sum()) + cross)
    raw = obs.values(batch.configs) ** 2
    return {"rb": Estimate(*_mean_se(rb), samples=batch.n_samples),
            "raw": Estimate(*_mean_se(raw), samples=batch.n_samples),
            "late_merges": float(batch.late_merges.mean())}
