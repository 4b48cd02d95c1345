"""Long-range jump kernel w(y) = |y|_2^{-(d+alpha)} and exact jump sampling.

The sampler draws from the exact discrete law.  Jumps with |y|_2 <= R come
from a Walker alias table; the rest are proposed from a Pareto envelope over
l-infinity shells and accepted with probability w(y)/envelope(y).  Rejected
proposals can either be retried (:func:`sample_jump`) or treated as null
events of a thinned Poisson clock, which is what the simulators do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numba as nb
import numpy as np

from ._radial import sphere_area
from .errors import DomainError

__all__ = [
    "KernelParams",
    "LatticeVector",
    "kernel_weight",
    "kernel_mass",
    "JumpSampler",
    "sample_jump",
    "sample_jumps",
    "TorusKernel",
    "torus_kernel",
    "ESCAPE_COORD",
]

DEFAULT_EXACT_RADIUS = {1: 64, 2: 32, 3: 16}

# coordinates beyond this are treated as escaped to infinity (int64 headroom)
ESCAPE_COORD = 2 ** 60


@dataclass(frozen=True)
class KernelParams:
    d: int
    alpha: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be positive and finite, got {self.alpha!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def transient(self) -> bool:
        if self.d == 1:
            return self.alpha < 1.0
        if self.d == 2:
            return self.alpha < 2.0
        return True

    @property
    def exponent(self) -> float:
        return self.d + self.alpha

    def require_transient(self, what="this quantity"):
        from .errors import RecurrentError

        if not self.transient:
            raise RecurrentError(self.d, self.alpha, what)


@dataclass(frozen=True)
class LatticeVector:
    """Point of Z^d with exact integer arithmetic."""

    coords: tuple

    def __post_init__(self):
        c = tuple(int(v) for v in np.atleast_1d(self.coords))
        object.__setattr__(self, "coords", c)

    @property
    def d(self):
        return len(self.coords)

    def __add__(self, other):
        other = as_lattice(other)
        if other.d != self.d:
            raise DomainError("dimension mismatch")
        return LatticeVector(tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other):
        return self + (-as_lattice(other))

    def __neg__(self):
        return LatticeVector(tuple(-a for a in self.coords))

    def norm2(self) -> float:
        return math.sqrt(sum(a * a for a in self.coords))

    def norminf(self) -> int:
        return max(abs(a) for a in self.coords)

    def is_zero(self):
        return all(a == 0 for a in self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype or np.int64)

    def __iter__(self):
        return iter(self.coords)


def as_lattice(y) -> LatticeVector:
    if isinstance(y, LatticeVector):
        return y
    return LatticeVector(tuple(np.atleast_1d(np.asarray(y)).tolist()))


def kernel_weight(y, params: KernelParams) -> float:
    """w(y) = |y|_2^{-(d+alpha)} for y != 0."""
    v = as_lattice(y)
    if v.d != params.d:
        raise DomainError(f"expected a {params.d}-vector, got {v.coords}")
    if v.is_zero():
        raise DomainError("the kernel excludes the origin")
    r2 = sum(a * a for a in v.coords)
    return float(r2) ** (-0.5 * params.exponent)


def shell_counts(d: int, n_max: int) -> np.ndarray:
    """r_d(n) = #{y in Z^d : |y|^2 = n} for n = 0..n_max."""
    base = np.zeros(n_max + 1, dtype=np.int64)
    k = np.arange(0, math.isqrt(n_max) + 1)
    base[k * k] = 2
    base[0] = 1
    out = base.copy()
    for _ in range(d - 1):
        new = np.zeros_like(out)
        for kk in k:
            s = kk * kk
            mult = 1 if kk == 0 else 2
            new[s:] += mult * out[: n_max + 1 - s]
        out = new
    return out


def _midpoint_tail(d, alpha, R):
    return sphere_area(d) * (R + 0.5) ** (-alpha) / alpha


def kernel_mass(params: KernelParams, R: int | None = None, tail: str = "midpoint"):
    """Total jump rate lambda = sum_{y != 0} w(y).

    Exact sum over |y|_2 <= R plus the midpoint-corrected integral tail
    S_{d-1} (R+1/2)^{-alpha}/alpha.  Returns ``(lam, error_bound)``.
    """
    if R is None:
        R = 4096 if params.d == 1 else {2: 256, 3: 64}.get(params.d, 24)
    R = int(R)
    if R < 1:
        raise DomainError("R must be >= 1")
    d, a = params.d, params.alpha
    if d == 1:
        y = np.arange(R, 0, -1, dtype=float)
        exact = 2.0 * math.fsum(y ** (-1.0 - a))
    else:
        cnt = shell_counts(d, R * R)
        n = np.nonzero(cnt[1:])[0] + 1
        terms = cnt[n] * n.astype(float) ** (-0.5 * (d + a))
        exact = math.fsum(terms[::-1])
    if tail == "midpoint":
        t = _midpoint_tail(d, a, R)
    elif tail == "none":
        t = 0.0
    else:
        raise DomainError(f"unknown tail method {tail!r}")
    return exact + t, mass_error_bound(params, R)


def mass_error_bound(params: KernelParams, R: int) -> float:
    """Bound on |sum_{|y|>R} w(y) - midpoint tail integral|."""
    d, a = params.d, params.alpha
    S = sphere_area(d)
    if d == 1:
        # convexity: exact cell comparison, second-order remainder
        return (1.0 + a) * R ** (-2.0 - a) / 6.0
    h = math.sqrt(d) / 2.0
    lo = max(R - h, 0.5)
    shell = S * (lo ** (-a) - (R + h) ** (-a)) / a
    grad = 2.0 * h * (d + a) * S * max(R - 2 * h, 0.5) ** (-1.0 - a) / (1.0 + a)
    return shell + grad


# --------------------------------------------------------------------------
# alias tables


def build_alias(weights):
    """Vose alias table; returns (prob, alias) for a uniform column pick."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    scaled = w * (n / w.sum())
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] + scaled[s] - 1.0
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@nb.njit(cache=True)
def _alias_draw(rng, prob, alias):
    n = prob.shape[0]
    u = rng.random() * n
    i = int(u)
    if i >= n:
        i = n - 1
    if u - i < prob[i]:
        return i
    return alias[i]


def _ball_points(d, R):
    """All y with 0 < |y|_2 <= R in a fixed lexicographic order."""
    axis = np.arange(-R, R + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    r2 = (pts * pts).sum(axis=1)
    keep = (r2 > 0) & (r2 <= R * R)
    return pts[keep]


def _shell_size(d, k):
    return (2 * k + 1) ** d - (2 * k - 1) ** d


@dataclass(frozen=True, eq=False)
class JumpSampler:
    """Exact sampler for the jump law w(y)/lambda.

    ``proposal_rate`` is the total rate of a thinned clock: alias mass plus
    the tail envelope mass.  Proposals beyond R are accepted with
    probability w(y)/envelope(y), which makes accepted tail jumps occur at
    exactly the tail rate.
    """

    params: KernelParams
    exact_radius: int
    points: np.ndarray = field(repr=False)
    prob: np.ndarray = field(repr=False)
    alias: np.ndarray = field(repr=False)
    exact_mass: float
    tail_mass: float
    env_const: float
    env_k0: int
    env_mass: float
    max_iter: int = 1_000_000

    @classmethod
    def build(cls, params: KernelParams, R: int | None = None, max_iter: int = 1_000_000):
        R = int(R if R is not None else DEFAULT_EXACT_RADIUS.get(params.d, 8))
        if R < 1:
            raise DomainError("exact radius must be >= 1")
        d, a = params.d, params.alpha
        pts = _ball_points(d, R)
        w = (pts * pts).sum(axis=1).astype(float) ** (-0.5 * (d + a))
        prob, alias = build_alias(w)
        exact = math.fsum(w)
        k0 = int(math.floor(R / math.sqrt(d))) + 1
        # n_k k^{-d-a} <= A * int_{k-1/2}^{k+1/2} s^{-1-a} ds for k >= k0
        A = d * 2.0 ** d * _shell_size(d, k0) / (2.0 * d * (2.0 * k0) ** (d - 1))
        env = A * (k0 - 0.5) ** (-a) / a
        lam, _ = kernel_mass(params)
        return cls(params, R, pts, prob, alias, exact, lam - exact, A, k0, env, max_iter)

    @cached_property
    def rate(self) -> float:
        """Total kernel mass lambda (alias mass + tail mass)."""
        return self.exact_mass + self.tail_mass

    @property
    def proposal_rate(self) -> float:
        return self.exact_mass + self.env_mass

    @property
    def acceptance_rate(self) -> float:
        return self.rate / self.proposal_rate

    def arrays(self):
        """Flat argument tuple consumed by the numba draw routines."""
        return (self.points, self.prob, self.alias, self.exact_mass, self.proposal_rate,
                float(self.env_k0), self.env_const, self.params.alpha,
                float(self.exact_radius) ** 2)

    def exact_probabilities(self):
        w = (self.points * self.points).sum(axis=1).astype(float) ** (-0.5 * self.params.exponent)
        return w / self.rate


@nb.njit(cache=True)
def propose_jump(rng, out, points, prob, alias, exact_mass, prop_rate, k0, A, alpha, R2):
    """One proposal of the thinned jump clock.

    Writes a jump into ``out`` and returns 1, returns 0 for a null event,
    or 2 if the jump overflows the coordinate range (escape to infinity).
    """
    d = out.shape[0]
    u = rng.random() * prop_rate
    if u < exact_mass:
        j = _alias_draw(rng, prob, alias)
        for i in range(d):
            out[i] = points[j, i]
        return 1
    # Pareto envelope over l-inf shells
    v = 1.0 - rng.random()
    s = (k0 - 0.5) * v ** (-1.0 / alpha)
    if s > 1e18:
        return 2
    k = np.int64(math.floor(s + 0.5))
    kf = float(k)
    if d == 1:
        out[0] = k if rng.random() < 0.5 else -k
        r2 = float(k) * float(k)
        nk = 2.0
    else:
        # uniform point on the l-inf sphere of radius k
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
    uk = A / alpha * (kf - 0.5) ** (-alpha) * (-math.expm1(alpha * math.log1p(-1.0 / (kf + 0.5))))
    acc = r2 ** (-0.5 * (d + alpha)) * nk / uk
    if rng.random() < acc:
        return 1
    return 0


@nb.njit(cache=True)
def _sample_jump_loop(rng, out, points, prob, alias, exact_mass, prop_rate, k0, A, alpha, R2,
                      max_iter):
    for it in range(max_iter):
        r = propose_jump(rng, out, points, prob, alias, exact_mass, prop_rate, k0, A, alpha, R2)
        if r == 1:
            return it + 1
        if r == 2:
            return -(it + 1)
    return 0


def sample_jump(sampler: JumpSampler, rng: np.random.Generator) -> LatticeVector:
    """Draw y with probability w(y)/lambda by retrying rejected proposals."""
    out = np.zeros(sampler.params.d, dtype=np.int64)
    n = _sample_jump_loop(rng, out, *sampler.arrays(), sampler.max_iter)
    if n == 0:
        raise RuntimeError("jump rejection loop exceeded its iteration cap; envelope is broken")
    if n < 0:
        raise OverflowError("sampled jump exceeds the int64 coordinate range")
    return LatticeVector(tuple(out.tolist()))


def sample_jumps(sampler: JumpSampler, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorised convenience wrapper: n exact jumps as an (n, d) array."""
    return _sample_many(rng, n, sampler.params.d, *sampler.arrays(), sampler.max_iter)


@nb.njit(cache=True)
def _sample_many(rng, n, d, points, prob, alias, exact_mass, prop_rate, k0, A, alpha, R2, max_iter):
    res = np.zeros((n, d), dtype=np.int64)
    out = np.zeros(d, dtype=np.int64)
    for j in range(n):
        while True:
            r = _sample_jump_loop(rng, out, points, prob, alias, exact_mass, prop_rate, k0, A,
                                  alpha, R2, max_iter)
            if r > 0:
                break
            if r == 0:
                raise RuntimeError("jump rejection loop exceeded its iteration cap")
        for i in range(d):
            res[j, i] = out[i]
    return res


# --------------------------------------------------------------------------
# torus


@dataclass(frozen=True, eq=False)
class TorusKernel:
    """Folded jump weights on (Z/LZ)^d.

    ``weights[k]`` is the folded rate of the displacement with flat index k
    (coordinate i is ``(k // L**i) % L``); index 0 is the zero displacement
    and has weight 0.  Images are kept while |y|_inf <= 3.5 L, i.e. three
    images per axis on either side of the minimal one.
    """

    params: KernelParams
    L: int
    weights: np.ndarray = field(repr=False)
    total: float
    truncation_bound: float
    prob: np.ndarray = field(repr=False)
    alias: np.ndarray = field(repr=False)

    @property
    def n_sites(self):
        return self.L ** self.params.d

    def weight(self, z) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=np.int64)) % self.L
        k = int(sum(int(z[i]) * self.L ** i for i in range(self.params.d)))
        return float(self.weights[k])

    def displacement(self, k):
        return np.array([(k // self.L ** i) % self.L for i in range(self.params.d)], dtype=np.int64)


def torus_kernel(params: KernelParams, L: int, images: int = 3) -> TorusKernel:
    if L != int(L) or L < 4:
        raise DomainError("torus side L must be an integer >= 4")
    L = int(L)
    if L % 2:
        raise DomainError("torus side L must be even (minimal image is ambiguous for odd L)")
    d, a = params.d, params.alpha
    reach = images * L + L // 2
    folded = np.zeros(L ** d)
    axis = np.arange(-reach, reach + 1, dtype=np.int64)
    # fold slab by slab along the first axis to bound memory
    if d == 1:
        y = axis[axis != 0]
        np.add.at(folded, y % L, np.abs(y).astype(float) ** (-1.0 - a))
    else:
        rest = np.meshgrid(*([axis] * (d - 1)), indexing="ij")
        rest = [g.ravel() for g in rest]
        rest_r2 = sum(g.astype(float) ** 2 for g in rest)
        rest_idx = sum((g % L) * L ** (i + 1) for i, g in enumerate(rest))
        for y0 in axis:
            r2 = rest_r2 + float(y0) ** 2
            w = np.zeros_like(r2)
            nz = r2 > 0
            w[nz] = r2[nz] ** (-0.5 * (d + a))
            np.add.at(folded, rest_idx + (y0 % L), w)
    folded[0] = 0.0  # displacements congruent to 0 never change the state
    m = reach + 1
    A = d * 2.0 ** d * _shell_size(d, m) / (2.0 * d * (2.0 * m) ** (d - 1))
    bound = A * (m - 0.5) ** (-a) / a
    prob, alias = build_alias(folded)
    return TorusKernel(params, L, folded, math.fsum(folded), bound, prob, alias)
