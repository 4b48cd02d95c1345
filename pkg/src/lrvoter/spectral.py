"""Symbol of the walk, transition tables, stable limits and scaling functions.

The symbol is phi(theta) = sum_{y != 0} (1 - cos(theta . y)) |y|^{-(d+alpha)}.
It is evaluated as an exact lattice sum over |y| <= R plus the isotropic
integral over |v| > rho_R, which reduces to one radial integral.  rho_R is
the radius of the ball whose volume equals the number of summed points
(R + 1/2 in d = 1), so the non-oscillating part of the tail is matched.  The
lattice part is written as sum_y w(y) * 2 sin^2(.)-type terms so that no
cancellation happens near theta = 0 (phi can be ~1e-12 there).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numba as nb
import numpy as np
from scipy import special

from ._radial import RadialTailIntegral, angular_cos_mean, ball_volume, gauss_panels, sphere_area
from .errors import DomainError, GridTooSmall, RecurrentError
from .kernel import KernelParams, LatticeVector, kernel_mass

__all__ = [
    "DEFAULT_SYMBOL_RADIUS",
    "DEFAULT_GRID",
    "SpectralModel",
    "symbol_phi",
    "char_fn_walk",
    "TransitionTable",
    "transition_table",
    "stable_char",
    "StableDensity",
    "stable_density",
    "stable_density_origin",
    "scaling_h",
    "scaling_Lambda",
    "lambda_branch",
    "transient_by_integral",
    "lclt_error",
    "LCLTResult",
]

DEFAULT_SYMBOL_RADIUS = {1: 10_000, 2: 300, 3: 60}
DEFAULT_GRID = {1: 2 ** 14, 2: 2 ** 9, 3: 2 ** 6}


def _default_radius(d):
    return DEFAULT_SYMBOL_RADIUS.get(d, 12 if d == 4 else 8)


@nb.njit(cache=True, nogil=True)
def _lattice_part_1d(theta, w):
    # sum_y w[y] 2 sin^2(theta y / 2), w already holds both signs of y;
    # the half-angle phasor is rotated and resynchronised every 256 steps
    n = theta.shape[0]
    R = w.shape[0] - 1
    out = np.empty(n)
    for k in range(n):
        h = 0.5 * abs(theta[k])
        cs = math.cos(h)
        sn = math.sin(h)
        s = 0.0
        c = 1.0
        acc = 0.0
        for y in range(1, R + 1):
            if (y & 255) == 0:
                s = math.sin(y * h)
                c = math.cos(y * h)
            else:
                s, c = s * cs + c * sn, c * cs - s * sn
            acc += w[y] * s * s
        out[k] = 2.0 * acc
    return out


def _orthant_weights(d, alpha, R):
    """W[y] over y in [0, R]^d with |y| <= R: w(y) times 2^(number of nonzero coords)."""
    ax = np.arange(R + 1, dtype=float)
    r2 = np.zeros((R + 1,) * d)
    mult = np.ones((R + 1,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = R + 1
        r2 = r2 + (ax ** 2).reshape(shape)
        mult = mult * np.where(ax > 0, 2.0, 1.0).reshape(shape)
    W = np.zeros_like(r2)
    inside = (r2 > 0) & (r2 <= R * R)
    W[inside] = mult[inside] * r2[inside] ** (-0.5 * (d + alpha))
    count = int(mult[inside].sum()) + 1
    return W, r2, count


class SpectralModel:
    """Symbol, Gaussian/stable coefficients and DFT grids for one (d, alpha)."""

    def __init__(self, params: KernelParams, R_phi: int | None = None):
        if not isinstance(params, KernelParams):
            params = KernelParams(*params)
        self.params = params
        d, a = params.d, params.alpha
        self.R_phi = int(R_phi if R_phi is not None else _default_radius(d))
        if self.R_phi < 1:
            raise DomainError("R_phi must be >= 1")
        W, r2, count = _orthant_weights(d, a, self.R_phi)
        self._W = W
        self._r2 = r2
        # W summed over trailing axes, used by the telescoped contraction
        self._W_partial = [W.sum(axis=tuple(range(i + 1, d))) if i + 1 < d else W for i in range(d)]
        self.lattice_mass = math.fsum(W.ravel())
        self.sphere = sphere_area(d)
        # the unit cells of the summed points fill a ball of this radius
        # (R + 1/2 in d = 1); the integral tail starts there
        self._rho_cut = (count / ball_volume(d)) ** (1.0 / d)
        self.tail_integral = RadialTailIntegral(d, a, b_max=math.pi * math.sqrt(d) * self._rho_cut * 1.01)
        self._dft_cache: dict = {}

    def __repr__(self):
        return f"SpectralModel(d={self.params.d}, alpha={self.params.alpha}, R_phi={self.R_phi})"

    # ---- constants

    @cached_property
    def mass(self) -> float:
        """lambda consistent with the symbol: lattice part + the same integral tail."""
        a = self.params.alpha
        return self.lattice_mass + self.sphere * self._rho_cut ** (-a) / a

    @cached_property
    def stable_coefficient(self) -> float:
        """G~ with int (1 - cos(theta . v)) |v|^{-(d+alpha)} dv = G~ |theta|^alpha (alpha < 2)."""
        if self.params.alpha >= 2:
            raise DomainError("the stable coefficient exists only for alpha < 2")
        return self.sphere * self.tail_integral.at_zero()

    @staticmethod
    def stable_coefficient_closed(d, alpha) -> float:
        return (math.pi ** (d / 2.0) * abs(math.gamma(-alpha / 2.0))
                / (2.0 ** alpha * math.gamma((d + alpha) / 2.0)))

    @cached_property
    def sigma2(self) -> float:
        """Diagonal entry of Sigma_ij = sum_y y_i y_j |y|^{-(d+alpha)} (alpha > 2)."""
        d, a = self.params.d, self.params.alpha
        if a <= 2:
            raise DomainError("Sigma is finite only for alpha > 2")
        lat = math.fsum((self._W * self._r2).ravel()) / d
        tail = self.sphere / d * self._rho_cut ** (2.0 - a) / (a - 2.0)
        return lat + tail

    @property
    def sigma_matrix(self) -> np.ndarray:
        # off-diagonal sums vanish under y_i -> -y_i
        return self.sigma2 * np.eye(self.params.d)

    @property
    def K_matrix(self) -> np.ndarray:
        d = self.params.d
        return self.sphere / (2.0 * d) * np.eye(d)

    def gaussian_variance(self) -> float:
        """Per-coordinate variance rate of the limit for alpha >= 2."""
        a = self.params.alpha
        if a > 2:
            return self.sigma2
        if a == 2:
            return self.sphere / (2.0 * self.params.d)
        raise DomainError("Gaussian limit only for alpha >= 2")

    # ---- symbol

    def tail_part(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        pos = rho > 0
        if np.any(pos):
            rp = rho[pos]
            out[pos] = self.sphere * rp ** self.params.alpha * self.tail_integral(rp * self._rho_cut)
        return out

    def _lattice_scattered(self, th):
        d = self.params.d
        if d == 1:
            return _lattice_part_1d(np.ascontiguousarray(np.abs(th[:, 0])), self._W[:])
        Y = np.arange(self.R_phi + 1, dtype=float)
        out = np.zeros(th.shape[0])
        for lo in range(0, th.shape[0], 256):
            t = np.abs(th[lo:lo + 256])
            C = [np.cos(np.outer(t[:, j], Y)) for j in range(d)]
            S = [2.0 * np.sin(0.5 * np.outer(t[:, j], Y)) ** 2 for j in range(d)]
            acc = np.zeros(t.shape[0])
            for i in range(d):
                T = np.tensordot(S[0] if i == 0 else C[0], self._W_partial[i], axes=([1], [0]))
                for j in range(1, i + 1):
                    F = S[j] if j == i else C[j]
                    T = np.einsum("nj...,nj->n...", T, F)
                acc += T
            out[lo:lo + 256] = acc
        return out

    def symbol(self, theta):
        """phi at points theta (shape (..., d), or scalars when d = 1)."""
        d = self.params.d
        th = np.asarray(theta, dtype=float)
        scalar = th.ndim == 0 or (d > 1 and th.ndim == 1)
        if d == 1 and (th.ndim == 0 or th.shape[-1:] != (1,)):
            th = th[..., None]
        shape = th.shape[:-1]
        flat = th.reshape(-1, d)
        if np.any(np.abs(flat) > math.pi * (1 + 1e-12)):
            raise DomainError("theta must lie in [-pi, pi]^d")
        val = self._lattice_scattered(flat) + self.tail_part(np.sqrt((flat ** 2).sum(axis=1)))
        val = val.reshape(shape)
        return float(val) if scalar else val

    def symbol_grid(self, axes) -> np.ndarray:
        """phi on the tensor grid axes[0] x ... x axes[d-1] (entries >= 0)."""
        d = self.params.d
        axes = [np.abs(np.asarray(a, dtype=float).ravel()) for a in axes]
        if len(axes) != d:
            raise DomainError("need one axis per dimension")
        if d == 1:
            lat = _lattice_part_1d(np.ascontiguousarray(axes[0]), self._W[:])
        else:
            Y = np.arange(self.R_phi + 1, dtype=float)
            C = [np.cos(np.outer(a, Y)) for a in axes]
            S = [2.0 * np.sin(0.5 * np.outer(a, Y)) ** 2 for a in axes]
            lat = np.zeros(tuple(a.size for a in axes))
            for i in range(d):
                T = self._W_partial[i]
                for j in range(i + 1):
                    F = S[j] if j == i else C[j]
                    # contract the leading lattice axis, node axis goes last
                    T = np.tensordot(T, F, axes=([0], [1]))
                lat += T.reshape(T.shape + (1,) * (d - i - 1))
        rho2 = np.zeros(tuple(a.size for a in axes))
        for i, a in enumerate(axes):
            shape = [1] * d
            shape[i] = a.size
            rho2 = rho2 + (a ** 2).reshape(shape)
        return lat + self.tail_part(np.sqrt(rho2))

    def symbol_dft(self, M: int) -> np.ndarray:
        """phi on the full DFT grid 2 pi k / M, k in [0, M)^d (standard FFT order)."""
        M = int(M)
        if M in self._dft_cache:
            return self._dft_cache[M]
        d = self.params.d
        half = 2.0 * np.pi * np.arange(M // 2 + 1) / M
        g = self.symbol_grid([half] * d)
        k = np.arange(M)
        idx = np.minimum(k, M - k)
        full = g[np.ix_(*([idx] * d))]
        full.flags.writeable = False
        self._dft_cache[M] = full
        return full

    # ---- limits

    def stable_exponent(self, theta, t=1.0):
        """-log Psi_t(theta) for the scaling limit."""
        d, a = self.params.d, self.params.alpha
        th = np.asarray(theta, dtype=float)
        if d == 1 and (th.ndim == 0 or th.shape[-1:] != (1,)):
            th = th[..., None]
        r2 = (th ** 2).sum(axis=-1)
        if a < 2:
            return t * self.stable_coefficient * r2 ** (a / 2.0)
        return 0.5 * t * self.gaussian_variance() * r2

    def f_origin(self, t: float = 1.0) -> float:
        """Closed-form density of the limit at 0."""
        if t <= 0:
            raise DomainError("t must be > 0")
        d, a = self.params.d, self.params.alpha
        if a < 2:
            G = self.stable_coefficient
            return (self.sphere * math.gamma(d / a)
                    / ((2 * math.pi) ** d * a * (t * G) ** (d / a)))
        return (2.0 * math.pi * t * self.gaussian_variance()) ** (-d / 2.0)

    def spread(self, t: float) -> float:
        """Typical displacement |X_t| in lattice units (scale of the limit law)."""
        a = self.params.alpha
        if a < 2:
            return (t * self.stable_coefficient) ** (1.0 / a)
        if a == 2:
            return math.sqrt(self.gaussian_variance() * t * max(math.log(t), 1.0))
        return math.sqrt(self.gaussian_variance() * t)


def _model(model) -> SpectralModel:
    if isinstance(model, SpectralModel):
        return model
    if isinstance(model, KernelParams):
        return SpectralModel(model)
    raise TypeError("expected a SpectralModel or KernelParams")


def symbol_phi(theta, model) -> float:
    return _model(model).symbol(theta)


def char_fn_walk(theta, t: float, model):
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        th = np.asarray(theta, dtype=float)
        m = _model(model)
        if m.params.d == 1:
            return 1.0 if th.ndim == 0 else np.ones(th.shape[:-1] if th.shape[-1:] == (1,) else th.shape)
        return 1.0 if th.ndim == 1 else np.ones(th.shape[:-1])
    return np.exp(-t * np.asarray(_model(model).symbol(theta)))


def stable_char(theta, t: float, model):
    if t < 0:
        raise DomainError("t must be >= 0")
    return np.exp(-np.asarray(_model(model).stable_exponent(theta, t)))


# --------------------------------------------------------------------------
# scaling functions


def scaling_h(t: float, alpha: float) -> float:
    if alpha <= 0:
        raise DomainError("alpha must be > 0")
    if t <= 0:
        raise DomainError("t must be > 0")
    if alpha > 2:
        return math.sqrt(t)
    if alpha == 2:
        if t <= 1:
            raise DomainError("h_2(t) = sqrt(t log t) needs t > 1")
        return math.sqrt(t * math.log(t))
    return t ** (1.0 / alpha)


def _h_guard(t, alpha):
    # spread proxy valid for every t > 0 (used by grid guards)
    if alpha == 2:
        return math.sqrt(t * max(math.log(t), 1.0))
    return scaling_h(t, alpha)


def transient_by_integral(d: int, alpha: float) -> bool:
    """Finiteness of int_1^inf h_alpha(t)^{-d} dt, decided per branch."""
    if alpha > 2:
        return d / 2.0 > 1.0
    if alpha == 2:
        # (t log t)^{-d/2}: d = 2 is the borderline 1/(t log t), divergent
        return d >= 3
    return d / alpha > 1.0


def lambda_branch(d: int, alpha: float) -> str:
    """Name of the normalisation branch for the occupation time."""
    p = KernelParams(d, alpha)
    if not p.transient:
        raise RecurrentError(d, alpha, "the occupation-time normalisation")
    if d <= 3 and alpha < min(2.0, d):
        if alpha > d / 2.0:
            return "fbm"
        if alpha == d / 2.0:
            return "critical"
        return "diffusive"
    if d == 3:
        return "d3_log" if alpha == 2 else "d3"
    if d == 4:
        return "d4_log" if alpha > 2 else "diffusive"
    return "diffusive"


def scaling_Lambda(N: float, d: int, alpha: float) -> float:
    if N < 2:
        raise DomainError("N must be >= 2")
    br = lambda_branch(d, alpha)
    if br == "fbm":
        return N ** (1.5 - d / (2.0 * alpha))
    if br in ("critical", "d4_log"):
        return math.sqrt(N * math.log(N))
    if br == "d3":
        return N ** 0.75
    if br == "d3_log":
        return N ** 0.75 * math.log(N) ** (-0.75)
    return math.sqrt(N)


# --------------------------------------------------------------------------
# transition tables


@dataclass(frozen=True, eq=False)
class TransitionTable:
    """p_t(0, x) for |x|_inf <= box of the walk wrapped on (Z/MZ)^d."""

    t: float
    M: int
    box: int
    values: np.ndarray = field(repr=False)  # shape (2B+1,)*d, index x + B
    residual: float
    aliasing_bound: float
    roundoff: float
    R_phi: int

    @property
    def d(self):
        return self.values.ndim

    def p(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        if np.any(np.abs(x) > self.box):
            raise DomainError("x outside the table box")
        return float(self.values[tuple(x + self.box)])

    @property
    def origin(self) -> float:
        return float(self.values[(self.box,) * self.d])

    def to_csv(self, path):
        B = self.box
        grids = np.meshgrid(*([np.arange(-B, B + 1)] * self.d), indexing="ij")
        cols = [g.ravel() for g in grids] + [self.values.ravel()]
        head = ",".join([f"x{i}" for i in range(self.d)] + ["p"])
        with open(path, "w") as fh:
            fh.write(head + "\n")
            for row in zip(*cols):
                fh.write(",".join(str(int(v)) for v in row[:-1]) + f",{row[-1]:.17g}\n")

    def metadata(self) -> dict:
        return {"t": self.t, "M": self.M, "box": self.box, "residual": self.residual,
                "aliasing_bound": self.aliasing_bound, "R_phi": self.R_phi}


def _wrapped_density(exponent_grid, M, d):
    vals = np.fft.ifftn(np.exp(-exponent_grid)).real if d > 1 else np.fft.ifft(np.exp(-exponent_grid)).real
    return vals


def _extract_box(full, B, d):
    M = full.shape[0]
    idx = np.arange(-B, B + 1) % M
    return full[np.ix_(*([idx] * d))]


def transition_table(t: float, model, M: int | None = None, B: int | None = None,
                     check_grid: bool = True) -> TransitionTable:
    m = _model(model)
    d, a = m.params.d, m.params.alpha
    if t < 0:
        raise DomainError("t must be >= 0")
    M = int(M if M is not None else DEFAULT_GRID.get(d, 16))
    if M < 4 or M & (M - 1):
        raise DomainError("M must be a power of two >= 4")
    B = int(B if B is not None else M // 4)
    if B < 0 or B > M // 2:
        raise DomainError("box radius must satisfy 0 <= B <= M/2")
    if check_grid and t > 0 and _h_guard(t, a) > M / 4.0:
        raise GridTooSmall(f"grid too small: h_alpha({t:g}) = {_h_guard(t, a):.4g} exceeds M/4 = {M / 4:g}; "
                           f"use M >= {2 ** math.ceil(math.log2(4 * _h_guard(t, a)))}")
    if t == 0:
        vals = np.zeros((2 * B + 1,) * d)
        vals[(B,) * d] = 1.0
        return TransitionTable(0.0, M, B, vals, 0.0, 0.0, 0.0, m.R_phi)
    full = _wrapped_density(t * m.symbol_dft(M), M, d)
    lo = float(-min(full.min(), 0.0))
    hi = float(max(full.max() - 1.0, 0.0))
    full = np.clip(full, 0.0, 1.0)
    box = _extract_box(full, B, d)
    residual = 1.0 - math.fsum(box.ravel())
    # mass of the unwrapped walk beyond the half-grid, one-big-jump estimate
    alias = min(1.0, t * m.sphere * (M / 2.0) ** (-a) / a)
    return TransitionTable(float(t), M, B, box, residual, alias, max(lo, hi), m.R_phi)


# --------------------------------------------------------------------------
# stable densities


def _asymptotic_terms(d, alpha, kmax=60):
    # f(r) ~ sum_k a_k r^{-d - alpha k} for the unit law exp(-|theta|^alpha)
    out = []
    for k in range(1, kmax + 1):
        s = math.sin(math.pi * alpha * k / 2.0)
        if abs(s) < 1e-12:
            out.append(0.0)
            continue
        lg = (special.gammaln(alpha * k / 2.0 + 1.0) + special.gammaln((alpha * k + d) / 2.0)
              - special.gammaln(k + 1.0) + alpha * k * math.log(2.0))
        out.append(((-1.0) ** (k + 1)) * s * math.exp(lg) / math.pi ** (d / 2.0 + 1.0))
    return np.array(out)


class StableDensity:
    """Density f_t of the scaling limit.

    alpha < 2: radial reduction f(r) = (2pi)^{-d} S_{d-1} int e^{-c rho^alpha}
    j_d(rho r) rho^{d-1} d rho on geometric/oscillation-resolving panels;
    far out the convergent (alpha < 1) or asymptotic large-r series is
    used once it has settled.  alpha >= 2: closed Gaussian form.
    """

    def __init__(self, model, t: float = 1.0):
        if t <= 0:
            raise DomainError("t must be > 0")
        self.model = _model(model)
        self.t = float(t)
        d, a = self.model.params.d, self.model.params.alpha
        self.d, self.alpha = d, a
        if a < 2:
            self.scale = (self.t * self.model.stable_coefficient) ** (1.0 / a)
            self._coef = _asymptotic_terms(d, a)
        else:
            self.var = self.t * self.model.gaussian_variance()

    def origin(self) -> float:
        return self.model.f_origin(self.t)

    def _unit_quadrature(self, r):
        d, a = self.d, self.alpha
        rho_max = 46.0 ** (1.0 / a)
        edges = np.geomspace(1e-12, rho_max, 160)
        if r > 0:
            width = math.pi / (2.0 * r)
            pieces = [edges[:1]]
            for lo, hi in zip(edges[:-1], edges[1:]):
                m = max(1, int(math.ceil((hi - lo) / width)))
                pieces.append(np.linspace(lo, hi, m + 1)[1:])
            edges = np.concatenate(pieces)
        nodes, w = gauss_panels(edges, 12)
        val = np.exp(-nodes ** a) * nodes ** (d - 1)
        if r > 0:
            val = val * angular_cos_mean(nodes * r, d)
        body = float((val * w).sum())
        # the piece (0, 1e-12) is ~ 1e-12^d / d
        body += 1e-12 ** d / d
        return self.model.sphere * body / (2.0 * math.pi) ** d

    def _unit_series(self, r):
        terms = self._coef * r ** (-self.alpha * np.arange(1, self._coef.size + 1))
        total = 0.0
        prev = math.inf
        for term in terms:
            if term == 0.0:  # sin(pi alpha k / 2) = 0
                continue
            mag = abs(term)
            if mag > prev:
                return None  # asymptotic series turned before settling
            total += term
            if mag < 1e-15 * abs(total):
                return total * r ** (-self.d)
            prev = mag
        return None

    def _unit_radial(self, r):
        if r > 4.0:
            v = self._unit_series(r)
            if v is not None:
                return v
        return self._unit_quadrature(r)

    def radial(self, r):
        """f_t at |u| = r."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.alpha >= 2:
            return (2 * math.pi * self.var) ** (-self.d / 2.0) * np.exp(-0.5 * r * r / self.var)
        out = np.empty_like(r)
        c = self.scale
        uniq, inv = np.unique(np.abs(r), return_inverse=True)
        vals = np.array([self._unit_radial(x / c) for x in uniq])
        out = vals[inv] * c ** (-self.d)
        return out.reshape(r.shape)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.d == 1 and (u.ndim == 0 or u.shape[-1:] != (1,)):
            r = np.abs(u)
        else:
            r = np.sqrt((u ** 2).sum(axis=-1))
        out = self.radial(r.ravel()).reshape(np.shape(r))
        return float(out) if np.ndim(out) == 0 else out

    def total_mass(self, r_max: float | None = None) -> float:
        """S_{d-1} int_0^inf f(r) r^{d-1} dr, numerically (should be 1)."""
        d = self.d
        S = self.model.sphere
        if self.alpha >= 2:
            # radial chi quadrature of the Gaussian, as a normalisation check
            sd = math.sqrt(self.var)
            edges = np.linspace(0, 40 * sd, 401)
            x, w = gauss_panels(edges, 12)
            return float(S * (self.radial(x.ravel()).reshape(x.shape) * x ** (d - 1) * w).sum())
        c = self.scale
        # find a radius where the series has converged
        rb = 8.0
        while self._unit_series(rb) is None:
            rb *= 1.5
            if rb > 1e6:
                raise RuntimeError("asymptotic series never settled")
        if r_max is not None:
            rb = max(rb, r_max / c)
        edges = np.concatenate([np.geomspace(1e-8, 1.0, 30), np.linspace(1.0, rb, int(8 * rb) + 2)[1:]])
        x, w = gauss_panels(edges, 10)
        fx = np.array([self._unit_radial(v) for v in x.ravel()]).reshape(x.shape)
        body = (fx * x ** (d - 1) * w).sum() + self._unit_radial(0.0) * 1e-8 ** d / d
        ks = np.arange(1, self._coef.size + 1)
        terms = self._coef * rb ** (-self.alpha * ks) / (self.alpha * ks)
        tail = 0.0
        for term in terms:
            tail += term
            if term != 0.0 and abs(term) < 1e-16 * abs(tail):
                break
        return float(S * (body + tail))


def stable_density(u, t: float, model):
    return StableDensity(model, t)(u)


def stable_density_origin(t: float, model) -> float:
    if t <= 0:
        raise DomainError("t must be > 0")
    return _model(model).f_origin(t)


# --------------------------------------------------------------------------
# local CLT


class LCLTResult(NamedTuple):
    sup_error: float
    location: LatticeVector


def _auto_grid(m: SpectralModel, T):
    d = m.params.d
    c = 8.0 if d == 1 else 4.0
    need = max(64.0, c * m.spread(T), 4.0 * _h_guard(T, m.params.alpha) + 1)
    return int(2 ** math.ceil(math.log2(need)))


def lclt_error(N: float, t: float, model, grid: int | None = None, *, method: str = "periodized",
               details: bool = False):
    """sup_x | h(N)^d p_{tN}(0,x) - f_t(x / h(N)) | over the table box.

    ``method='periodized'`` compares against the limit law wrapped on the
    same M-torus (DFT of Psi on the same frequencies), so the wrap-around of
    both sides cancels.  ``method='direct'`` computes the unwrapped p_{tN}(0, x)
    by frequency quadrature on a coarse point set and evaluates f_t pointwise.
    """
    m = _model(model)
    d, a = m.params.d, m.params.alpha
    if N <= 1 and a == 2:
        raise DomainError("N must be > 1 on the alpha = 2 branch")
    h = scaling_h(N, a)
    T = t * N
    if method == "periodized":
        M = int(grid) if grid is not None else _auto_grid(m, T)
        tab = transition_table(T, m, M=M, B=M // 2 - 1 if M > 4 else 1)
        walk = tab.values * h ** d
        B = tab.box
        k = np.arange(M)
        sym = 2.0 * np.pi * np.minimum(k, M - k) / M
        grids = np.meshgrid(*([sym] * d), indexing="ij")
        th = np.stack(grids, axis=-1) * h
        ref_full = _wrapped_density(m.stable_exponent(th, t), M, d)
        ref = _extract_box(ref_full, B, d) * h ** d
    elif method == "direct":
        # unwrapped p_T(0, x) by frequency quadrature on a coarse set of
        # points in |x_i| <= 3 h, against the limit density pointwise
        from ._quadrature import FrequencyQuadrature

        xm = max(int(math.ceil(3.0 * h)), 1)
        step = max(1, xm // 100)
        ax = np.arange(-xm, xm + 1, step)
        ax = np.union1d(ax, [0])
        pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        q = FrequencyQuadrature(m, x_max=int(np.abs(ax).max()), n_gauss=8)
        walk = q.integrate(lambda p: np.exp(-T * p), pts) * h ** d
        u = pts / h
        ref = np.asarray(StableDensity(m, t)(u if d > 1 else u[:, 0]), dtype=float).reshape(-1)
        err = np.abs(walk - ref)
        j = int(np.argmax(err))
        res = LCLTResult(float(err[j]), LatticeVector(tuple(int(v) for v in pts[j])))
        if details:
            o = int(np.nonzero(~np.any(pts, axis=1))[0][0])
            return res, {"M": None, "h": h, "origin_walk": float(walk[o]), "origin_limit": m.f_origin(t),
                         "points": int(pts.shape[0])}
        return res
    else:
        raise ValueError("method is 'periodized' or 'direct'")
    err = np.abs(walk - ref)
    j = np.unravel_index(int(np.argmax(err)), err.shape)
    loc = LatticeVector(tuple(int(i) - B for i in j))
    res = LCLTResult(float(err[j]), loc)
    if details:
        return res, {"M": M, "h": h, "origin_walk": float(walk[(B,) * d]),
                     "origin_limit": m.f_origin(t), "aliasing_bound": tab.aliasing_bound}
    return res
