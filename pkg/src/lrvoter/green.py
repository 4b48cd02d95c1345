"""Green function, escape probabilities and the stationary identities.

All quantities are Fourier integrals of the symbol,
G(x) = (2 pi)^-d int cos(x . theta) / phi(theta) dtheta, evaluated with the
dyadic shell rule of ``_quadrature``.  Time-domain routes (integrals of the
return probability p_s(0,0)) are kept next to the frequency ones so the two
can be checked against each other.
"""
from __future__ import annotations

import logging
import math
from functools import cached_property

import numba as nb
import numpy as np
from scipy import integrate, special

from ._quadrature import FrequencyQuadrature
from ._radial import gauss_panels
from .errors import DivergentError, DomainError
from .kernel import KernelParams, LatticeVector, as_lattice, kernel_mass, shell_counts
from .spectral import SpectralModel, lambda_branch

__all__ = [
    "GreenModel",
    "GreenTable",
    "green_function",
    "capacity_constant",
    "escape_probability",
    "stationary_covariance",
    "capacity_identity",
    "occupation_autocov",
    "resolvent",
    "resolvent_norm_sq",
    "double_tail",
    "return_probability",
    "green_tail",
    "occupation_variance",
]

log = logging.getLogger(__name__)

DEFAULT_TABLE_RADIUS = {1: 2048, 2: 48, 3: 12}  # d >= 4: 1 (memory)
DEFAULT_TIME_HORIZON = 4096.0


def _asym_call(r, A, e1, B, e2, log_form):
    if log_form:
        lr = np.log(r)
        return r ** e1 * (A / lr + B / lr ** 2)
    return A * r ** e1 + B * r ** e2


@nb.njit(cache=True)
def _green_lookup(diff, tab_flat, X, strides, A, e1, B, e2, log_form):
    n, d = diff.shape
    out = np.empty(n)
    for k in range(n):
        inside = True
        idx = 0
        r2 = 0.0
        for i in range(d):
            v = abs(diff[k, i])
            r2 += float(v) * float(v)
            if v > X:
                inside = False
            else:
                idx += v * strides[i]
        if inside:
            out[k] = tab_flat[idx]
        else:
            r = math.sqrt(r2)
            if log_form:
                lr = math.log(r)
                out[k] = r ** e1 * (A / lr + B / (lr * lr))
            else:
                out[k] = A * r ** e1 + B * r ** e2
    return out


@nb.njit(cache=True)
def _pair_sum(pos, D, tab_flat, X, strides, A, e1, B, e2, log_form):
    """sum_{a<b} D[a, :] D[b, :] G(pos_a - pos_b)."""
    n, d = pos.shape
    m = D.shape[1]
    out = np.zeros(m)
    for a in range(n - 1):
        for b in range(a + 1, n):
            inside = True
            idx = 0
            r2 = 0.0
            for i in range(d):
                v = abs(pos[a, i] - pos[b, i])
                r2 += float(v) * float(v)
                if v > X:
                    inside = False
                else:
                    idx += v * strides[i]
            if inside:
                g = tab_flat[idx]
            else:
                r = math.sqrt(r2)
                if log_form:
                    lr = math.log(r)
                    g = r ** e1 * (A / lr + B / (lr * lr))
                else:
                    g = A * r ** e1 + B * r ** e2
            for j in range(m):
                out[j] += D[a, j] * D[b, j] * g
    return out


class GreenTable:
    """G on the cube [0, X]^d plus a two-term power law beyond it."""

    def __init__(self, model: "GreenModel", X: int, n_gauss: int | None = None):
        sp = model.spectral
        d, a = sp.params.d, sp.params.alpha
        self.d = d
        self.X = int(X)
        if n_gauss is None:
            n_gauss = 8 if d <= 3 else 6
        self.quad = FrequencyQuadrature(sp, x_max=self.X, n_gauss=n_gauss)
        self.values = np.ascontiguousarray(self.quad.integrate(_inv, "table"))
        lo = self.quad.companion().integrate(_inv, "table")
        self.error = np.abs(self.values - lo)
        self.values.flags.writeable = False
        self.strides = np.array([(self.X + 1) ** i for i in range(d)], dtype=np.int64)
        self._flat = np.ascontiguousarray(self.values.reshape(-1, order="F"))
        # leading power law
        self.log_form = a == 2.0
        if a < 2:
            G = sp.stable_coefficient
            self.A = (math.gamma((d - a) / 2.0) / (2.0 ** a * math.pi ** (d / 2.0) * math.gamma(a / 2.0) * G))
            self.e1 = a - d
            self.e2 = 2.0 * a - 2.0 - d
        elif a > 2:
            self.A = 2.0 / sp.sigma2 * math.gamma(d / 2.0 - 1.0) / (4.0 * math.pi ** (d / 2.0))
            self.e1 = 2.0 - d
            self.e2 = 2.0 - d - min(a - 2.0, 2.0)
        else:
            self.e1 = 2.0 - d
            self.e2 = 0.0
        # fit the remaining coefficient(s) on the axis at the edge of the table
        edge = np.zeros(d, dtype=np.int64)
        edge[0] = self.X
        g_edge = self.values[tuple(edge)]
        if self.X < 4:
            # too small to fit a correction: pure leading power through the edge value
            self.log_form = False
            self.e2 = self.e1
            self.A = g_edge / float(self.X) ** self.e1
            self.B = 0.0
        elif self.log_form:
            edge2 = edge.copy()
            edge2[0] = self.X // 2
            r1, r2 = float(self.X), float(self.X // 2)
            M = np.array([[r1 ** self.e1 / math.log(r1), r1 ** self.e1 / math.log(r1) ** 2],
                          [r2 ** self.e1 / math.log(r2), r2 ** self.e1 / math.log(r2) ** 2]])
            self.A, self.B = np.linalg.solve(M, [g_edge, self.values[tuple(edge2)]])
        else:
            r = float(self.X)
            self.B = (g_edge - self.A * r ** self.e1) / r ** self.e2
        self.A = float(self.A)
        self.B = float(self.B)

    def asymptotic(self, r):
        return _asym_call(np.asarray(r, dtype=float), self.A, self.e1, self.B, self.e2, self.log_form)

    def lookup(self, diff) -> np.ndarray:
        diff = np.ascontiguousarray(np.asarray(diff, dtype=np.int64).reshape(-1, self.d))
        return _green_lookup(diff, self._flat, self.X, self.strides, self.A, self.e1, self.B, self.e2,
                             self.log_form)

    def error_of(self, diff) -> np.ndarray:
        diff = np.abs(np.asarray(diff, dtype=np.int64).reshape(-1, self.d))
        inside = np.all(diff <= self.X, axis=1)
        out = np.empty(diff.shape[0])
        if np.any(inside):
            out[inside] = self.error[tuple(diff[inside].T)]
        if np.any(~inside):
            r = np.sqrt((diff[~inside].astype(float) ** 2).sum(axis=1))
            # the fitted correction term is the size of what the expansion leaves out
            if self.log_form:
                out[~inside] = np.abs(self.B) * r ** self.e1 / np.log(r) ** 2
            else:
                out[~inside] = np.abs(self.B) * r ** self.e2
        return out

    def pair_sum(self, pos, D) -> np.ndarray:
        pos = np.ascontiguousarray(np.asarray(pos, dtype=np.int64).reshape(-1, self.d))
        D = np.ascontiguousarray(np.asarray(D, dtype=float))
        if D.ndim == 1:
            D = D[:, None]
        return _pair_sum(pos, D, self._flat, self.X, self.strides, self.A, self.e1, self.B, self.e2,
                         self.log_form)


def _inv(p):
    return 1.0 / p


class GreenModel:
    """Green-function quantities of a transient walk.

    Construction fails for recurrent (d, alpha).  G(0) and C = 1/G(0) are
    computed on construction; the table of G(x) is built on first use.
    """

    def __init__(self, params, *, R_phi: int | None = None, n_gauss: int | None = None, depth: int | None = None,
                 table_radius: int | None = None, time_horizon: float = DEFAULT_TIME_HORIZON):
        if isinstance(params, SpectralModel):
            spectral = params
        else:
            if not isinstance(params, KernelParams):
                params = KernelParams(*params)
            params.require_transient("the Green function")
            spectral = SpectralModel(params, R_phi)
        spectral.params.require_transient("the Green function")
        self.spectral = spectral
        self.params = spectral.params
        d = self.params.d
        self.quad = FrequencyQuadrature(spectral, 0, n_gauss=n_gauss, depth=depth)
        self.G0, self.G0_error = self.quad.integrate(_inv, with_error=True)
        self.capacity = 1.0 / self.G0
        self.table_radius = int(table_radius if table_radius is not None else DEFAULT_TABLE_RADIUS.get(d, 1))
        self.time_horizon = float(time_horizon)
        self.clamp_events = 0
        self._xquads: dict = {}

    def __repr__(self):
        return f"GreenModel(d={self.params.d}, alpha={self.params.alpha}, C={self.capacity:.10g})"

    @cached_property
    def table(self) -> GreenTable:
        return GreenTable(self, self.table_radius)

    # ---- G, Phi, covariances

    def green_function(self, x):
        """G(x) for one LatticeVector or an (n, d) array of points."""
        scalar, arr = self._points(x)
        g = self.table.lookup(arr)
        zero = ~np.any(arr, axis=1)
        g[zero] = self.G0
        return float(g[0]) if scalar else g

    def green_error(self, x):
        scalar, arr = self._points(x)
        e = self.table.error_of(arr)
        e[~np.any(arr, axis=1)] = self.G0_error
        return float(e[0]) if scalar else e

    def green_exact(self, x, with_error: bool = False):
        """Direct quadrature at the given points (no table, no asymptotics)."""
        _, arr = self._points(x)
        q = self._quad_for(int(np.abs(arr).max()) if arr.size else 0)
        return q.integrate(_inv, arr, with_error=with_error)

    def _points(self, x):
        d = self.params.d
        if isinstance(x, LatticeVector):
            if x.d != d:
                raise DomainError("dimension mismatch")
            return True, np.asarray(x.coords, dtype=np.int64)[None, :]
        a = np.asarray(x)
        if a.dtype.kind == "f":
            if np.any(a != np.round(a)):
                raise DomainError("lattice points must be integer")
        a = a.astype(np.int64)
        if a.ndim == 0 or (d > 1 and a.ndim == 1 and a.shape[0] == d):
            return True, a.reshape(1, d)
        if d == 1:
            return False, a.reshape(-1, 1)
        if a.ndim != 2 or a.shape[1] != d:
            raise DomainError(f"expected points of shape (n, {d})")
        return False, a

    def _quad_for(self, xmax: int) -> FrequencyQuadrature:
        key = 1 << max(int(xmax), 1).bit_length()
        if key not in self._xquads:
            self._xquads[key] = FrequencyQuadrature(self.spectral, key, n_gauss=self.quad.n_gauss,
                                                    depth=self.quad.depth)
        return self._xquads[key]

    def escape_probability(self, x):
        """Phi(x) = 1 - C G(x), clamped to [0, 1]; clamps are logged and counted."""
        scalar, arr = self._points(x)
        phi = 1.0 - self.capacity * self.table.lookup(arr)
        phi[~np.any(arr, axis=1)] = 0.0
        bad = (phi < 0) | (phi > 1)
        if np.any(bad):
            self.clamp_events += int(np.count_nonzero(bad))
            log.warning("escape probability clamped at %d point(s), worst %.3e", int(np.count_nonzero(bad)),
                        float(np.max(np.abs(np.clip(phi, 0, 1) - phi))))
            phi = np.clip(phi, 0.0, 1.0)
        return float(phi[0]) if scalar else phi

    def stationary_covariance(self, x, y, p: float):
        _check_p(p)
        diff = np.asarray(as_lattice(x).coords if isinstance(x, LatticeVector) else x, dtype=np.int64) - \
            np.asarray(as_lattice(y).coords if isinstance(y, LatticeVector) else y, dtype=np.int64)
        return p * (1.0 - p) * (1.0 - self.escape_probability(diff))

    def pair_green_sum(self, pos, D) -> np.ndarray:
        """sum_{a<b} D_a D_b C G(x_a - x_b) per column of D."""
        return self.capacity * self.table.pair_sum(pos, D)

    # ---- time-domain pieces

    def return_probability(self, t):
        """p_t(0,0) = (2 pi)^-d int exp(-t phi)."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < 0):
            raise DomainError("t must be >= 0")
        out = np.array([self.quad.integrate(lambda p, s=s: np.exp(-s * p)) for s in ts])
        return float(out[0]) if np.ndim(t) == 0 else out

    def _tail_shape_integral(self, T, power=1):
        """int_T^inf s^(power-1) (h(s)/h(T))^-d ds."""
        d, a = self.params.d, self.params.alpha
        if a == 2:
            # s = e^u keeps the slowly decaying log factors integrable for quad
            lT = math.log(T)
            f = lambda u: math.exp(power * u - d / 2.0 * (u - lT)) * (u / lT) ** (-d / 2.0)
            val, _ = integrate.quad(f, lT, np.inf, limit=200)
            return val
        k = d / a if a < 2 else d / 2.0
        if k <= power:
            raise DivergentError(f"s^{power - 1} p_s(0,0) is not integrable for (d={d}, alpha={a})")
        return T ** power / (k - power)

    def _time_nodes(self, lo, hi):
        edges = [lo]
        e = 2.0 ** -4
        while e < hi:
            if e > lo * (1 + 1e-12):
                edges.append(e)
            e *= 2.0
        edges.append(hi)
        x, w = gauss_panels(np.array(edges), 10)
        return x.ravel(), w.ravel()

    def _time_integral(self, theta, T, power, tail):
        s, w = self._time_nodes(theta, T)
        ps = self.return_probability(s)
        body = math.fsum(w * ps * s ** (power - 1))
        pT = self.return_probability(T)
        if tail == "limit":
            # self-similar tail with the limit density at the origin
            if self.params.alpha == 2:
                raise DomainError("the limit tail needs alpha != 2; use tail='fit'")
            k = self.params.d / min(self.params.alpha, 2.0)
            rest = self.spectral.f_origin(1.0) * T ** (power - k) / (k - power)
        else:
            rest = pT * self._tail_shape_integral(T, power)
        return body + rest

    def green_tail(self, theta: float, method: str = "time", T: float | None = None, tail: str = "fit"):
        """int_theta^inf p_s(0,0) ds."""
        if theta < 0:
            raise DomainError("theta must be >= 0")
        if method == "frequency":
            if theta == 0:
                return self.G0
            return self.quad.integrate(lambda p: np.exp(-theta * p) / p)
        if method != "time":
            raise DomainError(f"unknown method {method!r}")
        T = max(float(T or self.time_horizon), 64.0 * max(theta, 1.0))
        return self._time_integral(float(theta), T, 1, tail)

    def green_time_domain(self, T: float | None = None, tail: str = "fit") -> float:
        return self.green_tail(0.0, "time", T, tail)

    def occupation_autocov(self, theta: float, p: float, method: str = "time") -> float:
        _check_p(p)
        if theta < 0:
            raise DomainError("theta must be >= 0")
        if theta == 0:
            return p * (1.0 - p)
        return p * (1.0 - p) * self.capacity * self.green_tail(theta, method)

    # ---- resolvent

    def resolvent(self, x, N: float):
        if N < 1:
            raise DomainError("N must be >= 1")
        scalar, arr = self._points(x)
        q = self._quad_for(int(np.abs(arr).max()))
        val = q.integrate(lambda p: 1.0 / (p + 1.0 / N), arr)
        return float(val[0]) if scalar else val

    def resolvent_norm_sq(self, N: float) -> float:
        if N < 1:
            raise DomainError("N must be >= 1")
        return self.quad.integrate(lambda p: (p + 1.0 / N) ** -2)

    # ---- double tail and occupation variance

    def double_tail(self, method: str = "frequency", T: float | None = None) -> float:
        """int_0^inf int_0^inf p_{u+r}(0,0) du dr = int_0^inf r p_r(0,0) dr."""
        d, a = self.params.d, self.params.alpha
        br = lambda_branch(d, a)
        if br != "diffusive":
            raise DivergentError(f"the double tail diverges for (d={d}, alpha={a}); "
                                 f"the occupation time is on the {br!r} branch")
        if method == "frequency":
            return self.quad.integrate(lambda p: p ** -2.0)
        if method != "time":
            raise DomainError(f"unknown method {method!r}")
        return self._time_integral(0.0, float(T or self.time_horizon), 2, "fit")

    def occupation_variance(self, T: float, p: float) -> float:
        """Var(xi_T) under the stationary law.

        2 int_0^T (T - s) Cov(eta_s(0), eta_0(0)) ds, with the time integral
        done in closed form under the frequency integral.
        """
        _check_p(p)
        if T < 0:
            raise DomainError("T must be >= 0")
        if T == 0:
            return 0.0

        def F(phi):
            z = T * phi
            small = z < 1e-3
            out = np.empty_like(phi)
            zs = z[small]
            out[small] = T ** 2 / phi[small] * (0.5 - zs / 6.0 + zs ** 2 / 24.0 - zs ** 3 / 120.0)
            zb = z[~small]
            out[~small] = (np.expm1(-zb) + zb) / phi[~small] ** 3
            return out

        return 2.0 * p * (1.0 - p) * self.capacity * self.quad.integrate(F)

    # ---- the harmonic identity sum_y Phi(y) w(y) = C

    def capacity_identity(self, R_sum: int = 512):
        """(lhs, rhs, gap) for sum_{y != 0} Phi(y) |y|^{-(d+alpha)} = C.

        Sum over 0 < |y| <= R_sum with the table/asymptotic G, and Phi = 1
        beyond R_sum so the remainder is the kernel tail.
        """
        R = int(R_sum)
        if R < 8:
            raise DomainError("R_sum must be >= 8")
        d, a = self.params.d, self.params.alpha
        C = self.capacity
        if d == 1:
            y = np.arange(1, R + 1)
            w = y.astype(float) ** (-1.0 - a)
            wsum = 2.0 * math.fsum(w[::-1])
            gw = 2.0 * math.fsum((self.green_function(y) * w)[::-1])
            tail = 2.0 * float(special.zeta(1.0 + a, R + 1))
        else:
            wsum, gw = self._shell_sums(R)
            lam, _ = kernel_mass(self.params, R=R)
            tail = lam - wsum
        lhs = wsum - C * gw + tail
        return lhs, C, lhs - C

    def _mass_within(self, R):
        d, a = self.params.d, self.params.alpha
        cnt = shell_counts(d, R * R)
        n = np.nonzero(cnt[1:])[0] + 1
        return math.fsum((cnt[n] * n.astype(float) ** (-0.5 * (d + a)))[::-1])

    def _shell_sums(self, R):
        """(sum w, sum G w) over 0 < |y| <= R, d >= 2."""
        d, a = self.params.d, self.params.alpha
        tab = self.table
        X = min(tab.X, R)
        ax = np.arange(-X, X + 1)
        grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        n2 = (grid ** 2).sum(axis=1)
        keep = (n2 > 0) & (n2 <= R * R)
        g_in = tab.lookup(grid[keep])
        w_in = n2[keep].astype(float) ** (-0.5 * (d + a))
        gw = math.fsum(g_in * w_in)
        # the rest, shell by shell: r_d(n) minus the points already counted
        cnt = shell_counts(d, R * R).astype(np.int64)
        used = np.bincount(n2[keep], minlength=R * R + 1)
        rest = cnt.copy()
        rest[0] = 0
        rest -= used
        n = np.nonzero(rest)[0]
        r = np.sqrt(n.astype(float))
        gw += math.fsum(rest[n] * tab.asymptotic(r) * r ** (-(d + a)))
        wsum = self._mass_within(R)
        return wsum, gw


def _check_p(p):
    if not (0.0 < p < 1.0):
        raise DomainError("p must lie in (0, 1)")


def _gm(model) -> GreenModel:
    if isinstance(model, GreenModel):
        return model
    return GreenModel(model)


# functional interface

def green_function(x, model) -> float:
    return _gm(model).green_function(x)


def capacity_constant(model) -> float:
    return _gm(model).capacity


def escape_probability(x, model):
    return _gm(model).escape_probability(x)


def stationary_covariance(x, y, p, model):
    return _gm(model).stationary_covariance(x, y, p)


def capacity_identity(model, R_sum: int = 512):
    return _gm(model).capacity_identity(R_sum)


def occupation_autocov(theta, p, model, method="time"):
    return _gm(model).occupation_autocov(theta, p, method)


def green_tail(theta, model, method="time"):
    return _gm(model).green_tail(theta, method)


def return_probability(t, model):
    return _gm(model).return_probability(t)


def resolvent(x, N, model):
    return _gm(model).resolvent(x, N)


def resolvent_norm_sq(N, model):
    return _gm(model).resolvent_norm_sq(N)


def double_tail(model, method="frequency"):
    return _gm(model).double_tail(method)


def occupation_variance(T, p, model):
    return _gm(model).occupation_variance(T, p)
