"""Radial helpers shared by the symbol and stable-density code.

Everything here works with isotropic integrands on R^d reduced to one
radial variable.  The angular average of cos(theta . v) over the sphere
|v| = r only depends on s = |theta| r and is written j_d(s).
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

__all__ = [
    "sphere_area",
    "ball_volume",
    "angular_cos_mean",
    "one_minus_angular",
    "RadialTailIntegral",
    "gauss_panels",
]


def sphere_area(d: int) -> float:
    """Surface area S_{d-1} of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _series_coeffs(d, kmax=6):
    # 1 - j_d(s) = sum_k c_k s^{2k}
    g = math.gamma(d / 2.0)
    return np.array([(-1.0) ** (k + 1) * g / (4.0 ** k * math.factorial(k) * math.gamma(k + d / 2.0))
                     for k in range(1, kmax + 1)])


def angular_cos_mean(s, d: int):
    """j_d(s): mean of cos(s e1 . omega) over the unit sphere."""
    s = np.asarray(s, dtype=float)
    if d == 1:
        return np.cos(s)
    if d == 3:
        return np.sinc(s / math.pi)
    out = np.empty_like(s)
    small = np.abs(s) < 1e-3
    nu = d / 2.0 - 1.0
    big = ~small
    sb = s[big]
    out[big] = math.gamma(d / 2.0) * (2.0 / sb) ** nu * special.jv(nu, sb)
    out[small] = 1.0 - _eval_series(s[small], d)
    return out


def _eval_series(s, d):
    c = _series_coeffs(d)
    s2 = s * s
    acc = np.zeros_like(s)
    for ck in c[::-1]:
        acc = (acc + ck) * s2
    return acc


def one_minus_angular(s, d: int):
    """1 - j_d(s) without cancellation for small s."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    small = np.abs(s) < 1e-2
    out[small] = _eval_series(s[small], d)
    out[~small] = 1.0 - angular_cos_mean(s[~small], d)
    return out


def gauss_panels(edges, n):
    """Nodes and weights of an n-point Gauss-Legendre rule on each panel."""
    x, w = leggauss(n)
    edges = np.asarray(edges, dtype=float)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes, weights


class RadialTailIntegral:
    """I(b) = int_b^inf (1 - j_d(v)) v^{-1-alpha} dv for b >= 0.

    Tabulated once on a panel grid: geometric panels below v=1, unit
    spaced half-panels above, and beyond the top knot b^{-alpha}/alpha minus
    the Bessel-asymptotic oscillating part.
    Queries integrate the partial panel with a Gauss rule, so values are
    accurate to roughly machine precision relative to I(b).
    """

    n_gauss = 10
    v_small = 1e-3

    def __init__(self, d: int, alpha: float, b_max: float = 1.0):
        self.d = int(d)
        self.alpha = float(alpha)
        top = max(4096.0, 1.5 * float(b_max))
        top = float(2 ** math.ceil(math.log2(top)))
        lower = np.geomspace(self.v_small, 1.0, 31)
        upper = np.arange(1.0, top + 0.25, 0.5)
        knots = np.concatenate([lower[:-1], upper])
        nodes, weights = gauss_panels(knots, self.n_gauss)
        vals = one_minus_angular(nodes, self.d) * nodes ** (-1.0 - self.alpha)
        panel = (vals * weights).sum(axis=1)
        tail = top ** (-self.alpha) / self.alpha - self._oscillating_remainder(top)
        # cumulative from the top, summed small-to-large
        cum = np.concatenate([np.cumsum(panel[::-1])[::-1], [0.0]]) + tail
        self.knots = knots
        self.values = cum
        self.top = top
        self.remainder_bound = top ** (-2.0 - self.alpha - (self.d - 1) / 2.0)

    def _oscillating_remainder(self, b):
        # int_b^inf j_d(v) v^{-1-alpha} dv from the Bessel asymptotic, two
        # integrations by parts (exact amplitude for d = 1 and d = 3)
        d, a = self.d, self.alpha
        nu = d / 2.0 - 1.0
        amp = math.gamma(d / 2.0) * 2.0 ** nu * math.sqrt(2.0 / math.pi)
        p = a + (d + 1) / 2.0
        ph = np.asarray(b, dtype=float) - nu * math.pi / 2.0 - math.pi / 4.0
        return amp * (-(b ** -p) * np.sin(ph) + p * b ** (-p - 1.0) * np.cos(ph))

    def _integrand(self, v):
        return one_minus_angular(v, self.d) * v ** (-1.0 - self.alpha)

    def __call__(self, b):
        b = np.atleast_1d(np.asarray(b, dtype=float))
        out = np.empty_like(b)
        a = self.alpha
        lo = b < self.v_small
        hi = b >= self.top
        mid = ~(lo | hi)
        if np.any(hi):
            # 1 - j_d averages to 1 out here
            out[hi] = b[hi] ** (-a) / a - self._oscillating_remainder(b[hi])
        if np.any(mid):
            bm = b[mid]
            k = np.searchsorted(self.knots, bm, side="right")
            upper = self.knots[k]
            x, w = leggauss(self.n_gauss)
            half = 0.5 * (upper - bm)
            nodes = 0.5 * (upper + bm)[:, None] + half[:, None] * x[None, :]
            part = (self._integrand(nodes) * w[None, :]).sum(axis=1) * half
            out[mid] = self.values[k] + part
        if np.any(lo):
            bl = b[lo]
            if a >= 2.0 and np.any(bl == 0.0):
                raise ValueError("integral diverges at 0 for alpha >= 2")
            c = _series_coeffs(self.d)
            v0 = self.v_small
            acc = np.full_like(bl, self.values[0])
            for k, ck in enumerate(c, start=1):
                e = 2 * k - a
                if abs(e) < 1e-14:
                    with np.errstate(divide="ignore"):
                        acc += ck * np.log(v0 / bl)
                else:
                    with np.errstate(divide="ignore"):
                        lowpow = np.where(bl > 0, bl ** e, 0.0) if e > 0 else bl ** e
                    acc += ck * (v0 ** e - lowpow) / e
            out[lo] = acc
        return out

    def at_zero(self) -> float:
        if self.alpha >= 2.0:
            raise ValueError("I(0) is finite only for alpha < 2")
        return float(self(0.0)[0])
