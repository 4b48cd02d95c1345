"""Frequency-domain quadrature for integrals (2 pi)^-d int F(phi) prod cos(x_i theta_i).

Every integrand used here is even in each coordinate, so the cube
[-pi, pi]^d is folded onto the orthant [0, pi]^d.  The orthant is cut into
dyadic shells [0, 2h]^d minus [0, h]^d, each made of 2^d - 1 boxes carrying
a tensor Gauss rule; the number of panels per axis follows the oscillation
of cos(x_i theta_i).  Below the last shell phi is replaced by the matched
model c |theta|^a (a = min(alpha, 2), with the extra log at alpha = 2) and
the shells are continued on the model, with a geometric remainder for the
part that is never reached.
"""
from __future__ import annotations

import itertools
import math

import numba as nb
import numpy as np

from ._radial import gauss_panels

__all__ = ["FrequencyQuadrature", "DEFAULT_DEPTH", "DEFAULT_GAUSS"]

DEFAULT_DEPTH = {1: 20, 2: 12, 3: 9}
DEFAULT_GAUSS = {1: 10, 2: 10, 3: 10}


@nb.njit(cache=True)
def _cos_transform_1d(theta, v, X):
    """out[x] = sum_j v_j cos(x theta_j), x = 0..X, via exact phasor rotation."""
    out = np.zeros(X + 1)
    for j in range(theta.size):
        c = math.cos(theta[j])
        s = math.sin(theta[j])
        re = 1.0
        im = 0.0
        vj = v[j]
        for x in range(X + 1):
            if (x & 63) == 0:
                re = math.cos(x * theta[j])
                im = math.sin(x * theta[j])
            out[x] += vj * re
            tmp = re * c - im * s
            im = re * s + im * c
            re = tmp
    return out


class _Box:
    __slots__ = ("nodes", "weights", "phi", "model", "W")

    def __init__(self, nodes, weights, phi, model=False):
        self.nodes = nodes
        self.weights = weights
        self.phi = phi
        self.model = model
        W = np.ones(())
        for w in weights:
            W = np.multiply.outer(W, w)
        self.W = W


def _box_rule(lo, hi, n_panels, n_gauss):
    edges = np.linspace(lo, hi, n_panels + 1)
    x, w = gauss_panels(edges, n_gauss)
    return x.ravel(), w.ravel()


class FrequencyQuadrature:
    """Folded dyadic rule over [0, pi]^d for one SpectralModel.

    x_max bounds |x_i| for the cosine weights that must be resolved;
    depth is the number of shells on which the true symbol is used.
    """

    def __init__(self, spectral, x_max=0, n_gauss: int | None = None, depth: int | None = None,
                 osc: float = 1.5, model_levels: int = 24):
        self.spectral = spectral
        d = spectral.params.d
        self.d = d
        X = np.broadcast_to(np.asarray(x_max, dtype=float), (d,)).copy()
        self.x_max = X
        self.n_gauss = int(n_gauss if n_gauss is not None else DEFAULT_GAUSS.get(d, 6))
        self.depth = int(depth if depth is not None else DEFAULT_DEPTH.get(d, 7))
        self.osc = float(osc)
        self.model_levels = int(model_levels)
        a = spectral.params.alpha
        self.power = min(a, 2.0)
        self._log_model = a == 2.0
        self.boxes: list[_Box] = []
        corners = [c for c in itertools.product((0, 1), repeat=d) if any(c)]
        for k in range(self.depth):
            h = math.pi * 2.0 ** (-k - 1)
            for c in corners:
                nodes, weights = [], []
                for i in range(d):
                    m = max(1, int(math.ceil(h * X[i] / self.osc)))
                    x, w = _box_rule(c[i] * h, (c[i] + 1) * h, m, self.n_gauss)
                    nodes.append(x)
                    weights.append(w)
                phi = spectral.symbol_grid(nodes)
                self.boxes.append(_Box(nodes, weights, phi))
        self._match_model()
        # the model shells: one panel per axis is enough once h * x_max is small
        h0 = math.pi * 2.0 ** (-self.depth - 1)
        self._model_units = []
        for c in corners:
            nodes, weights = [], []
            for i in range(d):
                m = max(1, int(math.ceil(h0 * X[i] / self.osc)))
                x, w = _box_rule(c[i] * 1.0, c[i] + 1.0, m, self.n_gauss)
                nodes.append(x)
                weights.append(w)
            self._model_units.append((nodes, weights))
        self._companion = None
        self._model_cache = None

    # ---- model below the last shell

    def _shape(self, r):
        r = np.asarray(r, dtype=float)
        if self._log_model:
            return r ** 2 * np.log(1.0 / r)
        return r ** self.power

    def _match_model(self):
        inner = self.boxes[-(2 ** self.d - 1):]
        ratios = []
        for b in inner:
            r2 = np.zeros(b.phi.shape)
            for i, x in enumerate(b.nodes):
                shape = [1] * self.d
                shape[i] = x.size
                r2 = r2 + (x ** 2).reshape(shape)
            ratios.append((b.phi / self._shape(np.sqrt(r2))).ravel())
        ratios = np.concatenate(ratios)
        self.model_coefficient = float(np.median(ratios))
        self.model_mismatch = float(np.max(np.abs(ratios / self.model_coefficient - 1.0)))

    def _model_boxes(self):
        if self._model_cache is None:
            self._model_cache = list(self._build_model_boxes())
        return self._model_cache

    def _build_model_boxes(self):
        d = self.d
        for j in range(self.model_levels):
            h = math.pi * 2.0 ** (-self.depth - j - 1)
            level = []
            for nodes, weights in self._model_units:
                nd = [h * x for x in nodes]
                wt = [h * w for w in weights]
                r2 = np.zeros(tuple(x.size for x in nd))
                for i, x in enumerate(nd):
                    shape = [1] * d
                    shape[i] = x.size
                    r2 = r2 + (x ** 2).reshape(shape)
                phi = self.model_coefficient * self._shape(np.sqrt(r2))
                level.append(_Box(nd, wt, phi, model=True))
            yield level

    # ---- integration

    @staticmethod
    def _contract(box, V, x):
        """sum over the box of V * prod_i cos(x_i theta_i); x has shape (n, d)."""
        n, d = x.shape
        T = np.tensordot(np.cos(np.outer(x[:, 0], box.nodes[0])), V, axes=([1], [0]))
        for i in range(1, d):
            T = np.einsum("nj...,nj->n...", T, np.cos(np.outer(x[:, i], box.nodes[i])))
        return T

    @staticmethod
    def _table(box, V, X):
        d = len(box.nodes)
        if d == 1:
            return _cos_transform_1d(np.ascontiguousarray(box.nodes[0]), np.ascontiguousarray(V), int(X[0]))
        T = V
        for i in range(d):
            Cm = np.cos(np.outer(np.arange(int(X[i]) + 1), box.nodes[i]))
            # contract the current leading node axis, the new x axis goes last
            T = np.tensordot(T, Cm, axes=([0], [1]))
        return T

    def _apply(self, box, F, x):
        V = box.W * F(box.phi)
        if x is None:
            return math.fsum(V.ravel()) if V.size < 4096 else float(V.sum())
        if isinstance(x, str):
            return self._table(box, V, self.x_max)
        return self._contract(box, V, x)

    def integrate(self, F, x=None, *, with_error: bool = False):
        """(2 pi)^-d int F(phi(theta)) prod cos(x_i theta_i) dtheta.

        F maps an array of phi values to integrand values.  x is None
        (no cosine), an (n, d) integer array, or "table" for all of
        [0, x_max]^d.  Returns the value, or (value, error) if asked.
        """
        xx = x
        if x is not None and not isinstance(x, str):
            xx = np.asarray(x, dtype=float).reshape(-1, self.d)
            if np.any(np.abs(xx) > self.x_max * (1 + 1e-12)):
                raise ValueError("points outside the resolved range x_max")
        total = 0.0
        for b in self.boxes:
            total = total + self._apply(b, F, xx)
        prev = last = None
        for level in self._model_boxes():
            contrib = 0.0
            for b in level:
                contrib = contrib + self._apply(b, F, xx)
            total = total + contrib
            prev, last = last, contrib
        total = total + self._remainder(prev, last)
        total = total / math.pi ** self.d
        if not with_error:
            return total
        err = np.abs(total - self.companion().integrate(F, x))
        return total, err

    @staticmethod
    def _remainder(prev, last):
        if prev is None:
            return 0.0
        prev = np.asarray(prev, dtype=float)
        last = np.asarray(last, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(prev != 0, last / prev, 0.0)
        ok = (r > 0) & (r < 0.999)
        rem = np.where(ok, last * r / np.where(ok, 1.0 - r, 1.0), 0.0)
        return float(rem) if rem.ndim == 0 else rem

    def companion(self) -> "FrequencyQuadrature":
        """Lower-order rule on the same shells, for error estimates."""
        if self._companion is None:
            self._companion = FrequencyQuadrature(self.spectral, self.x_max, max(self.n_gauss - 3, 3),
                                                  self.depth, self.osc, self.model_levels)
        return self._companion

    @property
    def n_nodes(self) -> int:
        return int(sum(b.phi.size for b in self.boxes))
