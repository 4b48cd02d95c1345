"""Limit laws of the centred occupation time and the estimators that test them."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .kernel import KernelParams
from .spectral import SpectralModel, lambda_branch

__all__ = [
    "fbm_cov",
    "fbm_cov_matrix",
    "fbm_sample",
    "FbmOracle",
    "LimitLaw",
    "limit_law",
    "theoretical_cov",
    "HurstResult",
    "hurst_estimate",
    "RegressionResult",
    "scaling_regression",
    "ZReport",
    "compare",
    "BRANCHES",
]

# branch -> (family, Lambda formula)
BRANCHES = {
    "fbm": ("fBm", "N^H"),
    "critical": ("BM", "sqrt(N log N)"),
    "diffusive": ("BM", "sqrt(N)"),
    "d3": ("fBm", "N^(3/4)"),
    "d3_log": ("fBm", "N^(3/4) (log N)^(-3/4)"),
    "d4_log": ("BM", "sqrt(N log N)"),
}


def _check_H(H):
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst parameter must lie in (0, 1), got {H}")


def fbm_cov(s, t, H: float):
    _check_H(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("times must be >= 0")
    h2 = 2.0 * H
    out = 0.5 * (t ** h2 + s ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fbm_cov_matrix(grid, H: float) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    return fbm_cov(g[:, None], g[None, :], H)


class FbmOracle:
    """fBm covariance and exact Gaussian paths on a fixed grid."""

    max_points = 2048

    def __init__(self, grid, H: float):
        _check_H(H)
        g = np.asarray(grid, dtype=float).ravel()
        if g.size == 0 or g.size > self.max_points:
            raise DomainError(f"grid must have 1..{self.max_points} points")
        if np.any(np.diff(g) <= 0) or g[0] < 0:
            raise DomainError("grid must be strictly increasing and >= 0")
        self.grid = g
        self.H = float(H)
        self._zero = g[0] == 0.0
        inner = g[1:] if self._zero else g
        K = fbm_cov_matrix(inner, H)
        try:
            self.factor = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            # nonnegative pivots within 1e-10 of the diagonal scale are accepted
            jitter = 1e-10 * float(np.max(np.diag(K)))
            try:
                self.factor = np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
            except np.linalg.LinAlgError as exc:
                raise DomainError(f"fBm covariance is not positive definite on this grid (H={H})") from exc

    def cov(self, s, t):
        return fbm_cov(s, t, self.H)

    def sample(self, rng, n: int | None = None) -> np.ndarray:
        m = self.factor.shape[0]
        z = rng.standard_normal((m,) if n is None else (n, m))
        x = z @ self.factor.T
        if self._zero:
            pad = np.zeros(x.shape[:-1] + (1,))
            x = np.concatenate([pad, x], axis=-1)
        return x


def fbm_sample(grid, H: float, rng, n: int | None = None) -> np.ndarray:
    """One path (or n paths) of fBm on `grid` via the Cholesky factor."""
    return FbmOracle(grid, H).sample(rng, n)


@dataclass
class LimitLaw:
    d: int
    alpha: float
    p: float
    branch: str
    family: str
    hurst: float
    lambda_formula: str
    sigma2: float
    ingredients: dict = field(default_factory=dict)

    def Lambda(self, N: float) -> float:
        from .spectral import scaling_Lambda

        return scaling_Lambda(N, self.d, self.alpha)

    def as_dict(self) -> dict:
        return asdict(self)


def limit_law(d: int, alpha: float, p: float, green, spectral: SpectralModel | None = None) -> LimitLaw:
    """Family, Hurst index, normalisation and variance constant for (d, alpha, p)."""
    KernelParams(d, alpha).require_transient("the occupation-time limit law")
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    spectral = spectral or green.spectral
    br = lambda_branch(d, alpha)
    family, formula = BRANCHES[br]
    C = float(green.capacity)
    pq = p * (1.0 - p)
    ing = {"C": C}
    if br == "fbm":
        H = 1.5 - d / (2.0 * alpha)
        f1 = spectral.f_origin(1.0)
        rational = alpha ** 3 / ((d - alpha) * (2 * alpha - d) * (3 * alpha - d))
        sigma2 = 2.0 * f1 * rational * C * pq
        ing.update(f1_0=f1, rational_factor=rational)
        formula = f"N^({H:.12g})"
    elif br in ("critical", "d4_log"):
        H = 0.5
        f1 = spectral.f_origin(1.0)
        sigma2 = 2.0 * f1 * C * pq
        ing.update(f1_0=f1)
    elif br in ("d3", "d3_log"):
        H = 0.75
        f1 = spectral.f_origin(1.0)
        sigma2 = 16.0 / 3.0 * f1 * C * pq
        ing.update(f1_0=f1)
    else:
        H = 0.5
        dt = float(green.double_tail())
        sigma2 = 2.0 * dt * C * pq
        ing.update(double_tail=dt)
    return LimitLaw(int(d), float(alpha), float(p), br, family, float(H), formula, float(sigma2), ing)


def theoretical_cov(law: LimitLaw, s, t):
    if law.family == "BM":
        out = law.sigma2 * np.minimum(np.asarray(s, float), np.asarray(t, float))
        return float(out) if np.ndim(out) == 0 else out
    return law.sigma2 * fbm_cov(s, t, law.hurst)


# --------------------------------------------------------------------------
# estimators


@dataclass
class HurstResult:
    H: float
    ci: tuple
    slope: float
    slope_se: float
    n_paths: int

    def as_dict(self):
        return asdict(self)


def hurst_estimate(paths, times, method: str = "aggregated-variance", *, center_z: float = 5.0,
                   level_z: float = 1.96) -> HurstResult:
    """H from the growth of the across-replica variance: log Var(path(t)) ~ 2H log t.

    Paths whose ensemble mean is significantly nonzero at some time
    (|mean|/se > center_z) are refused: the estimator assumes centred paths.
    """
    if method != "aggregated-variance":
        raise DomainError(f"unknown method {method!r}")
    X = np.asarray(paths, dtype=float)
    t = np.asarray(times, dtype=float)
    if X.ndim != 2 or X.shape[1] != t.size:
        raise DomainError("paths must be (n_paths, n_times) matching `times`")
    if X.shape[0] < 100:
        raise DomainError("need at least 100 paths")
    keep = t > 0
    X, t = X[:, keep], t[keep]
    if t.size < 3:
        raise DomainError("need at least 3 positive times")
    var = X.var(axis=0, ddof=1)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise DomainError("degenerate variance: paths are constant at some time")
    n = X.shape[0]
    z = np.abs(X.mean(axis=0)) / np.sqrt(var / n)
    if np.any(z > center_z):
        raise DomainError(f"paths are not centred (max |mean|/se = {z.max():.2f}); remove the drift first")
    x = np.log(t)
    y = np.log(var)
    A = np.column_stack([np.ones_like(x), x])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(x.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    slope, se = float(coef[1]), float(math.sqrt(cov[1, 1]))
    H = slope / 2.0
    return HurstResult(H, (H - level_z * se / 2.0, H + level_z * se / 2.0), slope, se, int(n))


@dataclass
class RegressionResult:
    slope: float
    ci: tuple
    slope_se: float
    intercept: float
    curvature: float
    curvature_se: float
    flag: str | None

    def as_dict(self):
        return asdict(self)


def scaling_regression(N, var, std_error=None, replicas=None, *, curvature_tol: float = 1e-3,
                       level_z: float = 1.96) -> RegressionResult:
    """Weighted least-squares slope of log Var against log N.

    Weights are 1/Var(log var): (var/se)^2 when standard errors are given,
    otherwise the replica counts.  A quadratic term is fitted as well; a
    curvature beyond both curvature_tol and 3 standard errors raises the
    flag "log-corrected branch suspected".
    """
    N = np.asarray(N, dtype=float)
    v = np.asarray(var, dtype=float)
    if N.size < 4:
        raise DomainError("need at least 4 values of N")
    if np.log2(N.max() / N.min()) < 2:
        raise DomainError("N must span at least two dyadic decades")
    if np.any(v <= 0):
        raise DomainError("variances must be positive")
    if std_error is not None:
        se = np.asarray(std_error, dtype=float)
        w = np.where(se > 0, (v / np.where(se > 0, se, 1.0)) ** 2, 0.0)
        if np.all(w == 0):
            w = np.ones_like(v)
        w = np.where(w == 0, w[w > 0].max() if np.any(w > 0) else 1.0, w)
    elif replicas is not None:
        w = np.broadcast_to(np.asarray(replicas, dtype=float), v.shape).copy()
    else:
        w = np.ones_like(v)
    x = np.log(N)
    y = np.log(v)
    sw = np.sqrt(w)

    def fit(deg):
        A = np.column_stack([x ** k for k in range(deg + 1)])
        coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
        resid = (y - A @ coef) * sw
        dof = x.size - (deg + 1)
        if std_error is not None:
            # weights are inverse variances: use them as they are, inflated by any excess scatter
            s2 = max(float(resid @ resid) / dof, 1.0) if dof > 0 else 1.0
        else:
            s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = s2 * np.linalg.pinv((A * w[:, None]).T @ A)
        return coef, cov

    c1, cov1 = fit(1)
    slope, se = float(c1[1]), float(math.sqrt(max(cov1[1, 1], 0.0)))
    curv, curv_se = 0.0, 0.0
    flag = None
    if x.size >= 4:
        c2, cov2 = fit(2)
        curv, curv_se = float(c2[2]), float(math.sqrt(max(cov2[2, 2], 0.0)))
        if abs(curv) > curvature_tol and abs(curv) > 3.0 * curv_se:
            flag = "log-corrected branch suspected"
    return RegressionResult(slope, (slope - level_z * se, slope + level_z * se), se, float(c1[0]),
                            curv, curv_se, flag)


@dataclass
class ZReport:
    empirical: float
    std_error: float
    predicted: float
    z: float
    passed: bool
    label: str = ""

    def as_dict(self):
        return asdict(self)


def compare(empirical, predicted: float, label: str = "", threshold: float = 3.0) -> ZReport:
    """z = (empirical - predicted) / std_error; passes iff |z| <= threshold."""
    value, se = float(empirical[0]), float(empirical[1])
    if not se > 0:
        raise DomainError("std_error must be > 0")
    z = (value - float(predicted)) / se
    return ZReport(value, se, float(predicted), z, bool(abs(z) <= threshold), label)
