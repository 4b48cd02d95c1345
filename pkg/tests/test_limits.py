import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrvoter.errors import DomainError, RecurrentError
from lrvoter.green import GreenModel
from lrvoter.kernel import KernelParams
from lrvoter.limits import (BRANCHES, FbmOracle, compare, fbm_cov, fbm_cov_matrix, fbm_sample, hurst_estimate,
                            limit_law, scaling_regression, theoretical_cov)
from lrvoter.spectral import lambda_branch, scaling_Lambda


# ---- fBm covariance

def test_fbm_cov_examples():
    assert fbm_cov(2, 3, 0.5) == pytest.approx(2.0)
    for H in (0.1, 0.5, 0.75, 0.95):
        assert fbm_cov(1, 1, H) == pytest.approx(1.0)
    assert fbm_cov(1, 1, 0.75) == pytest.approx(1.0)
    assert fbm_cov(1, 4, 0.75) == pytest.approx(1.90192378864668, rel=1e-12)


def test_fbm_cov_refusals():
    for H in (0.0, 1.0, -0.2, 1.3):
        with pytest.raises(DomainError):
            fbm_cov(1, 1, H)
    with pytest.raises(DomainError):
        fbm_cov(-1, 1, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=30, unique=True), st.floats(0.05, 0.95))
def test_fbm_cov_psd(ts, H):
    g = np.sort(np.array(ts))
    if np.min(np.diff(g)) < 1e-4:
        return
    K = fbm_cov_matrix(g, H)
    assert np.allclose(K, K.T)
    FbmOracle(g, H)  # Cholesky with the documented tolerance
    assert np.linalg.eigvalsh(K).min() > -1e-10 * np.abs(K).max()


def test_fbm_sample_unit_variance():
    rng = np.random.default_rng(8)
    x = fbm_sample([0.5, 1.0, 2.0], 0.75, rng, n=10 ** 4)
    v = x[:, 1].var(ddof=1)
    assert abs(v - 1.0) < 3 * math.sqrt(2.0 / x.shape[0])


def test_bm_independent_increments():
    rng = np.random.default_rng(9)
    x = fbm_sample([1.0, 2.0], 0.5, rng, n=10 ** 4)
    prod = x[:, 0] * (x[:, 1] - x[:, 0])
    assert abs(prod.mean()) < 3 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_fbm_sample_grid_checks():
    rng = np.random.default_rng(0)
    with pytest.raises(DomainError):
        fbm_sample([1.0, 0.5], 0.7, rng)
    with pytest.raises(DomainError):
        fbm_sample(np.arange(1, 3000, dtype=float), 0.7, rng)
    x = fbm_sample([0.0, 1.0], 0.7, rng, n=3)
    assert np.all(x[:, 0] == 0)


# ---- Hurst estimation

@pytest.mark.parametrize("H,lo,hi", [(0.75, 0.70, 0.80), (0.5, 0.45, 0.55)])
def test_hurst_recovers(H, lo, hi):
    grid = np.arange(1, 513) / 512.0
    rng = np.random.default_rng(int(H * 100))
    paths = fbm_sample(grid, H, rng, n=400)
    r = hurst_estimate(paths, grid)
    assert lo <= r.H <= hi
    assert r.ci[0] < r.H < r.ci[1] and r.n_paths == 400


def test_hurst_refuses_drift():
    grid = np.arange(1, 65) / 64.0
    paths = fbm_sample(grid, 0.75, np.random.default_rng(1), n=200) + 2.0 * grid
    with pytest.raises(DomainError, match="centred"):
        hurst_estimate(paths, grid)


def test_hurst_refuses_degenerate():
    grid = np.linspace(0.1, 1, 10)
    with pytest.raises(DomainError):
        hurst_estimate(np.zeros((200, 10)), grid)
    with pytest.raises(DomainError):
        hurst_estimate(np.ones((50, 10)), grid)
    with pytest.raises(DomainError):
        hurst_estimate(np.ones((200, 10)), grid, method="dfa")


def test_hurst_scale_invariant():
    grid = np.arange(1, 33) / 32.0
    paths = fbm_sample(grid, 0.7, np.random.default_rng(2), n=150)
    a = hurst_estimate(paths, grid)
    b = hurst_estimate(7.5 * paths, grid)
    assert b.slope == pytest.approx(a.slope, abs=1e-12)


def test_hurst_noise_free_fixture():
    # paths symmetric in sign with exact variance t^{2H}
    grid = np.array([0.25, 0.5, 1.0])
    base = grid ** 0.8
    paths = np.array([base, -base] * 60)
    assert hurst_estimate(paths, grid).H == pytest.approx(0.8, abs=1e-12)


# ---- scaling regression

def test_regression_exact_power():
    N = 64.0 * 2.0 ** np.arange(7)
    r = scaling_regression(N, N ** (5 / 3), replicas=400)
    assert r.slope == pytest.approx(5 / 3, abs=1e-12)
    assert r.flag is None


def test_regression_log_flag():
    N = 64.0 * 2.0 ** np.arange(7)
    r = scaling_regression(N, N * np.log(N), replicas=400)
    assert 1.0 < r.slope < 1.4
    assert r.flag == "log-corrected branch suspected"


def test_regression_with_errors():
    N = 64.0 * 2.0 ** np.arange(5)
    v = 3.0 * N ** 1.5
    r = scaling_regression(N, v, std_error=0.01 * v)
    assert r.slope == pytest.approx(1.5, abs=1e-10) and r.ci[0] < 1.5 < r.ci[1]


def test_regression_refusals():
    with pytest.raises(DomainError):
        scaling_regression([64, 128, 256], [1, 2, 3])
    with pytest.raises(DomainError):
        scaling_regression([64, 80, 100, 128], [1, 2, 3, 4])
    with pytest.raises(DomainError):
        scaling_regression([64, 128, 256, 512], [1, 0, 3, 4])


# ---- limit laws

@pytest.fixture(scope="module")
def g32():
    return GreenModel(KernelParams(3, 2.0))


@pytest.fixture(scope="module")
def g51():
    return GreenModel(KernelParams(5, 1.0))


def test_law_fbm_branch(green1075):
    law = limit_law(1, 0.75, 0.5, green1075)
    assert law.branch == "fbm" and law.family == "fBm"
    assert law.hurst == pytest.approx(5 / 6, abs=1e-15)
    assert law.ingredients["rational_factor"] == pytest.approx(2.7, rel=1e-14)
    f1 = green1075.spectral.f_origin(1.0)
    assert law.sigma2 == pytest.approx(2 * f1 * 2.7 * green1075.capacity * 0.25, rel=1e-12)
    # 2H is the variance-growth exponent 3 - d/alpha
    assert 2 * law.hurst == pytest.approx(3 - 1 / 0.75, abs=1e-14)
    assert law.Lambda(64.0) == pytest.approx(64.0 ** (5 / 6))
    assert law.as_dict()["branch"] == "fbm"


def test_law_d3_log(g32):
    law = limit_law(3, 2.0, 0.3, g32)
    assert law.branch == "d3_log" and law.family == "fBm" and law.hurst == 0.75
    f1 = g32.spectral.f_origin(1.0)
    assert law.sigma2 == pytest.approx(16 / 3 * f1 * g32.capacity * 0.21, rel=1e-12)
    N = 1000.0
    assert law.Lambda(N) == pytest.approx(N ** 0.75 * math.log(N) ** -0.75)


def test_law_bm_double_tail(g51):
    law = limit_law(5, 1.0, 0.5, g51)
    assert law.branch == "diffusive" and law.family == "BM" and law.hurst == 0.5
    assert "double_tail" in law.ingredients and "f1_0" not in law.ingredients
    assert law.sigma2 == pytest.approx(2 * law.ingredients["double_tail"] * g51.capacity * 0.25, rel=1e-12)
    assert law.Lambda(400.0) == pytest.approx(20.0)


def test_law_refusals(green1075):
    with pytest.raises(RecurrentError):
        limit_law(1, 1.5, 0.5, green1075)
    with pytest.raises(DomainError):
        limit_law(1, 0.75, 1.0, green1075)


def test_theoretical_cov(green1075, g51):
    law = limit_law(1, 0.75, 0.5, green1075)
    assert theoretical_cov(law, 0.7, 0.7) == pytest.approx(law.sigma2 * 0.7 ** (2 * law.hurst))
    assert theoretical_cov(law, 0.3, 0.9) == pytest.approx(law.sigma2 * fbm_cov(0.3, 0.9, law.hurst))
    bm = limit_law(5, 1.0, 0.5, g51)
    assert theoretical_cov(bm, 0.3, 0.9) == pytest.approx(bm.sigma2 * 0.3)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.floats(0.05, 6.0))
def test_branch_partition(d, alpha):
    p = KernelParams(d, alpha)
    if not p.transient:
        with pytest.raises(RecurrentError):
            lambda_branch(d, alpha)
        return
    br = lambda_branch(d, alpha)
    assert br in BRANCHES
    assert scaling_Lambda(100.0, d, alpha) > 0


@pytest.mark.parametrize("d,alpha,br", [
    (1, 0.75, "fbm"), (1, 0.5, "critical"), (1, 0.4, "diffusive"),
    (2, 1.5, "fbm"), (2, 1.0, "critical"), (3, 1.5, "critical"), (3, 1.8, "fbm"),
    (3, 2.0, "d3_log"), (3, 2.5, "d3"), (4, 3.0, "d4_log"), (4, 1.0, "diffusive"), (5, 1.0, "diffusive")])
def test_branch_table(d, alpha, br):
    assert lambda_branch(d, alpha) == br


# ---- z reports

@pytest.mark.parametrize("emp,pred,z,ok", [((1.0, 0.1), 1.0, 0.0, True), ((1.5, 0.1), 1.0, 5.0, False),
                                          ((0.97, 0.02), 1.0, -1.5, True)])
def test_compare(emp, pred, z, ok):
    r = compare(emp, pred, "x")
    assert r.z == pytest.approx(z) and r.passed is ok and r.as_dict()["label"] == "x"


def test_compare_refuses_zero_se():
    with pytest.raises(DomainError):
        compare((1.0, 0.0), 1.0)
