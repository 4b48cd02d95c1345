import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from lrvoter.errors import DomainError, GridTooSmall, RecurrentError
from lrvoter.kernel import KernelParams
from lrvoter.spectral import (SpectralModel, StableDensity, char_fn_walk, lambda_branch, lclt_error,
                              scaling_h, scaling_Lambda, stable_char, stable_density, stable_density_origin,
                              symbol_phi, transient_by_integral, transition_table)

PHI_PI = float(4 * (1 - mpmath.mpf(2) ** -1.5) * mpmath.zeta(1.5))


@pytest.fixture(scope="module")
def m2():
    return SpectralModel(KernelParams(2, 1.0))


@pytest.fixture(scope="module")
def m325():
    return SpectralModel(KernelParams(3, 2.5))


# ---- symbol

def test_symbol_examples(spec105):
    assert symbol_phi(0.0, spec105) == 0.0
    # even jumps contribute 0 and odd jumps 2 at theta = pi
    assert symbol_phi(math.pi, spec105) == pytest.approx(PHI_PI, abs=1e-6)


@given(st.floats(-math.pi, math.pi))
@settings(max_examples=50)
def test_symbol_even(th):
    m = SpectralModel(KernelParams(1, 0.5), R_phi=200)
    assert symbol_phi(th, m) == symbol_phi(-th, m)


@pytest.mark.parametrize("d,a", [(1, 0.5), (2, 1.0), (3, 2.5)])
def test_symbol_nonnegative_on_grid(d, a):
    m = SpectralModel(KernelParams(d, a), R_phi={1: 2000, 2: 100, 3: 20}[d])
    n = {1: 10 ** 4, 2: 100, 3: 22}[d]
    ax = np.linspace(-math.pi, math.pi, n)
    phi = m.symbol_grid([ax] * d)
    zero = np.zeros(phi.shape, bool)
    if n % 2:
        zero[(n // 2,) * d] = True
    assert np.all(phi[~zero] > 0)
    assert np.all(phi[zero] == 0)


def test_symbol_tail_radius_insensitive():
    a = SpectralModel(KernelParams(1, 0.75), R_phi=2000)
    b = SpectralModel(KernelParams(1, 0.75), R_phi=20000)
    for th in (0.01, 0.3, 2.0):
        assert symbol_phi(th, a) == pytest.approx(symbol_phi(th, b), rel=1e-6)


# ---- characteristic functions

def test_char_fn_examples(spec105):
    assert char_fn_walk(1.3, 0.0, spec105) == 1.0
    assert char_fn_walk(0.0, 5.0, spec105) == 1.0
    assert char_fn_walk(math.pi, 1.0, spec105) == pytest.approx(math.exp(-PHI_PI), rel=1e-5)
    assert char_fn_walk(math.pi, 1.0, spec105) == pytest.approx(1.166e-3, rel=1e-3)


def test_stable_char(spec105, m2):
    assert stable_char(0.0, 2.0, spec105) == 1.0
    a = stable_char([0.3, 0.4], 1.0, m2)
    b = stable_char([0.5, 0.0], 1.0, m2)
    assert a == pytest.approx(b, rel=1e-14)
    G = spec105.stable_coefficient
    assert stable_char(0.7, 2.0, spec105) == pytest.approx(math.exp(-2.0 * G * 0.7 ** 0.5), rel=1e-13)


def test_stable_coefficient_closed_form(spec105, spec1075, m2):
    for m in (spec105, spec1075, m2):
        d, a = m.params.d, m.params.alpha
        assert m.stable_coefficient == pytest.approx(SpectralModel.stable_coefficient_closed(d, a), rel=1e-8)


def test_K_and_Sigma():
    m = SpectralModel(KernelParams(3, 2.0))
    assert np.allclose(m.K_matrix, 2 * math.pi / 3 * np.eye(3), rtol=1e-14)
    s = SpectralModel(KernelParams(3, 2.5)).sigma_matrix
    assert np.allclose(s, s.T)
    assert np.all(np.linalg.eigvalsh(s) > 0)
    assert np.count_nonzero(s - np.diag(np.diag(s))) == 0


# ---- transition tables

def test_table_time_zero(spec105):
    t = transition_table(0.0, spec105, M=256, B=16)
    assert t.origin == 1.0
    assert np.count_nonzero(t.values) == 1


@pytest.mark.parametrize("t", [1.0, 4.0])
def test_table_invariants(spec105, t):
    tab = transition_table(t, spec105, M=2048, B=512)
    v = tab.values
    assert np.all((v >= 0) & (v <= 1))
    assert math.fsum(v) + tab.residual == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(v, v[::-1], atol=1e-15)
    assert np.all(v <= tab.origin)


def test_table_2d_symmetry(m2):
    tab = transition_table(2.0, m2, M=128, B=32)
    v = tab.values
    assert np.allclose(v, v[::-1, :], atol=1e-15)
    assert np.allclose(v, v.T, atol=1e-15)
    assert np.all(v <= tab.origin + 1e-15)


@pytest.mark.parametrize("t,s", [(1.0, 1.0), (1.0, 2.0)])
def test_chapman_kolmogorov(spec105, t, s):
    M = 4096
    a = transition_table(t, spec105, M=M, B=M // 2).values[:-1]
    b = transition_table(s, spec105, M=M, B=M // 2).values[:-1]
    c = transition_table(t + s, spec105, M=M, B=M // 2)
    # full torus: circular convolution at z = 0
    assert float(a @ b[::-1][np.r_[-1, 0:M - 1]]) == pytest.approx(c.origin, abs=1e-6)


def test_origin_decreasing(spec105):
    vals = [transition_table(t, spec105, M=4096).origin for t in (1, 2, 4, 8)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_grid_too_small(spec105):
    with pytest.raises(GridTooSmall, match="grid too small"):
        transition_table(1000.0, spec105, M=64)
    with pytest.raises(DomainError):
        transition_table(1.0, spec105, M=100)


def test_table_export(tmp_path, spec105):
    tab = transition_table(1.0, spec105, M=256, B=4)
    path = tmp_path / "p.csv"
    tab.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "x0,p" and len(rows) == 10
    assert float(rows[5].split(",")[1]) == tab.origin
    meta = json.loads(json.dumps(tab.metadata()))
    assert meta["M"] == 256 and meta["R_phi"] == spec105.R_phi


# ---- stable densities

@pytest.mark.parametrize("d,a", [(1, 0.5), (1, 0.75), (2, 1.0), (3, 1.5)])
def test_self_similarity_closed_form(d, a):
    m = SpectralModel(KernelParams(d, a), R_phi=50)
    f1 = stable_density_origin(1.0, m)
    for t in (0.5, 2.0, 4.0):
        assert abs(stable_density_origin(t, m) - t ** (-d / a) * f1) / f1 < 1e-9


def test_origin_closed_form_matches_quadrature(spec1075, m2):
    for m in (spec1075, m2):
        f = StableDensity(m, 1.0)
        assert f._unit_quadrature(0.0) * f.scale ** (-m.params.d) == pytest.approx(m.f_origin(1.0), rel=1e-8)


def test_gaussian_origin_by_quadrature(m325):
    s2 = m325.sigma2
    for t in (1.0, 2.0):
        # radial quadrature of exp(-t s2 rho^2 / 2)
        val, _ = integrate.quad(lambda r: 4 * math.pi * r * r * math.exp(-0.5 * t * s2 * r * r), 0, np.inf,
                                epsabs=0, epsrel=1e-12)
        q = val / (2 * math.pi) ** 3
        ref = (2 * math.pi * t) ** -1.5 * np.linalg.det(m325.sigma_matrix) ** -0.5
        assert q == pytest.approx(ref, rel=1e-8)
        assert stable_density_origin(t, m325) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("d,a", [(1, 0.5), (1, 0.75), (2, 1.0), (3, 2.5)])
def test_density_normalised(d, a):
    m = SpectralModel(KernelParams(d, a), R_phi=50)
    assert StableDensity(m, 1.0).total_mass() == pytest.approx(1.0, abs=1e-6)


def test_density_cauchy_case():
    # alpha = 1, d = 1 is the Cauchy law with scale G~
    m = SpectralModel(KernelParams(1, 1.0), R_phi=50)
    G = m.stable_coefficient
    u = np.array([0.0, 0.5, 3.0, 40.0])
    assert np.allclose(stable_density(u, 1.0, m), G / (math.pi * (G * G + u * u)), rtol=1e-8)


def test_density_positive(spec1075):
    f = StableDensity(spec1075, 1.0)
    assert np.all(f(np.linspace(0, 200, 41)) > 0)
    with pytest.raises(DomainError):
        StableDensity(spec1075, 0.0)


# ---- scaling functions

def test_scaling_h():
    assert scaling_h(9.0, 2.0) == pytest.approx(math.sqrt(9 * math.log(9)))
    assert scaling_h(9.0, 3.0) == 3.0
    assert scaling_h(8.0, 0.75) == pytest.approx(8 ** (4 / 3))
    with pytest.raises(DomainError):
        scaling_h(1.0, 2.0)


def test_scaling_Lambda():
    assert scaling_Lambda(64.0, 1, 0.75) == pytest.approx(64 ** (5 / 6))
    assert scaling_Lambda(64.0, 3, 2.0) == pytest.approx(64 ** 0.75 * math.log(64) ** -0.75)
    assert scaling_Lambda(64.0, 5, 1.0) == pytest.approx(8.0)
    assert scaling_Lambda(64.0, 2, 1.0) == pytest.approx(math.sqrt(64 * math.log(64)))
    with pytest.raises(RecurrentError):
        scaling_Lambda(64.0, 1, 1.5)
    with pytest.raises(DomainError):
        scaling_Lambda(1.0, 1, 0.5)


@given(st.integers(1, 6), st.floats(0.05, 4.0))
def test_transience_by_integral(d, a):
    if a == 2.0 or abs(a - d) < 1e-9:
        return
    assert transient_by_integral(d, a) == KernelParams(d, a).transient


def test_transience_borderlines():
    assert transient_by_integral(2, 2.0) is False and KernelParams(2, 2.0).transient is False
    assert transient_by_integral(3, 2.0) and KernelParams(3, 2.0).transient
    assert transient_by_integral(1, 1.0) is False


# ---- local CLT

def test_lclt_trend_1d(spec1075):
    e8 = lclt_error(8, 1.0, spec1075)
    e64 = lclt_error(64, 1.0, spec1075)
    assert e64.sup_error < e8.sup_error
    f1 = spec1075.f_origin(1.0)
    # the scale check uses the unwrapped walk (the periodized table carries the torus images)
    _, i8 = lclt_error(8, 1.0, spec1075, method="direct", details=True)
    _, info = lclt_error(64, 1.0, spec1075, method="direct", details=True)
    assert abs(info["origin_walk"] - f1) <= 0.5 * abs(i8["origin_walk"] - f1)


def test_lclt_direct_agrees(spec1075):
    per = lclt_error(8, 1.0, spec1075)
    di = lclt_error(8, 1.0, spec1075, method="direct")
    assert di.sup_error == pytest.approx(per.sup_error, rel=0.05)


def test_lclt_2d_calibration(m2):
    e = lclt_error(32, 1.0, m2)
    assert e.sup_error < 0.1 * m2.f_origin(1.0)


def test_lclt_refuses_alpha2_small_N():
    with pytest.raises(DomainError):
        lclt_error(1, 1.0, SpectralModel(KernelParams(3, 2.0), R_phi=8))
