"""Acceptance gate: one PASS/FAIL line per check, at full tolerance."""
import filecmp
import math
import time

import numpy as np
import pytest
from scipy import integrate, special

from conftest import ACCEPTANCE_LINES
from lrvoter.cli import main
from lrvoter.coalesce import dual_moment, stationary_batch
from lrvoter.green import GreenModel
from lrvoter.kernel import JumpSampler, KernelParams, LatticeVector, kernel_mass, torus_kernel
from lrvoter.limits import fbm_sample, hurst_estimate, limit_law, scaling_regression
from lrvoter.spectral import SpectralModel, lclt_error, stable_density_origin
from lrvoter.streams import ReplicaStreams
from lrvoter.voter import (FieldObservable, OccupationConfig, Product, centered_occupation_paths,
                           field_second_moment, field_second_moment_predictor, forward_moment, gaussian_bump,
                           stationary_autocov)

pytestmark = pytest.mark.acceptance


def report(name, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}  ({time.time() - t0:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_kernel_mass():
    t0 = time.time()
    lam, bound = kernel_mass(KernelParams(1, 0.5))
    ref = 2.0 * special.zeta(1.5)
    err = abs(lam - ref)
    report("kernel mass 2 zeta(3/2)", err < 1e-4 and bound < 1e-4, f"{lam:.10f} vs {ref:.10f}, |diff| {err:.2e}", t0)


def test_local_clt():
    t0 = time.time()
    parts, ok = [], True
    for d, a in ((1, 0.75), (2, 1.0)):
        m = SpectralModel(KernelParams(d, a))
        e8 = lclt_error(8, 1.0, m).sup_error
        e64 = lclt_error(64, 1.0, m).sup_error
        f1 = m.f_origin(1.0)
        ok &= e8 / e64 >= 2.0 and e64 < 0.1 * f1
        parts.append(f"({d},{a:g}) e8={e8:.3g} e64={e64:.3g} ratio={e8 / e64:.1f} e64/f1={e64 / f1:.2g}")
    report("local CLT", ok, "; ".join(parts), t0)


def test_self_similarity():
    t0 = time.time()
    worst = 0.0
    for d, a in ((1, 0.5), (1, 0.75), (2, 1.0), (3, 1.5)):
        m = SpectralModel(KernelParams(d, a), R_phi=50)
        f1 = stable_density_origin(1.0, m)
        for t in (0.5, 2.0, 4.0):
            worst = max(worst, abs(stable_density_origin(t, m) - t ** (-d / a) * f1) / f1)
    ok = worst < 1e-9
    # Gaussian branch (alpha > 2): the origin density by quadrature scales as t^{-d/2}
    worst_g = 0.0
    for d, a in ((1, 3.0), (3, 2.5)):
        m = SpectralModel(KernelParams(d, a), R_phi=50)
        s2 = m.gaussian_variance()
        area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)

        def f(t):
            v, _ = integrate.quad(lambda r: r ** (d - 1) * math.exp(-0.5 * t * s2 * r * r), 0, np.inf,
                                  epsabs=0, epsrel=1e-13)
            return area * v / (2 * math.pi) ** d

        q1 = f(1.0)
        for t in (0.5, 2.0, 4.0):
            worst_g = max(worst_g, abs(f(t) - t ** (-d / 2) * q1) / q1)
        worst_g = max(worst_g, abs(m.f_origin(1.0) - q1) / q1)
    ok &= worst_g < 1e-6
    report("self-similarity of f_t(0)", ok, f"closed form max rel {worst:.1e}; quadrature (alpha>2) {worst_g:.1e}", t0)


def test_green_identity():
    t0 = time.time()
    parts, ok = [], True
    for d, a in ((1, 0.5), (1, 0.75), (3, 2.5)):
        lhs, C, gap = GreenModel(KernelParams(d, a)).capacity_identity(512)
        ok &= abs(gap) / C < 1e-2
        parts.append(f"({d},{a:g}) rel gap {abs(gap) / C:.2e}")
    report("capacity identity", ok, "; ".join(parts), t0)


def test_green_asymptotics(green105):
    t0 = time.time()
    r = [green105.green_function(np.array([[x]]))[0] / x ** (0.5 - 1.0) for x in (64, 128)]
    dev = abs(r[0] / r[1] - 1)
    report("Green asymptotics", dev < 0.05, f"G|x|^(d-alpha) = {r[0]:.5f}, {r[1]:.5f}; deviation {dev:.2%}", t0)


def test_duality():
    t0 = time.time()
    tk = torus_kernel(KernelParams(1, 0.5), 64)
    n = 10 ** 4
    fw = forward_moment([0, 1], 8.0, Product(0.5), n, ReplicaStreams(2024, "forward"), torus=tk)
    du = dual_moment([0, 1], 8.0, 0.5, n, ReplicaStreams(2024, "dual"), torus=tk)
    z = (fw[0] - du[0]) / math.hypot(fw[1], du[1])
    report("duality on the L=64 torus", abs(z) <= 3, f"forward {fw[0]:.4f}±{fw[1]:.4f}, dual {du[0]:.4f}±{du[1]:.4f}, "
           f"z={z:+.2f}", t0)


def test_stationary_two_point(sampler1075, green1075):
    t0 = time.time()
    b = stationary_batch([0, 1, 2, 4], 0.5, 1000.0, 10 ** 5, ReplicaStreams(7, "stationary"), sampler1075)
    parts, ok = [], True
    for j, x in ((1, 1), (2, 2), (3, 4)):
        est = b.rb_covariance(0, j, green1075)
        pred = float(np.ravel(green1075.stationary_covariance(np.array([0]), np.array([x]), 0.5))[0])
        z = (est[0] - pred) / est[1]
        ok &= abs(z) <= 3
        parts.append(f"x={x} {est[0]:.5f} vs {pred:.5f} z={z:+.2f}")
    report("stationary two-point function", ok, "; ".join(parts), t0)


def test_occupation_autocov(sampler1075, green1075):
    t0 = time.time()
    out = stationary_autocov([1.0, 4.0], 0.5, 10 ** 4, ReplicaStreams(8, "autocov"), sampler1075, green1075)
    parts, ok = [], True
    for th in (1.0, 4.0):
        est = out[th]["rb"]
        pred = 0.25 * green1075.capacity * green1075.green_tail(th)
        z = (est[0] - pred) / est[1]
        ok &= abs(z) <= 3
        parts.append(f"theta={th:g} {est[0]:.5f} vs {pred:.5f} z={z:+.2f}")
    report("occupation autocovariance", ok, "; ".join(parts), t0)


T_GRID = np.arange(1, 17) / 16.0


@pytest.fixture(scope="module")
def campaign(green1075):
    N = [64 * 2 ** k for k in range(7)]
    cfg = OccupationConfig(1, 0.75, 0.5, 128, N, T_GRID, 400)
    t0 = time.time()
    op = centered_occupation_paths(cfg, ReplicaStreams(9, "campaign"), green=green1075)
    return op, time.time() - t0


def test_variance_scaling(campaign):
    t0 = time.time()
    op, el = campaign
    v = op.variance()
    reg = scaling_regression(op.N, [e[0] for e in v], std_error=[e[1] for e in v])
    ok = abs(reg.slope - 5 / 3) <= 0.15
    report("variance scaling exponent", ok, f"slope {reg.slope:.4f} (CI {reg.ci[0]:.4f}, {reg.ci[1]:.4f}) target 5/3, "
           f"campaign {el:.0f} s", t0)


def test_hurst(campaign):
    t0 = time.time()
    op, _ = campaign
    X = op.normalized()[:, -1, :]
    h = hurst_estimate(X, T_GRID)
    grid = np.arange(1, 513) / 512.0
    ref = hurst_estimate(fbm_sample(grid, 0.75, np.random.default_rng(75), n=400), grid)
    ok = abs(h.H - 5 / 6) <= 0.08 and abs(ref.H - 0.75) <= 0.05
    report("Hurst index", ok, f"H={h.H:.4f} at N={int(op.N[-1])} (target 5/6); fBm(0.75) self-check {ref.H:.4f}", t0)


def test_bm_branch_ratio():
    t0 = time.time()
    p = KernelParams(1, 0.4)
    g = GreenModel(p)
    cfg = OccupationConfig(1, 0.4, 0.5, 128, [2048, 4096], [1.0], 6)
    op = centered_occupation_paths(cfg, ReplicaStreams(11, "bm"), green=g)
    v = op.variance()
    r = [e[0] / n for e, n in zip(v, (2048, 4096))]
    dev = abs(r[0] / r[1] - 1)
    law = limit_law(1, 0.4, 0.5, g)
    report("variance ratio on the BM branch", dev < 0.2,
           f"Var/N = {r[0]:.4f}, {r[1]:.4f}; deviation {dev:.2%}; limit constant {law.sigma2:.4f} (trend only)", t0)


def test_field_second_moment(sampler1075, green1075):
    t0 = time.time()
    eps = 1 / 32
    R = math.ceil(6 / eps)
    obs = FieldObservable(gaussian_bump, eps, 0.5, np.arange(-R, R + 1), 0.75)
    pred = field_second_moment_predictor(obs, green1075)
    res = field_second_moment(obs, 1000.0, 10 ** 4, ReplicaStreams(12, "field"), sampler1075, green1075)
    z = (res["rb"][0] - pred) / res["rb"][1]
    report("fluctuation field second moment", abs(z) <= 3,
           f"{res['rb'][0]:.4f}±{res['rb'][1]:.4f} vs {pred:.4f}, z={z:+.2f}", t0)


def test_reproducibility(tmp_path):
    t0 = time.time()
    cfgs = {
        "duality": "lattice: {L: 32}\ncampaign: {t: 2.0, replicas: 200, sites: [0, 1]}\n",
        "occupation": "model: {alpha: 0.75}\ncampaign: {N: [16, 32, 64, 128], t_grid: [0.5, 1.0], replicas: 100}\n",
    }
    same = True
    for name, text in cfgs.items():
        cfg = tmp_path / f"{name}.yaml"
        cfg.write_text(text)
        for th in (1, 3):
            assert main([name, "--config", str(cfg), "--seed", "99", "--out", str(tmp_path / f"{name}{th}"),
                         "--threads", str(th)]) == 0
        for f in ("summary.json", "tables.csv", "paths.csv"):
            a, b = tmp_path / f"{name}1" / f, tmp_path / f"{name}3" / f
            if a.exists() or b.exists():
                same &= filecmp.cmp(a, b, shallow=False)
    report("bit-identical reruns across thread counts", same, "duality and occupation bundles compared byte by byte", t0)
