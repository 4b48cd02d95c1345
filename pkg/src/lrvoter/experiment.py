"""Pipelines behind the command line: constants, lclt, duality, stationary,
occupation and report.

A pipeline fills a Bundle (summary mapping plus CSV tables); the Bundle is
written by one writer at the end, so file contents never depend on how
replicas were scheduled.  Every number in the summary is stored as
{"value": v, "provenance": {"module": ..., "settings": {...}}}.  Wall-clock
times go to timing.json, which is the only file allowed to differ between
reruns.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, DomainError
from .kernel import JumpSampler, KernelParams, kernel_mass, torus_kernel
from .streams import ReplicaStreams

__all__ = ["Bundle", "run_experiment", "write_bundle", "tag", "PATHS_COLUMNS", "SUMMARY_NAME"]

log = logging.getLogger(__name__)

SUMMARY_NAME = "summary.json"
PATHS_COLUMNS = ("replica", "N", "t", "centered", "Lambda")


# --------------------------------------------------------------------------
# provenance-tagged values


def _plain(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_plain(u) for u in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(u) for u in v]
    if isinstance(v, dict):
        return {str(k): _plain(u) for k, u in v.items()}
    return v


def tag(obj, module: str, **settings):
    """Wrap every numeric leaf of `obj` with its provenance."""
    prov = {"module": module, "settings": _plain(settings)}

    def walk(v):
        if isinstance(v, dict):
            return {str(k): walk(u) for k, u in v.items()}
        if isinstance(v, (list, tuple)) and not (v and all(isinstance(u, (int, float, np.number)) and
                                                            not isinstance(u, bool) for u in v)):
            return [walk(u) for u in v]
        if isinstance(v, (bool, np.bool_)) or v is None or isinstance(v, str):
            return _plain(v)
        return {"value": _plain(v), "provenance": prov}

    return walk(obj)


def _zreport(rep, module, **settings):
    d = rep.as_dict()
    label, passed = d.pop("label"), d.pop("passed")
    out = {"label": label, "passed": passed}
    out.update(tag(d, module, **settings))
    return out


# --------------------------------------------------------------------------
# bundle and writer


@dataclass
class Bundle:
    config: ExperimentConfig
    summary: dict = field(default_factory=dict)
    tables: list = field(default_factory=list)  # rows of (section, key, column, value)
    paths: list = field(default_factory=list)
    z_reports: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    streams: list = field(default_factory=list)
    status: str = "complete"
    error: str | None = None

    def stream(self, label: str) -> ReplicaStreams:
        if label in self.streams:
            raise ValueError(f"stream label {label!r} used twice")
        self.streams.append(label)
        return ReplicaStreams(self.config.seed, label)

    def table(self, section, key, column, value):
        self.tables.append((section, str(key), column, value))

    def document(self) -> dict:
        doc = {"status": self.status}
        if self.error is not None:
            doc["error"] = self.error
        doc["pipeline"] = self.config.pipeline
        doc["config"] = self.config.echo()
        doc["seed"] = {"master": self.config.seed, "streams": list(self.streams),
                       "derivation": "SeedSequence(master, spawn_key=(sha256(label)[:4], replica))"}
        doc.update(self.summary)
        doc["z_reports"] = self.z_reports
        return doc


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_bundle(bundle: Bundle, out_dir) -> Path:
    """The single writer: summary.json, tables.csv, paths.csv (if any), timing.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(bundle.document(), indent=2, sort_keys=False, allow_nan=False) + "\n"
    (out / SUMMARY_NAME).write_text(text)
    lines = ["section,key,column,value"]
    lines += [",".join(_fmt(v) for v in row) for row in bundle.tables]
    (out / "tables.csv").write_text("\n".join(lines) + "\n")
    paths_file = out / "paths.csv"
    if bundle.paths:
        plines = [",".join(PATHS_COLUMNS)] + [",".join(_fmt(v) for v in row) for row in bundle.paths]
        paths_file.write_text("\n".join(plines) + "\n")
    elif paths_file.exists():
        paths_file.unlink()
    (out / "timing.json").write_text(json.dumps(bundle.timing, indent=2) + "\n")
    return out


# --------------------------------------------------------------------------
# pipelines


class _Timer:
    def __init__(self, bundle, name):
        self.bundle, self.name = bundle, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.bundle.timing[self.name] = time.perf_counter() - self.t0
        return False


def _params(cfg):
    return KernelParams(cfg.model.d, cfg.model.alpha)


def _green(cfg):
    from .green import GreenModel

    n = cfg.numerics
    return GreenModel(_params(cfg), R_phi=n.R_phi, n_gauss=n.n_gauss, table_radius=n.table_radius)


def _num_settings(cfg, green=None):
    n = cfg.numerics
    s = {"d": cfg.model.d, "alpha": cfg.model.alpha, "R_phi": n.R_phi, "n_gauss": n.n_gauss,
         "table_radius": n.table_radius}
    if green is not None:
        s["R_phi"] = green.spectral.R_phi
        s["n_gauss"] = green.quad.n_gauss
        s["table_radius"] = green.table_radius
    return s


def _points(sites, d):
    a = np.asarray(sites, dtype=np.int64)
    return a.reshape(-1, d)


def _constants(b: Bundle, green=None):
    from .green import GreenModel  # noqa: F401
    from .limits import limit_law

    cfg = b.config
    settings = _num_settings(cfg, green)
    sp = green.spectral
    lam, lam_err = kernel_mass(_params(cfg))
    c = {"kernel_mass": lam, "kernel_mass_error_bound": lam_err, "G0": green.G0,
         "G0_quadrature_error": green.G0_error, "C": green.capacity, "f1_0": sp.f_origin(1.0)}
    if cfg.model.alpha < 2:
        c["G_tilde"] = sp.stable_coefficient
    else:
        c["sigma2_walk"] = sp.sigma2
    b.summary["constants"] = tag(c, "green/spectral", **settings)
    law = limit_law(cfg.model.d, cfg.model.alpha, cfg.model.p, green)
    ld = law.as_dict()
    b.summary["limit_law"] = tag(ld, "limits", p=cfg.model.p, **settings)
    return law


def pipeline_constants(b: Bundle):
    cfg = b.config
    with _Timer(b, "green_model"):
        g = _green(cfg)
    with _Timer(b, "constants"):
        _constants(b, g)
    with _Timer(b, "identity"):
        lhs, C, gap = g.capacity_identity(R_sum=cfg.numerics.R_sum)
    b.summary["identity"] = tag({"lhs": lhs, "C": C, "gap": gap, "relative_gap": abs(gap) / C},
                                "green.capacity_identity", R_sum=cfg.numerics.R_sum, **_num_settings(cfg, g))
    d = cfg.model.d
    with _Timer(b, "green_table"):
        for r in range(0, 17):
            x = np.zeros((1, d), dtype=np.int64)
            x[0, 0] = r
            b.table("green", r, "G", float(g.green_function(x)[0]))
            b.table("green", r, "Phi", float(np.asarray(g.escape_probability(x))[0]))


def pipeline_lclt(b: Bundle):
    from .spectral import SpectralModel, lclt_error

    cfg = b.config
    n = cfg.numerics
    with _Timer(b, "lclt"):
        sp = SpectralModel(_params(cfg), n.R_phi)
        f1 = sp.f_origin(1.0)
        errs = []
        for N in n.lclt_N:
            res, info = lclt_error(N, n.lclt_t, sp, grid=n.M, details=True)
            errs.append(res.sup_error)
            b.table("lclt", N, "sup_error", res.sup_error)
            b.table("lclt", N, "location", res.location.coords[0] if cfg.model.d == 1 else
                    " ".join(map(str, res.location.coords)))
            b.table("lclt", N, "grid_M", info["M"])
    out = {"f1_0": f1, "N": list(n.lclt_N), "sup_error": errs,
           "decrease_factor": errs[0] / errs[-1] if errs[-1] > 0 else None,
           "last_relative_to_f1": errs[-1] / f1}
    b.summary["lclt"] = tag(out, "spectral.lclt_error", t=n.lclt_t, M=n.M, R_phi=sp.R_phi,
                            d=cfg.model.d, alpha=cfg.model.alpha, method="periodized")


def pipeline_duality(b: Bundle, threads: int):
    from .coalesce import dual_moment
    from .limits import compare
    from .voter import Product, forward_moment

    cfg = b.config
    c = cfg.campaign
    tk = torus_kernel(_params(cfg), cfg.lattice.L)
    sites = _points(c.sites, cfg.model.d)
    with _Timer(b, "forward"):
        fwd = forward_moment(list(sites), c.t, Product(cfg.model.p), c.replicas, b.stream("duality/forward"),
                             torus=tk, threads=threads)
    with _Timer(b, "dual"):
        dual = dual_moment(list(sites), c.t, cfg.model.p, c.replicas, b.stream("duality/dual"), torus=tk,
                           threads=threads)
    se = math.hypot(fwd[1], dual[1])
    rep = compare((fwd[0] - dual[0], se), 0.0, label="forward - dual two-point function")
    settings = {"L": cfg.lattice.L, "t": c.t, "p": cfg.model.p, "replicas": c.replicas, "d": cfg.model.d,
                "alpha": cfg.model.alpha, "sites": sites}
    b.summary["duality"] = tag({"forward": list(fwd), "dual": list(dual),
                                "dual_mean_cardinality": dual.mean_cardinality}, "voter/coalesce", **settings)
    b.z_reports.append(_zreport(rep, "limits.compare", **settings))
    for name, est in (("forward", fwd), ("dual", dual)):
        b.table("duality", name, "estimate", est[0])
        b.table("duality", name, "std_error", est[1])


def pipeline_stationary(b: Bundle, threads: int):
    from .coalesce import stationary_batch
    from .limits import compare
    from .voter import FieldObservable, field_second_moment, field_second_moment_predictor, gaussian_bump
    from .voter import stationary_autocov

    cfg = b.config
    c = cfg.campaign
    d, p = cfg.model.d, cfg.model.p
    with _Timer(b, "green_model"):
        g = _green(cfg)
    _constants(b, g)
    sampler = JumpSampler.build(_params(cfg))
    settings = dict(_num_settings(cfg, g), p=p, T_burn=c.T_burn)
    sites = _points(c.sites, d)
    others = [s for s in sites if np.any(s)]
    res = {}
    if others:
        window = np.concatenate([np.zeros((1, d), dtype=np.int64), np.asarray(others)])
        with _Timer(b, "stationary_batch"):
            batch = stationary_batch(window, p, c.T_burn, c.samples, b.stream("stationary/pairs"), sampler,
                                     threads=threads)
        bound = batch.bias_bound(g)
        for i, x in enumerate(others, start=1):
            key = " ".join(map(str, x.tolist()))
            rb = batch.rb_covariance(0, i, g)
            raw = batch.covariance(0, i)
            pred = float(g.stationary_covariance(np.zeros(d, dtype=np.int64), x, p))
            res[key] = {"rb": list(rb), "raw": list(raw), "predicted": pred}
            rep = compare(rb, pred, label=f"Cov(eta(0), eta({key}))")
            b.z_reports.append(_zreport(rep, "limits.compare", samples=c.samples, **settings))
            for col, v in (("rb", rb[0]), ("rb_se", rb[1]), ("raw", raw[0]), ("raw_se", raw[1]),
                           ("predicted", pred)):
                b.table("covariance", key, col, v)
        b.summary["covariance"] = tag({"pairs": res, "raw_bias_bound": bound,
                                       "late_merges_mean": float(batch.late_merges.mean())},
                                      "coalesce.stationary_batch", samples=c.samples, **settings)
    if c.thetas:
        with _Timer(b, "autocov"):
            ac = stationary_autocov(c.thetas, p, c.replicas, b.stream("stationary/autocov"), sampler, g,
                                    threads=threads)
        out = {}
        for th, est in ac.items():
            pred = g.occupation_autocov(th, p)
            out[repr(th)] = {"rb": list(est["rb"]), "raw": list(est["raw"]), "predicted": pred}
            rep = compare(est["rb"], pred, label=f"Cov(eta_{th:g}(0), eta_0(0))")
            b.z_reports.append(_zreport(rep, "limits.compare", replicas=c.replicas, **settings))
            for col, v in (("rb", est["rb"][0]), ("rb_se", est["rb"][1]), ("predicted", pred)):
                b.table("autocov", repr(th), col, v)
        b.summary["autocov"] = tag(out, "voter.stationary_autocov", replicas=c.replicas, **settings)
    if c.eps > 0:
        R = int(math.ceil(6.0 / c.eps))
        if d != 1:
            raise ConfigError("the field second moment is provided for d = 1 only")
        obs = FieldObservable(gaussian_bump, c.eps, p, np.arange(-R, R + 1), cfg.model.alpha)
        with _Timer(b, "field"):
            pred = field_second_moment_predictor(obs, g)
            fm = field_second_moment(obs, c.T_burn, c.samples, b.stream("stationary/field"), sampler, g,
                                     threads=threads)
        rep = compare(fm["rb"], pred, label=f"E[Y(f)^2], eps={c.eps:g}")
        b.z_reports.append(_zreport(rep, "limits.compare", eps=c.eps, samples=c.samples, **settings))
        b.summary["field"] = tag({"rb": list(fm["rb"]), "raw": list(fm["raw"]), "predicted": pred,
                                  "late_merges_mean": fm["late_merges"], "window_radius": R},
                                 "voter.field_second_moment", eps=c.eps, samples=c.samples, **settings)


def pipeline_occupation(b: Bundle, threads: int):
    from .limits import hurst_estimate, scaling_regression
    from .voter import OccupationConfig, centered_occupation_paths

    cfg = b.config
    c = cfg.campaign
    d, a, p = cfg.model.d, cfg.model.alpha, cfg.model.p
    with _Timer(b, "green_model"):
        g = _green(cfg)
    law = _constants(b, g)
    oc = OccupationConfig(d, a, p, cfg.lattice.L, c.N, c.t_grid, c.replicas, c.T_burn, c.method)
    with _Timer(b, "paths"):
        op = centered_occupation_paths(oc, b.stream("occupation/paths"), green=g, threads=threads)
    settings = dict(_num_settings(cfg, g), p=p, T_burn=c.T_burn, replicas=c.replicas, method=c.method)
    for r, N, t, x, lam in op.to_rows():
        b.paths.append((r, N, t, x, lam))
    var = op.variance()
    rows = {}
    for i, N in enumerate(op.N):
        exact = g.occupation_variance(float(N), p)
        limit = law.sigma2 * float(op.Lambda[i]) ** 2
        rows[str(int(N))] = {"variance": list(var[i]), "exact": exact, "limit": limit,
                             "Lambda": float(op.Lambda[i]), "mean_jumps": float(op.n_jumps[:, i].mean())}
        for col, v in (("variance", var[i][0]), ("variance_se", var[i][1]), ("exact", exact),
                       ("limit", limit), ("Lambda", float(op.Lambda[i]))):
            b.table("variance", int(N), col, v)
    out = {"per_N": rows}
    Ns = op.N.astype(float)
    if Ns.size >= 4 and math.log2(Ns.max() / Ns.min()) >= 2:
        reg = scaling_regression(Ns, [v[0] for v in var], [v[1] for v in var])
        out["regression"] = reg.as_dict()
        out["predicted_slope"] = 2.0 * law.hurst
    if c.replicas >= 100 and op.t.size >= 3:
        try:
            hr = hurst_estimate(op.normalized()[:, -1, :], op.t * float(op.N[-1]))
            out["hurst"] = hr.as_dict()
        except DomainError as exc:
            out["hurst_refused"] = str(exc)
    out["predicted_hurst"] = law.hurst
    b.summary["occupation"] = tag(out, "voter.centered_occupation_paths/limits", **settings)


def pipeline_report(b: Bundle):
    cfg = b.config
    collected = []
    for src in cfg.campaign.inputs:
        path = Path(src) / SUMMARY_NAME
        if not path.exists():
            raise ConfigError(f"no {SUMMARY_NAME} in {src}")
        doc = json.loads(path.read_text())
        for rep in doc.get("z_reports", []):
            z = rep["z"]["value"]
            collected.append({"source": doc.get("pipeline"), "label": rep["label"], "z": z,
                              "passed": rep["passed"], "status": doc.get("status")})
    n_pass = sum(1 for r in collected if r["passed"])
    for i, r in enumerate(collected):
        for col in ("source", "label", "z", "passed"):
            b.table("report", i, col, r[col])
    b.summary["report"] = {
        "entries": [{"source": r["source"], "label": r["label"], "passed": r["passed"], "status": r["status"],
                     **tag({"z": r["z"]}, "limits.compare", source=r["source"])} for r in collected],
        **tag({"passed": n_pass, "total": len(collected)}, "experiment.report"),
    }


_PIPES = {
    "constants": lambda b, th: pipeline_constants(b),
    "lclt": lambda b, th: pipeline_lclt(b),
    "duality": pipeline_duality,
    "stationary": pipeline_stationary,
    "occupation": pipeline_occupation,
    "report": lambda b, th: pipeline_report(b),
}


def run_experiment(config: ExperimentConfig, *, threads: int = 1, out_dir=None) -> Bundle:
    """Validate, execute the configured pipeline and write its outputs.

    Validation errors are raised before anything is computed or written.
    A failure during the run writes what exists so far with status
    "incomplete" and re-raises.
    """
    config.validate()
    b = Bundle(config)
    out = out_dir if out_dir is not None else config.output
    try:
        with _Timer(b, "total"):
            _PIPES[config.pipeline](b, int(threads))
    except Exception as exc:
        b.status = "incomplete"
        b.error = f"{type(exc).__name__}: {exc}"
        write_bundle(b, out)
        raise
    write_bundle(b, out)
    return b
