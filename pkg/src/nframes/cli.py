"""Command-line front end: ``nframes <pipeline> --config run.json``.

Exit codes: 0 when every enabled assertion passes, 1 on a failed assertion
or a pipeline error (diagnostic in report.json), 2 on a malformed config.
"""
from __future__ import annotations

import os

# cap BLAS/OpenMP pools before numpy is loaded
_threads = os.environ.get("NFRAMES_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse
import csv
import io
import json
import math
import sys
import tempfile
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coulomb_gauge import (bounds_report, coulomb_gauge_general, coulomb_gauge_n2, coulomb_psi,
                            grassmann_residuals, integral_functions, riemann_hilbert_psi, total_torsion)
from .disc_solvers import PolarGrid, ScalarField
from .errors import ConfigError, NFramesError
from .geometry_core import curvature_inequality_margin, curvatures, integrability_residuals
from .normal_bundle import (euler_gram_schmidt_frame, normal_curvature, random_rotation_field, rotate_frame,
                            torsion_coefficients)
from .surface_catalog import builtin_surface, list_surfaces

SCHEMA = "nframes.report/1"
PIPELINES = ("analyze", "gauge", "bounds", "rh", "residuals")

DEFAULT_TOLERANCES = {
    "frame": 1e-10,            # orthonormality and tangency defects
    "residual": 1e-8,          # analytic structure-equation residuals
    "el_interior": 1e-6,       # general-n descent stopping tolerance
    "el_boundary": 1e-8,
    "total_torsion_max": None,  # optional upper limit on the gauged total torsion
    "invariance": 1e-6,
    "inequality": 1e-9,
    "rh": 2e-2,
    "rh_radius": 0.9,
    "max_iter": 5000,
    "rotations": 3,
}


@dataclass
class RunConfig:
    pipeline: str
    surface: str
    params: dict
    nr: int
    ntheta: int
    tolerances: dict
    out: Path
    seed: int = 0

    @classmethod
    def from_dict(cls, raw, pipeline: str | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {"pipeline", "surface", "grid", "tolerances", "output_dir", "seed"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
        pipeline = pipeline or raw.get("pipeline")
        if pipeline not in PIPELINES:
            raise ConfigError(f"pipeline: {pipeline!r} is not one of {list(PIPELINES)}")

        surf = raw.get("surface")
        if isinstance(surf, str):
            surf = {"name": surf}
        if not isinstance(surf, dict) or "name" not in surf:
            raise ConfigError("surface: expected an object with a 'name' field")
        name = surf["name"]
        params = surf.get("params", {})
        try:
            builtin_surface(name, params)
        except ConfigError as exc:
            field_name = "surface.name" if "unknown surface" in str(exc) else "surface.params"
            raise ConfigError(f"{field_name}: {exc}") from exc

        grid = raw.get("grid", {})
        if not isinstance(grid, dict):
            raise ConfigError("grid: expected an object")
        nr, ntheta = grid.get("nr", 64), grid.get("ntheta")
        ntheta = 2 * nr if ntheta is None else ntheta
        for key, val in (("grid.nr", nr), ("grid.ntheta", ntheta)):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{key}: expected an integer, got {val!r}")
        try:
            PolarGrid(nr, ntheta)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

        tol = dict(DEFAULT_TOLERANCES)
        user_tol = raw.get("tolerances", {})
        if not isinstance(user_tol, dict):
            raise ConfigError("tolerances: expected an object")
        for key, val in user_tol.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{key}: unknown tolerance")
            if val is not None and (not isinstance(val, (int, float)) or isinstance(val, bool) or val < 0):
                raise ConfigError(f"tolerances.{key}: expected a non-negative number")
            tol[key] = val

        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed: expected an integer, got {seed!r}")
        out = raw.get("output_dir", "nframes_out")
        if not isinstance(out, str):
            raise ConfigError("output_dir: expected a string")
        return cls(pipeline, name, params, nr, ntheta, tol, Path(out), seed)

    def echo(self) -> dict:
        return {"pipeline": self.pipeline, "surface": {"name": self.surface, "params": self.params},
                "grid": {"nr": self.nr, "ntheta": self.ntheta}, "tolerances": self.tolerances,
                "seed": self.seed}


@dataclass
class RunReport:
    config: dict
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    error: str | None = None
    fields: dict = field(default_factory=dict)

    def check(self, name: str, value, threshold, relation: str = "<=") -> bool:
        value = float(value)
        ops = {"<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b}
        ok = bool(math.isfinite(value) and ops[relation](value, threshold))
        self.criteria.append({"name": name, "value": value, "relation": relation,
                              "threshold": float(threshold), "passed": ok})
        return ok

    @property
    def passed(self) -> bool:
        return self.error is None and all(c["passed"] for c in self.criteria)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "version": __version__, "config": self.config,
                "status": "error" if self.error else ("pass" if self.passed else "fail"),
                "error": self.error, "results": self.results, "residuals": self.residuals,
                "criteria": self.criteria, "timings": self.timings}


# ---------------------------------------------------------------------------
# pipelines

def _sup(a, mask=None) -> float:
    a = np.abs(np.asarray(a))
    if mask is not None:
        a = a[mask]
    return float(np.max(a, initial=0.0))


def _frame(cfg: RunConfig, rep: RunReport):
    spec = builtin_surface(cfg.surface, cfg.params)
    grid = PolarGrid(cfg.nr, cfg.ntheta)
    frame = euler_gram_schmidt_frame(spec, grid)
    d = frame.defects()
    rep.results["frame_defects"] = d
    rep.results["codimension"] = frame.n
    rep.check("frame_defect", max(d["orthonormality"], d["normality"]), cfg.tolerances["frame"])
    rep.check("frame_orientation_min_det", d["min_det"], 0.0, ">=")
    return spec, grid, frame


def _curvature(frame, forms):
    # the forms route needs conformal parameters; fall back to the metric contraction
    return normal_curvature(forms, metric=forms.conformality_defect >= 1e-8)


def _gauge(cfg: RunConfig, frame):
    if frame.n == 2:
        return coulomb_gauge_n2(frame)
    return coulomb_gauge_general(frame, tol=cfg.tolerances["el_interior"], max_iter=int(cfg.tolerances["max_iter"]))


def run_analyze(cfg: RunConfig, rep: RunReport):
    spec, grid, frame = _frame(cfg, rep)
    forms = frame.forms()
    cs = curvatures(forms)
    nc = _curvature(frame, forms)
    margin = curvature_inequality_margin(forms, nc.S12)
    T = torsion_coefficients(frame)
    rep.results.update({
        "conformality_defect": forms.conformality_defect,
        "W_min": float(np.min(forms.W)), "W_max": float(np.max(forms.W)),
        "K_min": float(np.min(cs.K)), "K_max": float(np.max(cs.K)),
        "normal_curvature_sup": _sup(nc.magnitude),
        "torsion_sup": _sup(T.T),
        "total_torsion_start_frame": total_torsion(T, forms),
        "curvature_inequality_min_margin": float(np.min(margin)),
    })
    rep.check("curvature_inequality", float(np.min(margin)), -cfg.tolerances["inequality"], ">=")
    rep.fields.update({"W": forms.W, "K": cs.K, "normal_curvature": nc.magnitude,
                       "inequality_margin": np.min(margin, axis=-1)})


def run_residuals(cfg: RunConfig, rep: RunReport):
    spec, grid, frame = _frame(cfg, rep)
    res = integrability_residuals(spec, frame, path="analytic")
    rep.residuals["analytic"] = res.to_dict()
    for key, val in res.values.items():
        if isinstance(val, (int, float)):
            rep.check(f"residual_{key}", val, cfg.tolerances["residual"])
    rep.residuals["fd"] = integrability_residuals(spec, frame.with_fd_derivatives(), path="fd").to_dict()


def run_gauge(cfg: RunConfig, rep: RunReport):
    spec, grid, frame = _frame(cfg, rep)
    forms = frame.forms()
    res = _gauge(cfg, frame)
    rep.results["gauge"] = res.to_dict()
    rep.results["total_torsion_start_frame"] = total_torsion(torsion_coefficients(frame), forms)
    rep.check("el_boundary_residual", res.el_boundary_residual, cfg.tolerances["el_boundary"])
    if frame.n > 2:
        rep.check("el_interior_residual", res.el_interior_residual, cfg.tolerances["el_interior"])
    if cfg.tolerances["total_torsion_max"] is not None:
        rep.check("total_torsion", res.total_torsion, cfg.tolerances["total_torsion_max"])

    # invariance of |normal curvature| under seeded rotations, with analytic derivatives
    rng = np.random.default_rng(cfg.seed)
    ref = normal_curvature(torsion_coefficients(frame)).magnitude
    worst = 0.0
    for _ in range(int(cfg.tolerances["rotations"])):
        rotated = rotate_frame(frame, random_rotation_field(grid, frame.n, rng))
        worst = max(worst, _sup(normal_curvature(torsion_coefficients(rotated)).magnitude - ref))
    rep.results["invariance_max_deviation"] = worst
    if int(cfg.tolerances["rotations"]) > 0:
        rep.check("curvature_invariance", worst, cfg.tolerances["invariance"])
    T0 = res.torsions
    rep.fields.update({"torsion_norm": np.sqrt(np.sum(T0.T**2, axis=(0, -2, -1))),
                       "normal_curvature": ref})
    return frame, res


def run_bounds(cfg: RunConfig, rep: RunReport):
    frame, res = run_gauge(cfg, rep)
    nc = normal_curvature(res.frame.forms())
    G = integral_functions(res.torsions, nc)
    gr = grassmann_residuals(G, nc)
    b = bounds_report(res, nc, G)
    rep.results["grassmann"] = gr
    rep.results["bounds"] = b
    h2 = frame.grid.h ** 2
    rep.check("grassmann_growth_margin", gr["growth_margin"], -10 * h2, ">=")
    rep.check("curvature_inequality", b["curvature_inequality_margin"], -cfg.tolerances["inequality"], ">=")
    lb = b["lower_bound"]
    if lb.get("applicable"):
        rep.check("lower_bound_gap", res.total_torsion - lb["value"], 0.0, ">=")
    rep.fields["grassmann_norm"] = np.linalg.norm(G.vector, axis=-1)


def run_rh(cfg: RunConfig, rep: RunReport):
    spec, grid, frame = _frame(cfg, rep)
    if frame.n != 2:
        raise ConfigError(f"surface.name: the rh pipeline needs codimension 2, {cfg.surface!r} has {frame.n}")
    res = _gauge(cfg, frame)
    nc = normal_curvature(res.frame.forms())
    psi = riemann_hilbert_psi(ScalarField(grid, nc.S12[..., 0, 1])).values
    torsion_psi = coulomb_psi(res.torsions)
    mask = grid.R <= cfg.tolerances["rh_radius"] + 1e-12
    err = _sup(psi - torsion_psi, mask)
    rep.results.update({"gauge": res.to_dict(), "psi_sup": _sup(psi), "psi_torsion_sup_error": err})
    rep.check("psi_vs_torsion", err, cfg.tolerances["rh"])
    rep.fields.update({"psi_re": psi.real, "psi_im": psi.imag,
                       "torsion_psi_re": torsion_psi.real, "torsion_psi_im": torsion_psi.imag})


RUNNERS = {"analyze": run_analyze, "gauge": run_gauge, "bounds": run_bounds, "rh": run_rh,
           "residuals": run_residuals}


def run(cfg: RunConfig) -> RunReport:
    rep = RunReport(cfg.echo())
    t0 = time.perf_counter()
    try:
        RUNNERS[cfg.pipeline](cfg, rep)
    except NFramesError as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        rep.error = f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"
    rep.timings["total_seconds"] = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# output

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def fields_csv(grid: PolarGrid, fields: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = sorted(fields)
    w.writerow(["r", "theta", "u", "v"] + names)
    cols = [grid.R, grid.TH, grid.u, grid.v] + [np.asarray(fields[k], dtype=float) for k in names]
    flat = np.stack([c.reshape(-1) for c in cols], axis=1)
    for row in flat:
        w.writerow([format(x, ".17g") for x in row])
    return buf.getvalue()


def write_outputs(cfg: RunConfig, rep: RunReport) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    if rep.fields and rep.error is None:
        _atomic_write(cfg.out / "fields.csv", fields_csv(PolarGrid(cfg.nr, cfg.ntheta), rep.fields))
    path = cfg.out / "report.json"
    _atomic_write(path, json.dumps(_jsonable(rep.to_dict()), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nframes", description="Normal frames and Coulomb gauges of disc surfaces.")
    p.add_argument("--version", action="version", version=f"nframes {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--nr", type=int, help="radial cells")
        sp.add_argument("--ntheta", type=int, help="angular nodes")
        sp.add_argument("--seed", type=int, help="seed for random rotation fields")
    sub.add_parser("list-surfaces", help="print catalog surfaces and their parameters")
    return p


def load_config(args) -> RunConfig:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError(f"config: cannot read {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    if isinstance(raw, dict):
        raw = dict(raw)
        grid = dict(raw.get("grid", {})) if isinstance(raw.get("grid", {}), dict) else raw.get("grid")
        if isinstance(grid, dict):
            if args.nr is not None:
                grid["nr"] = args.nr
                if args.ntheta is None and "ntheta" in grid:
                    grid.pop("ntheta")
            if args.ntheta is not None:
                grid["ntheta"] = args.ntheta
            raw["grid"] = grid
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output_dir"] = args.out
    return RunConfig.from_dict(raw, pipeline=args.command)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-surfaces":
        print(list_surfaces())
        return 0
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"nframes: config error: {exc}", file=sys.stderr)
        return 2
    rep = run(cfg)
    try:
        path = write_outputs(cfg, rep)
    except OSError as exc:
        print(f"nframes: cannot write output: {exc}", file=sys.stderr)
        return 1
    for c in rep.criteria:
        mark = "pass" if c["passed"] else "FAIL"
        print(f"[{mark}] {c['name']}: {c['value']:.6g} {c['relation']} {c['threshold']:.3g}")
    if rep.error:
        print(f"nframes: pipeline error: {rep.error.splitlines()[0]}", file=sys.stderr)
    print(f"report: {path}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
