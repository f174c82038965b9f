"""Command-line front end.

Every subcommand reads one scenario file, applies ``--set key=value``
overrides, runs its checks and writes ``report.json`` plus CSV tables into
the output directory.  Exit codes: 0 all enabled checks pass, 1 a tolerance
check failed, 2 bad configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ConfigError, Scenario, parse_complex, apply_overrides, config_hash, load_config, write_csv, write_json
from .dbar import FieldError, SolverError, dbar_residual, evaluate_gamma, solve_gamma, unimodularity_residual
from .deformation import (DeformationState, MiwaSingularityError, TimeVector, connection_check, hirota_residue,
                          kp_richardson, log_det2, malgrange_form, tau_along_path, tau_ratio, tau_ratio_composition)
from .determinants import SeriesDivergenceError, determinant_report, trace_K
from .geometry import GeometryError, cached_grid
from .kernel import resolvent_identity_residual
from .nls import (a_equation_residual, cmkdv_residual, det2_psi_check, nls_residual, psi_extract, rh_reduce_ellipse,
                  richardson_slope, schwarz_residual, solve_nls, zero_curvature_residual)

EXIT_OK, EXIT_TOL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

SUBCOMMANDS = ("solve-dbar", "det2", "tau-path", "miwa-check", "hirota-check", "kp-residual",
               "nls-solve", "nls-verify", "rh-compare")


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    relation: str = "<="
    enabled: bool = True

    @property
    def passed(self) -> bool:
        v = self.value
        if not np.isfinite(v):
            return False
        if self.relation == "<=":
            return v <= self.tolerance
        if self.relation == ">=":
            return v >= self.tolerance
        lo, hi = self.tolerance
        return lo <= v <= hi

    def as_dict(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "relation": self.relation, "enabled": self.enabled, "passed": self.passed}


class Outcome:
    def __init__(self):
        self.values: dict = {}
        self.checks: list[Check] = []
        self.tables: dict = {}

    def check(self, *args, **kw):
        self.checks.append(Check(*args, **kw))


def _grid(sc: Scenario):
    nr, nt = sc.resolution
    return cached_grid(sc.solve_domain, nr, nt)


def _window(sc: Scenario):
    c = sc.tol("slope_target", 2.0)
    w = sc.tol("slope_width", 0.3)
    return (c - w, c + w)


# -- subcommands -------------------------------------------------------------------------

def cmd_solve_dbar(sc: Scenario, out: Outcome):
    grid = _grid(sc)
    M = sc.field()
    g = solve_gamma(grid, M, sc.tol("rcond_min", 1e-13))
    out.values.update(rcond=g.rcond, det_residual=unimodularity_residual(g), gamma1=g.gamma1, gamma2=g.gamma2)
    if sc.get("dbar_residual", False):
        out.values["dbar_residual"] = dbar_residual(g)
    out.check("det_residual", out.values["det_residual"], sc.tol("unimodularity", 1e-6))
    tab = g.to_table()
    cols = ["node"] + [f"g{a}{b}" for a in (1, 2) for b in (1, 2)]
    rows = [[int(r[0])] + [complex(r[1 + 2 * k], r[2 + 2 * k]) for k in range(4)] for r in tab]
    out.tables["gamma_nodes"] = (cols, rows)


def cmd_det2(sc: Scenario, out: Outcome):
    grid = _grid(sc)
    p = sc.pair()
    if p is None:
        raise ConfigError("det2 needs a field induced by a kernel pair")
    from .kernel import discretize

    A = discretize(p, grid)
    rep = determinant_report(A, int(sc.get("n_max", 40)))
    rep["trace_K"] = trace_K(grid, p)
    out.values.update(rep)
    tol = sc.tol("det_paths", 1e-10)
    out.check("series_vs_eigen", rep["series_vs_eigen"], tol)
    out.check("fredholm_vs_eigen", rep["fredholm_vs_eigen"], tol)
    if sc.get("resolvent", False):
        g = solve_gamma(grid, sc.field())
        res = resolvent_identity_residual(p, g)
        out.values["resolvent_residual"] = res
        out.check("resolvent_identity", res, sc.tol("resolvent", 1e-6))


def _state(sc: Scenario, t=None) -> DeformationState:
    p = sc.pair()
    if p is None:
        raise ConfigError("deformation checks need a field induced by a kernel pair")
    return DeformationState.from_pair(p, _grid(sc), TimeVector(t if t is not None else sc.times()))


def cmd_tau_path(sc: Scenario, out: Outcome):
    path = [tuple(parse_complex(v) for v in vert) for vert in sc.get("path", [])]
    if len(path) < 2:
        raise ConfigError("tau-path needs a 'path' with at least two vertices")
    st = _state(sc, path[0])
    ref0 = log_det2(st)
    rows = [[0, *path[0], 0j, 0j]]
    acc = 0j
    ref = ref0
    for k in range(1, len(path)):
        inc = tau_along_path(st, [path[k - 1], path[k]], int(sc.get("steps", 1)))
        acc += inc
        ref = log_det2(st, ref)
        rows.append([k, *path[k], acc, ref - ref0])
    closed = np.allclose(np.array(path[0]), np.array(path[-1]))
    out.values.update(log_tau_increment=acc, log_det2_increment=ref - ref0, closed=closed,
                      omega_start=malgrange_form(_state(sc, path[0])))
    out.check("path_vs_det2", float(abs(acc - (ref - ref0))), sc.tol("tau_path", 1e-5))
    if closed:
        out.check("loop_integral", float(abs(acc)), sc.tol("loop", 1e-5))
    J = len(path[0])
    out.tables["path"] = (["vertex"] + [f"t{j + 1}" for j in range(J)] + ["log_tau", "log_det2"], rows)


def cmd_miwa_check(sc: Scenario, out: Outcome):
    st = _state(sc)
    zeta = sc.complex_value("zeta", 3.0)
    rows = []
    for sign in sc.get("signs", ["-", "+"]):
        conn = connection_check(st, zeta, sign)
        lhs, rhs = tau_ratio(st, zeta, sign)
        disc = float(abs(lhs - rhs) / max(abs(rhs), 1e-300))
        out.values[f"connection_{sign}"] = conn
        out.values[f"tau_ratio_{sign}"] = {"determinant": lhs, "gamma": rhs, "discrepancy": disc}
        out.check(f"connection{sign}", conn, sc.tol("connection", 1e-6))
        out.check(f"tau_ratio{sign}", disc, sc.tol("tau_ratio", 1e-4))
        rows.append([sign, conn, lhs, rhs, disc])
    comp = tau_ratio_composition(st, zeta)
    out.values["composition"] = comp
    out.check("composition", comp["composition_error"], sc.tol("composition", 1e-6))
    out.check("field_roundtrip", comp["field_roundtrip"], sc.tol("composition", 1e-6))
    out.tables["miwa"] = (["sign", "connection", "ratio_det", "ratio_gamma", "discrepancy"], rows)


def cmd_hirota_check(sc: Scenario, out: Outcome):
    st = _state(sc)
    t = TimeVector(sc.times("t", (0.1,)))
    s = TimeVector(sc.times("s", (0.05, 0.02)))
    radii = [float(r) for r in sc.get("radii", [8.0, 16.0])]
    n = int(sc.get("contour_points", 256))
    vals = [hirota_residue(st.M0, st.grid, t, s, R, n) for R in radii]
    out.values.update(radii=radii, residues=vals)
    out.check("hirota_magnitude", float(abs(vals[0])), sc.tol("hirota", 1e-6))
    if len(vals) > 1:
        factor = float(abs(vals[0]) / max(abs(vals[1]), 1e-300))
        out.values["decay_factor"] = factor
        out.check("hirota_decay", factor, sc.tol("hirota_decay", 3.0), ">=",
                  enabled=bool(sc.get("require_decay", True)))
    out.tables["hirota"] = (["R", "residue"], [[R, v] for R, v in zip(radii, vals)])


def cmd_kp_residual(sc: Scenario, out: Outcome):
    st = _state(sc)
    h = float(sc.get("h", 5e-2))
    r = kp_richardson(st, h)
    out.values.update(r)
    out.check("richardson_slope", r["slope"], _window(sc), "in")
    out.tables["kp"] = (["h", "residual"], [[h, r["residual_h"]], [h / 2, r["residual_h2"]]])


def _linspace(spec, default):
    spec = spec if spec is not None else default
    if isinstance(spec, (int, float)):
        return np.array([float(spec)])
    if len(spec) == 3:
        return np.linspace(float(spec[0]), float(spec[1]), int(spec[2]))
    raise ConfigError("ranges are [start, stop, count]")


def cmd_nls_solve(sc: Scenario, out: Outcome):
    base = sc.nls()
    xs = _linspace(sc.get("x_range"), [base.x, base.x, 1])
    ts = _linspace(sc.get("t_range"), [base.t, base.t, 1])
    rows = []
    worst = 0.0
    for x in xs:
        for t in ts:
            g = solve_nls(base.at(x=float(x), t=float(t)))
            psi, a = psi_extract(g)
            worst = max(worst, unimodularity_residual(g))
            rows.append([float(x), float(t), psi, abs(psi), a])
    out.values.update(points=len(rows), max_det_residual=worst)
    out.check("det_residual", worst, sc.tol("unimodularity", 1e-6))
    out.tables["psi"] = (["x", "t", "psi", "abs_psi", "a"], rows)


def cmd_nls_verify(sc: Scenario, out: Outcome):
    s = sc.nls()
    wanted = set(sc.get("checks", ["schwarz", "zero_curvature", "nls", "cmkdv", "det2_psi", "a_equation"]))
    g = solve_nls(s)
    psi, a = psi_extract(g)
    out.values.update(psi=psi, a=a, det_residual=unimodularity_residual(g))
    win = _window(sc)
    rows = []
    if "schwarz" in wanted:
        r = schwarz_residual(g)
        out.values["schwarz_residual"] = r
        out.check("schwarz", r, sc.tol("schwarz", 1e-8))
    steps = {"zero_curvature": float(sc.get("h_zc", 2e-2)), "nls": float(sc.get("h_nls", 2e-2)),
             "cmkdv": float(sc.get("h_cmkdv", 4e-2))}
    fns = {"zero_curvature": zero_curvature_residual, "nls": nls_residual, "cmkdv": cmkdv_residual}
    for key, fn in fns.items():
        if key not in wanted:
            continue
        h = steps[key]
        r1, r2 = fn(s, h), fn(s, h / 2)
        slope = richardson_slope(r1, r2)
        out.values[f"{key}_residuals"] = [r1, r2]
        out.values[f"{key}_slope"] = slope
        rows += [[key, h, r1], [key, h / 2, r2]]
        floor = sc.tol("plateau", 1e-9)
        if max(r1, r2) <= floor:
            out.check(f"{key}_plateau", max(r1, r2), floor)
        else:
            out.check(f"{key}_slope", slope, win, "in")
    if "det2_psi" in wanted:
        d = det2_psi_check(s, float(sc.get("h_det2", 1e-2)))
        out.values["det2_psi"] = d
        out.check("det2_psi", d["discrepancy"], sc.tol("det2_psi", 1e-3))
    if "a_equation" in wanted:
        r = a_equation_residual(s, float(sc.get("h_a", 1e-3)))
        out.values["a_equation_residual"] = r
        out.check("a_equation", r, sc.tol("a_equation", 1e-4))
    out.tables["fd_residuals"] = (["check", "h", "residual"], rows)


def cmd_rh_compare(sc: Scenario, out: Outcome):
    s = sc.nls()
    n = int(sc.get("segment_points", 64))
    rh = rh_reduce_ellipse(s, n)
    g = solve_nls(s)
    probes = sc.get("probes")
    if probes is None:
        k = np.arange(10)
        z = np.linspace(3.0, 10.0, 10) * np.exp(2j * np.pi * (k + 0.3) / 10)
    else:
        z = np.array([parse_complex(p) for p in probes])
    A = rh(z)
    B = evaluate_gamma(g, z)
    diff = np.linalg.norm(A - B, axis=(1, 2))
    psi2d = psi_extract(g)[0]
    rel = float(abs(rh.psi - psi2d) / max(abs(psi2d), 1e-300))
    out.values.update(max_gamma_diff=float(diff.max()), psi_contour=rh.psi, psi_area=psi2d, psi_rel_diff=rel,
                      contour_rcond=rh.rcond)
    out.check("gamma_agreement", float(diff.max()), sc.tol("rh_gamma", 1e-4))
    out.check("psi_agreement", rel, sc.tol("rh_psi", 1e-3))
    out.tables["rh_probes"] = (["z", "g12_contour", "g12_area", "diff"],
                               [[zz, a[0, 1], b[0, 1], d] for zz, a, b, d in zip(z, A, B, diff)])


HANDLERS = {
    "solve-dbar": cmd_solve_dbar,
    "det2": cmd_det2,
    "tau-path": cmd_tau_path,
    "miwa-check": cmd_miwa_check,
    "hirota-check": cmd_hirota_check,
    "kp-residual": cmd_kp_residual,
    "nls-solve": cmd_nls_solve,
    "nls-verify": cmd_nls_verify,
    "rh-compare": cmd_rh_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dbartau", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "").replace("_", " "))
        sp.add_argument("config", help="scenario file (JSON, or YAML with PyYAML)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field; dotted keys reach nested fields")
        sp.add_argument("--out", help="output directory (default: config 'output' or ./dbartau-out)")
        sp.add_argument("--quiet", action="store_true")
    return ap


def run(command: str, config_path, overrides=(), out_dir=None, quiet=True) -> tuple[int, dict]:
    """Run one subcommand; returns ``(exit code, report)``."""
    report = {"subcommand": command, "version": __version__, "backend": kernels.BACKEND}
    try:
        raw = apply_overrides(load_config(config_path), overrides)
        sc = Scenario(raw)
        report.update(scenario=sc.name, config=raw, config_hash=config_hash(raw))
        base = Path(out_dir or raw.get("output") or "dbartau-out") / sc.name / command
        report["grid"] = {"radial": sc.resolution[0], "angular": sc.resolution[1],
                          "domain": sc.solve_domain.to_dict()}
    except (ConfigError, GeometryError, FieldError) as exc:
        report.update(error=str(exc), exit_code=EXIT_CONFIG)
        if not quiet:
            print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, report
    out = Outcome()
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        HANDLERS[command](sc, out)
    except (ConfigError, GeometryError) as exc:
        report["error"] = str(exc)
        code = EXIT_CONFIG
    except FieldError as exc:
        report["error"] = str(exc)
        code = EXIT_CONFIG
    except (SolverError, MiwaSingularityError, SeriesDivergenceError, np.linalg.LinAlgError) as exc:
        report["error"] = str(exc)
        code = EXIT_SOLVER
    report["elapsed_s"] = time.perf_counter() - t0
    report["values"] = out.values
    report["checks"] = [c.as_dict() for c in out.checks]
    if code == EXIT_OK and not all(c.passed for c in out.checks if c.enabled):
        code = EXIT_TOL
    report["passed"] = code == EXIT_OK
    report["exit_code"] = code
    base.mkdir(parents=True, exist_ok=True)
    write_json(base / "report.json", report)
    for name, (cols, rows) in out.tables.items():
        write_csv(base / f"{name}.csv", cols, rows)
    report["output_dir"] = str(base)
    if not quiet:
        for c in out.checks:
            flag = "ok  " if c.passed else ("FAIL" if c.enabled else "off ")
            print(f"[{flag}] {c.name}: {c.value!r} ({c.relation} {c.tolerance!r})")
        if "error" in report:
            print(f"error: {report['error']}", file=sys.stderr)
        print(f"{command}: exit {code}, report in {base}")
    return code, report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    code, _ = run(args.command, args.config, args.overrides, args.out, args.quiet)
    return code


if __name__ == "__main__":
    sys.exit(main())
