"""Command-line entry point: configure a family, run checks, emit reports.

Reports are canonical JSON: keys sorted, floats printed with 17 significant
digits (enough to reproduce every float64 bit-exactly), no locale or hash
dependence anywhere.  Identical config and seed therefore produce
byte-identical reports except for the wall-time section.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical-domain error (nonpositive curvature, cone obstruction, frame
drift).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bounds import (
    c2bound_report,
    diam_weyl_report,
    evaluate_family_grid,
    second_deriv_report,
    weyl_report,
)
from .embedsolve import (
    IntrinsicField,
    align_rigid,
    embeddability_check,
    reconstruct,
    solve_contracted_gauss,
)
from .errors import ConvergenceError, DomainError, IntegrationError
from .surfaces import (
    Ellipsoid,
    RadialGraph,
    RoundSphere,
    ball_grid,
    epsilon_family,
    evaluate_grid,
    metric_values,
    radial_graph_bump,
    radial_graph_constant,
    radial_graph_ellipsoid,
    radial_graph_random,
)

VALID_CHECKS = ("weyl", "diam-weyl", "c2bound", "second-deriv",
                "gauss-residual", "codazzi-residual", "support-identities")
RESIDUAL_TOL = 1e-7


class ConfigError(ValueError):
    """The run configuration is invalid."""


@dataclass
class RunConfig:
    family: dict = dc_field(default_factory=lambda: {"variant": "sphere"})
    resolution: int = 9
    extent: float = 1.2
    chart: int = 0
    checks: tuple = VALID_CHECKS
    tolerances: dict = dc_field(default_factory=dict)
    seed: int = 0
    diameter: Optional[float] = None
    theta: Optional[float] = None
    h: float = 1e-2
    path_plan: tuple = (0, 1, 2)
    eps_list: tuple = (0.1, 0.05, 0.025)
    compare_truth: bool = True
    out: Optional[str] = None
    grid_dump: Optional[str] = None

    KEYS = ("family", "resolution", "extent", "chart", "checks", "tolerances",
            "seed", "diameter", "theta", "h", "path_plan", "eps_list",
            "compare_truth", "out", "grid_dump")

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{k: data[k] for k in data})
        cfg.checks = tuple(cfg.checks)
        cfg.path_plan = tuple(cfg.path_plan)
        cfg.eps_list = tuple(cfg.eps_list)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.resolution, int) or self.resolution < 5 \
                or self.resolution % 2 == 0:
            raise ConfigError("resolution must be an odd integer >= 5")
        if not 1.0 < self.extent < 1.8:
            raise ConfigError("extent must lie in (1, 1.8)")
        if self.chart not in (0, 1):
            raise ConfigError("chart must be 0 or 1")
        for name in self.checks:
            if name not in VALID_CHECKS:
                raise ConfigError(f"unknown check {name!r}; valid: "
                                  f"{', '.join(VALID_CHECKS)}")
        for name, tol in self.tolerances.items():
            if name not in VALID_CHECKS and name != "reconstruct":
                raise ConfigError(f"tolerance for unknown check {name!r}")
            if not tol > 0:
                raise ConfigError("tolerances must be positive")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.diameter is not None and not self.diameter > 0:
            raise ConfigError("diameter must be positive when given")
        if self.theta is not None and not self.theta > 0:
            raise ConfigError("theta must be positive when given")
        if not self.h > 0:
            raise ConfigError("step size h must be positive")
        if sorted(self.path_plan) != [0, 1, 2]:
            raise ConfigError("path_plan must be a permutation of (0, 1, 2)")
        if not self.eps_list or any(not e > 0 for e in self.eps_list):
            raise ConfigError("eps_list must be nonempty and positive")

    # out and grid_dump route output, they do not shape it; leaving them
    # out keeps reports byte-identical across different destinations.
    REPORT_KEYS = tuple(k for k in KEYS if k not in ("out", "grid_dump"))

    def to_dict(self):
        return {k: getattr(self, k) for k in self.REPORT_KEYS}

    def build_family(self):
        spec = dict(self.family)
        variant = spec.pop("variant", "sphere")
        try:
            if variant == "sphere":
                fam = RoundSphere(spec.pop("radius", 1.0),
                                  dim=spec.pop("dim", 3))
            elif variant == "ellipsoid":
                fam = Ellipsoid(spec.pop("semi_axes"))
            elif variant == "radial_graph":
                kind = spec.pop("kind", "constant")
                if kind == "constant":
                    fam = radial_graph_constant(spec.pop("value", 1.0))
                elif kind == "ellipsoid":
                    fam = radial_graph_ellipsoid(spec.pop("semi_axes"))
                elif kind == "bump":
                    fam = radial_graph_bump(spec.pop("amplitude", 0.1))
                elif kind == "random":
                    fam = radial_graph_random(spec.pop("seed", self.seed),
                                              spec.pop("amplitude", 0.05))
                else:
                    raise ConfigError(f"unknown radial_graph kind {kind!r}")
            else:
                raise ConfigError(f"unknown family variant {variant!r}")
        except KeyError as exc:
            raise ConfigError(f"family spec is missing {exc}") from None
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad family parameters: {exc}") from None
        if spec:
            raise ConfigError(f"unused family keys: {sorted(spec)}")
        return fam


# ------------------------------------------------------ canonical output

def _plain(obj):
    """Recursively convert numpy containers to plain python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def fmt17(x):
    """A float with 17 significant digits; parses back bit-identically."""
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(float(x), ".17g")


def canonical_json(obj, indent=0):
    """Deterministic JSON: sorted keys, fmt17 floats, two-space indent."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [f'{inner}{json.dumps(str(k))}: {canonical_json(v, indent + 1)}'
                for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(rows) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        rows = [f"{inner}{canonical_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return fmt17(obj)
    if isinstance(obj, int):
        return str(obj)
    if obj is None:
        return "null"
    return json.dumps(obj)


def _inline(obj):
    return " ".join(canonical_json(_plain(obj)).split())


def render_text(report):
    lines = [f"weylcheck {report['command']}  version {report['version']}"]
    failed = 0
    sections = report["sections"]
    for name, sec in sections.items():
        if isinstance(sec, dict) and "passed" in sec:
            status = "PASS" if sec["passed"] else "FAIL"
            failed += 0 if sec["passed"] else 1
        else:
            status = "  ok"
        detail = " ".join(
            f"{k}={fmt17(v) if isinstance(v, float) else v}"
            for k, v in sec.items()
            if isinstance(v, (int, float, str)) and k not in ("passed", "name")
        ) if isinstance(sec, dict) else str(sec)
        lines.append(f"  {name:<20} {status}  {detail}")
    lines.append(f"{len(sections)} sections, {failed} failed")
    return "\n".join(lines)


# ------------------------------------------------------------- commands

def _tol(cfg, name, default):
    return float(cfg.tolerances.get(name, default))


def _residual_section(eg, values, tol):
    values = np.asarray(values)
    idx = int(np.argmax(np.where(np.isnan(values), np.inf, values)))
    sup = float(values[idx])
    ok = bool(np.isfinite(sup) and sup <= tol)
    return {"sup": sup, "tol": tol, "passed": ok, "at": eg.location(idx)}


def cmd_verify(cfg: RunConfig):
    family = cfg.build_family()
    if family.dim < 3 and "c2bound" in cfg.checks:
        raise ConfigError("the c2bound check needs a family of dimension >= 3")
    timing = {}
    t0 = time.perf_counter()
    eg = evaluate_family_grid(family, cfg.resolution, cfg.extent)
    timing["grid"] = time.perf_counter() - t0

    sections = {}
    for check in cfg.checks:
        t0 = time.perf_counter()
        if check == "weyl":
            sections[check] = weyl_report(
                eg, cfg.tolerances.get("weyl")).to_dict()
        elif check == "diam-weyl":
            sections[check] = diam_weyl_report(
                eg, d=cfg.diameter, tol=cfg.tolerances.get("diam-weyl")).to_dict()
        elif check == "c2bound":
            sections[check] = c2bound_report(
                eg, cfg.tolerances.get("c2bound")).to_dict()
        elif check == "second-deriv":
            sections[check] = second_deriv_report(
                eg, cfg.tolerances.get("second-deriv")).to_dict()
        elif check == "gauss-residual":
            vals = np.concatenate([sd.gauss_residual() for _, sd in eg.parts])
            sections[check] = _residual_section(
                eg, vals, _tol(cfg, check, RESIDUAL_TOL))
        elif check == "codazzi-residual":
            vals = np.concatenate([sd.codazzi_residual() for _, sd in eg.parts])
            sections[check] = _residual_section(
                eg, vals, _tol(cfg, check, RESIDUAL_TOL))
        elif check == "support-identities":
            parts = [sd.support_identities() for _, sd in eg.parts]
            tol = _tol(cfg, check, RESIDUAL_TOL)
            subs = {}
            for k, label in enumerate(("hessian", "gradient", "curvature")):
                subs[label] = _residual_section(
                    eg, np.concatenate([p[k] for p in parts]), tol)
            sections[check] = {
                "passed": all(s["passed"] for s in subs.values()), **subs}
        timing[check] = time.perf_counter() - t0

    if cfg.grid_dump:
        _write_grid_dump(eg, cfg.grid_dump)
    return sections, timing


def _write_grid_dump(eg, path):
    cols = eg.table()
    n = eg.coords.shape[1]
    header = ["chart"] + [f"x{i+1}" for i in range(n)] + \
        ["H", "R", "lap_R", "chi_norm", "gauss_residual", "codazzi_residual"]
    rows = [("\t").join(header)]
    for k in range(eg.num_points):
        cells = [str(int(cols["chart"][k]))]
        cells += [format(c, ".17g") for c in eg.coords[k]]
        for key in header[n + 1:]:
            cells.append(format(float(cols[key][k]), ".17g"))
        rows.append("\t".join(cells))
    Path(path).write_text("\n".join(rows) + "\n")


def cmd_solve(cfg: RunConfig):
    family = cfg.build_family()
    if family.dim != 3:
        raise ConfigError("this command needs a three-dimensional family")
    timing = {}
    pts = ball_grid(cfg.resolution, cfg.extent, 3)
    t0 = time.perf_counter()
    field = IntrinsicField.from_family(family, cfg.chart, pts)
    chi = solve_contracted_gauss(field)
    timing["solve"] = time.perf_counter() - t0
    sections = {"solve": {
        "points": int(pts.shape[0]),
        "max_residual": float(chi.residuals.max()),
        "min_eps_gap": float(chi.gaps.min()),
        "min_principal": float(chi.principal_min().min()),
        "passed": bool(chi.residuals.max() <= 1e-9),
    }}

    t0 = time.perf_counter()
    verdict = embeddability_check(field, chi, theta=cfg.theta)
    timing["embeddability"] = time.perf_counter() - t0
    sections["embeddability"] = {"passed": verdict.embeddable,
                                 **verdict.to_dict()}

    if cfg.compare_truth:
        t0 = time.perf_counter()
        truth = evaluate_grid(family, cfg.chart, pts).chi
        rel = float(np.abs(chi.values - truth).max() / np.abs(truth).max())
        sections["truth"] = {"chi_rel_error": rel, "passed": bool(rel <= 1e-6)}
        timing["truth"] = time.perf_counter() - t0
    return sections, timing


def cmd_reconstruct(cfg: RunConfig):
    family = cfg.build_family()
    if family.dim != 3:
        raise ConfigError("this command needs a three-dimensional family")
    timing = {}
    pts = ball_grid(cfg.resolution, cfg.extent, 3)
    t0 = time.perf_counter()
    field = IntrinsicField.from_family(family, cfg.chart, pts)
    chi = solve_contracted_gauss(field)
    timing["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rec = reconstruct(field, chi, path_plan=cfg.path_plan, h=cfg.h)
    timing["reconstruct"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    truth = evaluate_grid(family, cfg.chart, pts).X
    _, _, rms = align_rigid(rec.X, truth)
    timing["align"] = time.perf_counter() - t0
    tol = _tol(cfg, "reconstruct", 1e-4)
    sections = {"reconstruction": {
        "nodes": int(rec.X.shape[0]),
        "h": rec.h,
        "plan": list(rec.plan),
        "isometry_sup": rec.isometry_sup,
        "holonomy_sup": rec.holonomy_sup,
        "rms_vs_truth": rms,
        "tol": tol,
        "passed": bool(rms <= tol),
    }}
    return sections, timing


def cmd_family(cfg: RunConfig):
    family = cfg.build_family()
    if family.dim != 3:
        raise ConfigError("this command needs a three-dimensional family")
    if not isinstance(family, RadialGraph):
        raise ConfigError("the family command needs a radial_graph family")
    timing = {}
    pts = ball_grid(cfg.resolution, cfg.extent, 3)
    g_base = metric_values(family, cfg.chart, pts)
    rows = []
    t0 = time.perf_counter()
    for eps in cfg.eps_list:
        fam_eps = epsilon_family(family, float(eps))
        sd = evaluate_grid(fam_eps, cfg.chart, pts)
        g_eps = metric_values(fam_eps, cfg.chart, pts)
        rows.append({
            "eps": float(eps),
            "min_chi_eigenvalue": float(sd.principal_curvatures.min()),
            "metric_deviation": float(np.abs(g_eps - g_base).max()),
        })
    timing["family"] = time.perf_counter() - t0
    devs = [r["metric_deviation"] for r in rows]
    ordered = sorted(range(len(rows)), key=lambda i: -rows[i]["eps"])
    monotone = all(devs[ordered[i]] > devs[ordered[i + 1]]
                   for i in range(len(ordered) - 1))
    convex = all(r["min_chi_eigenvalue"] > 0 for r in rows)
    sections = {"family": {
        "rows": rows,
        "deviation_monotone": bool(monotone),
        "all_convex": bool(convex),
        "passed": bool(monotone and convex),
    }}
    return sections, timing


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve,
            "reconstruct": cmd_reconstruct, "family": cmd_family}


# ----------------------------------------------------------- entry point

def build_report(command, cfg, sections, timing):
    return _plain({
        "schema": 1,
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "sections": sections,
        "timing": timing,
    })


def run(command, cfg: RunConfig):
    sections, timing = COMMANDS[command](cfg)
    report = build_report(command, cfg, sections, timing)
    failed = any(isinstance(s, dict) and s.get("passed") is False
                 for s in report["sections"].values())
    return report, (1 if failed else 0)


def _parser():
    parser = argparse.ArgumentParser(
        prog="weylcheck",
        description="curvature-bound verification and embedding "
                    "reconstruction for convex hypersurface families")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="write the report as canonical JSON here")
        p.add_argument("--seed", type=int)
        p.add_argument("--resolution", type=int)
        p.add_argument("--checks", help="comma-separated check names")
        p.add_argument("--quiet", action="store_true")
    return parser


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.resolution is not None:
        data["resolution"] = args.resolution
    if args.checks is not None:
        data["checks"] = [c.strip() for c in args.checks.split(",") if c.strip()]
    if args.out is not None:
        data["out"] = args.out
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        report, code = run(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, IntegrationError, ConvergenceError) as exc:
        print(f"numerical-domain error: {exc}", file=sys.stderr)
        return 3
    text = canonical_json(report) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text)
    if not args.quiet:
        print(render_text(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
