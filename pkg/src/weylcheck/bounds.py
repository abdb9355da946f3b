"""Global curvature estimates evaluated over two-chart grids.

Each verifier compares the supremum of a mean-curvature quantity against a
purely intrinsic right-hand side and returns a BoundReport with both sups,
their locations, and every constant used.  Grid sups stand in for sups over
the sphere; reports carry the grid resolution so refinement studies can
confirm stability.

The diameter-weighted estimate is exposed as `diam_weyl_report`; its
constant is C = 4 (n-1)^{-2} e^{(n-1)/4}, which collapses to e^{1/2} in
dimension three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .intrinsic import build_geodesic_graph, diameter
from .surfaces import GRID_EXTENT, chart_cover_grids, evaluate_grid, metric_fn


class EvaluatedGrid:
    """A family evaluated over the two covering chart grids, flattened."""

    def __init__(self, family, resolution, extent, parts):
        self.family = family
        self.resolution = resolution
        self.extent = extent
        self.parts = parts
        self.chart_ids = np.concatenate(
            [np.full(sd.coords.shape[0], chart) for chart, sd in parts]
        )
        self.coords = np.concatenate([sd.coords for _, sd in parts])
        states = [sd.curvature() for _, sd in parts]
        self.X = np.concatenate([sd.X for _, sd in parts])
        self.N = np.concatenate([sd.N for _, sd in parts])
        self.H = np.concatenate([sd.H for _, sd in parts])
        self.chi_norm = np.concatenate([sd.chi_norm for _, sd in parts])
        self.support = np.concatenate([sd.support for _, sd in parts])
        self.scalar = np.concatenate([cs.scalar for cs in states])
        self.laplacian = np.concatenate([cs.laplacian_scalar for cs in states])
        self.ricci_norm = np.concatenate([cs.ricci_norm for cs in states])
        self.sectional_min = np.concatenate([cs.sectional_min for cs in states])
        self.sectional_max = np.concatenate([cs.sectional_max for cs in states])

    @property
    def n(self):
        return self.parts[0][1].n

    @property
    def num_points(self):
        return self.chart_ids.size

    def location(self, index):
        return {
            "chart": int(self.chart_ids[index]),
            "coords": [float(c) for c in self.coords[index]],
        }

    def table(self):
        """Per-point columns in a fixed order, for grid dumps."""
        cols = {
            "chart": self.chart_ids,
            "coords": self.coords,
            "H": self.H,
            "R": self.scalar,
            "lap_R": self.laplacian,
            "chi_norm": self.chi_norm,
            "gauss_residual": np.concatenate(
                [sd.gauss_residual() for _, sd in self.parts]
            ),
            "codazzi_residual": np.concatenate(
                [sd.codazzi_residual() for _, sd in self.parts]
            ),
        }
        return cols


def evaluate_family_grid(family, resolution, extent=GRID_EXTENT) -> EvaluatedGrid:
    parts = [
        (chart, evaluate_grid(family, chart, pts))
        for chart, pts in chart_cover_grids(resolution, extent, family.dim)
    ]
    return EvaluatedGrid(family, resolution, extent, parts)


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    tol: float
    passed: bool
    lhs_at: dict
    rhs_at: dict
    constants: dict
    resolution: int
    extent: float
    num_points: int

    @property
    def slack(self):
        return self.rhs - self.lhs

    def to_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "tol": self.tol,
            "passed": self.passed,
            "lhs_at": self.lhs_at,
            "rhs_at": self.rhs_at,
            "constants": self.constants,
            "grid": {
                "resolution": self.resolution,
                "extent": self.extent,
                "num_points": self.num_points,
            },
        }


def _default_tol(rhs):
    return 1e-7 * max(1.0, abs(rhs))


def _report(name, eg, lhs_field, lhs_idx, rhs_field, rhs_idx, constants, tol):
    lhs = float(lhs_field[lhs_idx])
    rhs = float(rhs_field[rhs_idx])
    if tol is None:
        tol = _default_tol(rhs)
    return BoundReport(
        name=name,
        lhs=lhs,
        rhs=rhs,
        tol=tol,
        passed=bool(rhs - lhs >= -tol),
        lhs_at=eg.location(lhs_idx),
        rhs_at=eg.location(rhs_idx),
        constants=constants,
        resolution=eg.resolution,
        extent=eg.extent,
        num_points=eg.num_points,
    )


def _require_positive_scalar(eg):
    bad = np.nonzero(eg.scalar <= 0)[0]
    if bad.size:
        where = eg.location(int(bad[0]))
        raise DomainError(
            f"scalar curvature {eg.scalar[bad[0]]:.6g} is not positive at "
            f"chart {where['chart']}, coords {where['coords']}"
        )


def weyl_report(eg: EvaluatedGrid, tol: Optional[float] = None) -> BoundReport:
    """sup H^2 against sup(2R - (Delta R)/R); needs R > 0 on the grid."""
    _require_positive_scalar(eg)
    lhs = eg.H**2
    rhs = 2.0 * eg.scalar - eg.laplacian / eg.scalar
    return _report("weyl", eg, lhs, int(np.argmax(lhs)), rhs, int(np.argmax(rhs)),
                   {}, tol)


def diam_weyl_report(eg: EvaluatedGrid, d: Optional[float] = None,
                     tol: Optional[float] = None, landmarks: int = 64) -> BoundReport:
    """sup H^2 against C d^2 sup(2R^2 - Delta R + (n-1)^2 R / (64 d^2)).

    d may be passed directly (exact diameters in tests); otherwise it is
    estimated from the shortest-path graph at the grid's own resolution.
    """
    n = eg.n
    d_source = "provided"
    if d is None:
        gg = build_geodesic_graph(metric_fn(eg.family), n, eg.resolution, eg.extent)
        d = diameter(gg, landmarks=landmarks).value
        d_source = "graph"
    big_c = 4.0 * (n - 1) ** (-2) * math.exp((n - 1) / 4.0)
    lhs = eg.H**2
    inner = 2.0 * eg.scalar**2 - eg.laplacian \
        + (n - 1) ** 2 * eg.scalar / (64.0 * d**2)
    rhs = big_c * d**2 * inner
    constants = {"C": big_c, "d": float(d), "d_source": d_source}
    return _report("diam-weyl", eg, lhs, int(np.argmax(lhs)), rhs,
                   int(np.argmax(rhs)), constants, tol)


def c2bound_report(eg: EvaluatedGrid, tol: Optional[float] = None) -> BoundReport:
    """sup ||chi|| against C_n Lambda kappa^{-1/2} for n >= 3."""
    n = eg.n
    if n < 3:
        raise ValueError("the second-derivative estimate needs dimension >= 3")
    kappa = float(eg.sectional_min.min())
    if kappa <= 0:
        raise DomainError(f"minimum sectional curvature {kappa:.6g} is not positive")
    lam = float(eg.ricci_norm.max())
    c_n = n / (2.0 * math.sqrt((n - 1) * (n - 2)))
    lhs = eg.chi_norm
    rhs_val = c_n * lam / math.sqrt(kappa)
    rhs = np.full_like(lhs, rhs_val)
    constants = {
        "C_n": c_n,
        "Lambda": lam,
        "kappa": kappa,
    }
    return _report("c2bound", eg, lhs, int(np.argmax(lhs)), rhs,
                   int(np.argmax(eg.ricci_norm)), constants, tol)


def second_deriv_report(eg: EvaluatedGrid, tol: Optional[float] = None) -> BoundReport:
    """sup chi_ij chi^{ij} against sup H^2, with the scalar-curvature
    comparison recorded when R > 0 everywhere."""
    lhs = eg.chi_norm**2
    rhs = eg.H**2
    constants = {}
    extra_ok = True
    if np.all(eg.scalar > 0):
        wr = weyl_report(eg)
        constants["weyl_rhs"] = wr.rhs
        extra_ok = float(lhs.max()) <= wr.rhs + (tol if tol is not None
                                                 else _default_tol(wr.rhs))
    rep = _report("second-deriv", eg, lhs, int(np.argmax(lhs)), rhs,
                  int(np.argmax(rhs)), constants, tol)
    rep.passed = bool(rep.passed and extra_ok)
    return rep


def support_floor(eg: EvaluatedGrid, x0=None) -> float:
    """min over the grid of (X - X0).N; X0 defaults to the grid centroid.

    Positive exactly when X0 sits inside the convex body, so a nonpositive
    floor raises rather than returning.
    """
    if x0 is None:
        x0 = eg.X.mean(axis=0)
    x0 = np.asarray(x0, dtype=float)
    vals = np.einsum("ka,ka->k", eg.X - x0, eg.N)
    floor = float(vals.min())
    if floor <= 0:
        where = eg.location(int(np.argmin(vals)))
        raise DomainError(
            f"support floor {floor:.6g} is not positive; base point {x0.tolist()} "
            f"is outside the body (worst point: chart {where['chart']}, "
            f"coords {where['coords']})"
        )
    return floor
