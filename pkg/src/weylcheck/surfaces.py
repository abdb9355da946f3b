"""Convex hypersurfaces in R^{n+1} over two stereographic charts (n = 2, 3).

Families are maps from the unit n-sphere into R^{n+1}: round spheres,
ellipsoids, and radial graphs X = rho(xhat) * xhat with rho = 1/u.  Every
field at a chart point is produced by exact jet arithmetic: the chart map
runs at order 5 so the induced metric carries order 4, enough for the
scalar-curvature Laplacian downstream; the second fundamental form carries
order 2 so its covariant derivatives stay exact.

Chart 0 maps coords xi to (2 xi, 1 - |xi|^2)/(1 + |xi|^2), chart 1 flips the
last component; the transition between them is the coordinate inversion
xi -> xi/|xi|^2.  Grids stay inside |xi| <= 1.2 while charts remain valid up
to |xi| <= 1.8, so nothing is ever evaluated near a chart boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError
from .intrinsic import MetricJet, covariant_antisym, curvature
from .jets import Jet

CHART_RADIUS = 1.8
GRID_EXTENT = 1.2
AMBIENT_ORDER = 5


@dataclass(frozen=True)
class ChartPoint:
    chart: int
    coords: tuple

    def __post_init__(self):
        if self.chart not in (0, 1):
            raise ValueError("chart must be 0 or 1")
        if math.hypot(*self.coords) > CHART_RADIUS:
            raise DomainError(f"coords {self.coords} outside chart radius {CHART_RADIUS}")


def transition_coords(coords):
    """Coordinates of the same sphere point in the opposite chart."""
    coords = np.asarray(coords, dtype=float)
    r2 = np.sum(coords**2, axis=-1, keepdims=True)
    return coords / r2


def unit_sphere_jets(chart, pts, order=AMBIENT_ORDER):
    """Jets of the chart parametrization of the unit sphere, one per
    ambient component."""
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[-1]
    if np.any(np.linalg.norm(pts, axis=-1) > CHART_RADIUS):
        raise DomainError("points outside chart radius")
    xs = [Jet.variable(pts[..., i], i, n, order) for i in range(n)]
    w = 1.0
    for x in xs:
        w = x * x + w
    winv = w.reciprocal()
    out = [2.0 * (x * winv) for x in xs]
    last = (2.0 * winv) - 1.0  # (1 - |xi|^2)/(1 + |xi|^2)
    if chart == 1:
        last = -1.0 * last
    out.append(last)
    return out


class RoundSphere:
    def __init__(self, radius, dim=3):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.dim = dim

    def ambient_jets(self, chart, pts, order=AMBIENT_ORDER):
        return [self.radius * c for c in unit_sphere_jets(chart, pts, order)]

    def __repr__(self):
        return f"RoundSphere(radius={self.radius}, dim={self.dim})"


class Ellipsoid:
    """Axis-aligned ellipsoid, parametrized by scaling the unit sphere."""

    def __init__(self, semi_axes):
        axes = tuple(float(a) for a in semi_axes)
        if any(a <= 0 for a in axes):
            raise ValueError("semi-axes must be positive")
        self.semi_axes = axes
        self.dim = len(axes) - 1

    def ambient_jets(self, chart, pts, order=AMBIENT_ORDER):
        comps = unit_sphere_jets(chart, pts, order)
        return [a * c for a, c in zip(self.semi_axes, comps)]

    def __repr__(self):
        return f"Ellipsoid{self.semi_axes}"


class RadialGraph:
    """X = xhat / u(xhat) for a positive scalar u on the sphere.

    u is a callable taking the list of n+1 ambient-component jets and
    returning a jet; it must be smooth and positive, with u*gamma + Hess u
    positive semi-definite for the graph to be convex.
    """

    def __init__(self, u: Callable, dim=3):
        self.u = u
        self.dim = dim

    def ambient_jets(self, chart, pts, order=AMBIENT_ORDER):
        comps = unit_sphere_jets(chart, pts, order)
        uj = self.u(comps)
        if np.any(uj.value <= 0.0):
            raise DomainError("radial graph function u must stay positive")
        rho = uj.reciprocal()
        return [rho * c for c in comps]

    def __repr__(self):
        return f"RadialGraph(dim={self.dim})"


def epsilon_family(base: RadialGraph, eps: float) -> RadialGraph:
    """The graph of u + eps; adding a constant shifts every eigenvalue of
    the convexity form by eps, so the result is strictly convex."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not isinstance(base, RadialGraph):
        raise TypeError("epsilon families are defined for radial graphs")
    return RadialGraph(lambda comps: base.u(comps) + eps, dim=base.dim)


# named graph constructors, usable from config files


def radial_graph_constant(c=1.0, dim=3):
    if c <= 0:
        raise ValueError("constant must be positive")
    return RadialGraph(lambda comps: Jet.constant(
        np.full(comps[0].batch_shape, c), comps[0].nvars, comps[0].order), dim=dim)


def radial_graph_ellipsoid(semi_axes):
    axes = tuple(float(a) for a in semi_axes)

    def u(comps):
        s = None
        for a, cjet in zip(axes, comps):
            t = (cjet * cjet) * (1.0 / a**2)
            s = t if s is None else s + t
        return s.sqrt()

    return RadialGraph(u, dim=len(axes) - 1)


def radial_graph_bump(amp=0.1, dim=3):
    """u = 1 + amp * (last ambient coordinate)^2; a small equatorial bulge."""
    if not 0 <= amp < 0.5:
        raise ValueError("bump amplitude out of the convexity-safe range")
    return RadialGraph(lambda comps: 1.0 + amp * (comps[-1] * comps[-1]), dim=dim)


def radial_graph_random(seed, amp=0.05, dim=3):
    """u = 1 + amp * (xhat^T Q xhat) for a seeded random symmetric Q with
    unit-bounded entries; small amp keeps the graph convex."""
    if not 0 <= amp < 0.2:
        raise ValueError("amplitude out of the convexity-safe range")
    rng = np.random.default_rng(seed)
    q = rng.uniform(-1.0, 1.0, size=(dim + 1, dim + 1))
    q = (q + q.T) / 2.0

    def u(comps):
        s = None
        for a in range(dim + 1):
            for b in range(a, dim + 1):
                coef = q[a, b] if a == b else 2.0 * q[a, b]
                t = (comps[a] * comps[b]) * coef
                s = t if s is None else s + t
        return 1.0 + amp * s

    return RadialGraph(u, dim=dim)


# --------------------------------------------------------------- evaluation


def _det_jets(rows):
    """Determinant of a small square matrix of jets (size 2 or 3)."""
    k = len(rows)
    if k == 1:
        return rows[0][0]
    if k == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    if k == 3:
        return (rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
                - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
                + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0]))
    raise ValueError("determinant supported for sizes 1..3")


class SurfaceData:
    """Fields of a family over a batch of chart points.

    The scalar entries are arrays over the batch; metric is a MetricJet of
    order 4 and chi_jet a Jet of order 2 whose trailing batch axes are the
    (n, n) tensor slots.
    """

    def __init__(self, family, chart, coords, X, N, metric, chi_jet, rho_jet, support):
        self.family = family
        self.chart = chart
        self.coords = coords
        self.X = X
        self.N = N
        self.metric = metric
        self.chi_jet = chi_jet
        self.rho_jet = rho_jet
        self.support = support
        self._curv = None

    # -- plain-value views ------------------------------------------------

    @property
    def n(self):
        return self.metric.n

    @property
    def g(self):
        return self.metric.values()

    @property
    def chi(self):
        return self.chi_jet.value

    @property
    def rho(self):
        return self.rho_jet.value

    def _chi_frame(self):
        chol = np.linalg.cholesky(self.g)
        inv = np.linalg.inv(chol)
        return inv @ self.chi @ np.swapaxes(inv, -1, -2)

    @property
    def H(self):
        return np.trace(self._chi_frame(), axis1=-2, axis2=-1)

    @property
    def chi_norm(self):
        cf = self._chi_frame()
        return np.sqrt(np.einsum("...ij,...ij->...", cf, cf))

    @property
    def principal_curvatures(self):
        return np.linalg.eigvalsh(self._chi_frame())

    @property
    def scalar_gauss(self):
        """Scalar curvature by the extrinsic route H^2 - tr(chi^2)."""
        cf = self._chi_frame()
        h = np.trace(cf, axis1=-2, axis2=-1)
        return h**2 - np.einsum("...ij,...ij->...", cf, cf)

    def curvature(self):
        if self._curv is None:
            self._curv = curvature(self.metric)
        return self._curv

    # -- identity residuals ------------------------------------------------

    def gauss_residual(self):
        """Max-norm of riemann - (chi_ik chi_jl - chi_il chi_jk) per point."""
        chi = self.chi
        want = np.einsum("...ik,...jl->...ijkl", chi, chi) \
            - np.einsum("...il,...jk->...ijkl", chi, chi)
        diff = self.curvature().riemann - want
        return np.abs(diff).max(axis=(-4, -3, -2, -1))

    def codazzi_residual(self):
        """Max-norm of the antisymmetrized covariant derivative of chi."""
        out = covariant_antisym(self.metric, self.chi_jet.truncate(1))
        return np.abs(out).max(axis=(-3, -2, -1))

    def support_identities(self):
        """Residuals of the three support-function identities.

        Returns (r1, r2, r3) arrays: the Hessian identity for rho, the
        gradient identity 2 rho = |grad rho|^2 + (X.N)^2, and the sigma_2
        comparison sqrt(sigma2(lam)) = (X.N) sqrt(R/2) for lam the
        eigenvalues of g - Hess rho relative to g.  Points with R <= 0 get
        NaN in r3 (the comparison involves sqrt(R)); where R > 0 the lam
        must lie in the sigma_2 ellipticity cone, else DomainError.
        """
        n = self.n
        mj = self.metric
        gam = mj.christoffel_values()
        grad = np.stack([self.rho_jet.partial(tuple(int(k == v) for k in range(n)))
                         for v in range(n)], -1)
        hess = np.empty(self.rho.shape + (n, n))
        for i in range(n):
            for j in range(i, n):
                gmi = tuple(int(k == i) + int(k == j) for k in range(n))
                hess[..., i, j] = hess[..., j, i] = self.rho_jet.partial(gmi)
        hess_cov = hess - np.einsum("...kij,...k->...ij", gam, grad)

        g = self.g
        ginv = np.linalg.inv(g)
        r1 = np.abs(hess_cov - g + self.support[..., None, None] * self.chi
                    ).max(axis=(-2, -1))
        grad_sq = np.einsum("...ij,...i,...j->...", ginv, grad, grad)
        r2 = np.abs(2.0 * self.rho - grad_sq - self.support**2)

        chol = np.linalg.cholesky(g)
        inv = np.linalg.inv(chol)
        a = inv @ (g - hess_cov) @ np.swapaxes(inv, -1, -2)
        lam = np.linalg.eigvalsh(a)
        s1 = lam.sum(axis=-1)
        s2 = (s1**2 - (lam**2).sum(axis=-1)) / 2.0
        big_r = self.curvature().scalar
        pos = big_r > 0
        if np.any(pos & ((s1 <= 0) | (s2 <= 0))):
            raise DomainError("eigenvalues left the sigma_2 ellipticity cone")
        r3 = np.where(
            pos,
            np.abs(np.sqrt(np.where(pos, s2, 1.0))
                   - self.support * np.sqrt(np.where(pos, big_r, 1.0) / 2.0)),
            np.nan,
        )
        return r1, r2, r3


def evaluate_grid(family, chart, pts) -> SurfaceData:
    """Evaluate every surface field of the family at chart points (.., n)."""
    pts = np.asarray(pts, dtype=float)
    n = family.dim
    if pts.shape[-1] != n:
        raise ValueError(f"points must have {n} coordinates")
    amb = family.ambient_jets(chart, pts, order=AMBIENT_ORDER)

    tangent = [[x.derivative(i) for x in amb] for i in range(n)]  # order 4
    g_entries = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            acc = None
            for a in range(len(amb)):
                t = tangent[i][a] * tangent[j][a]
                acc = t if acc is None else acc + t
            g_entries[i][j] = g_entries[j][i] = acc
    metric = MetricJet(g_entries)

    # normal: generalized cross product of the tangent rows, order 2
    rows = [[e.truncate(2) for e in row] for row in tangent]
    raw = []
    for a in range(n + 1):
        minor = [[rows[i][b] for b in range(n + 1) if b != a] for i in range(n)]
        d = _det_jets(minor)
        raw.append(d if a % 2 == 0 else -1.0 * d)
    nrm2 = None
    for c in raw:
        t = c * c
        nrm2 = t if nrm2 is None else nrm2 + t
    scale = nrm2.sqrt().reciprocal()
    normal = [c * scale for c in raw]
    xdotn = sum((amb[a].value * normal[a].value for a in range(n + 1)))
    sign = np.where(xdotn >= 0, 1.0, -1.0)
    normal = [c * sign for c in normal]

    second = [[[x.derivative(i).derivative(j).truncate(2) for x in amb]
               for j in range(i, n)] for i in range(n)]
    chi_entries = [[None] * n for _ in range(n)]
    for i in range(n):
        for jj, j in enumerate(range(i, n)):
            acc = None
            for a in range(n + 1):
                t = second[i][jj][a] * normal[a]
                acc = t if acc is None else acc + t
            chi_entries[i][j] = chi_entries[j][i] = -1.0 * acc
    chi_jet = Jet(n, 2, np.stack(
        [np.stack([e.coeffs for e in row], axis=-2) for row in chi_entries],
        axis=-3,
    ))

    rho = None
    for x in amb:
        t = x.truncate(2)
        t = t * t
        rho = t if rho is None else rho + t
    rho = 0.5 * rho

    x_vals = np.stack([x.value for x in amb], axis=-1)
    n_vals = np.stack([c.value for c in normal], axis=-1)
    support = np.einsum("...a,...a->...", x_vals, n_vals)
    return SurfaceData(family, chart, pts, x_vals, n_vals, metric, chi_jet,
                       rho, support)


def evaluate(family, p: ChartPoint) -> SurfaceData:
    return evaluate_grid(family, p.chart, np.asarray(p.coords, dtype=float))


def metric_values(family, chart, pts):
    """Fast induced-metric values (.., n, n) without high-order jets."""
    pts = np.asarray(pts, dtype=float)
    n = family.dim
    amb = family.ambient_jets(chart, pts, order=1)
    e = np.stack([np.stack([x.coefficient(tuple(int(k == i) for k in range(n)))
                            for x in amb], axis=-1) for i in range(n)], axis=-2)
    return np.einsum("...ia,...ja->...ij", e, e)


def metric_fn(family):
    """Adapter for the geodesic-graph builder."""
    return lambda chart, pts: metric_values(family, chart, pts)


# ----------------------------------------------------- alternate chi route


def radial_graph_forms(family: RadialGraph, chart, pts):
    """Metric and second fundamental form of a radial graph by the graph
    formulas instead of the ambient pipeline.

    g = rho^2 gamma + d rho (x) d rho with coordinate partials of rho, and
    chi = (u gamma + Hess_gamma u) / (u sqrt(u^2 + |grad u|_gamma^2)), with
    the Hessian and gradient taken in the round unit-sphere metric gamma.
    Returns (g values, chi values) for cross-checking evaluate_grid.
    """
    pts = np.asarray(pts, dtype=float)
    n = family.dim
    comps = unit_sphere_jets(chart, pts, order=4)
    uj = family.u(comps)
    rho = uj.reciprocal()

    xs = [Jet.variable(pts[..., i], i, n, 4) for i in range(n)]
    s = None
    for x in xs:
        t = x * x
        s = t if s is None else s + t
    phi = 2.0 * (1.0 + s).reciprocal()
    p2 = phi * phi
    zero = Jet.constant(np.zeros(pts.shape[:-1]), n, 4)
    gamma = MetricJet([[p2 if i == j else zero for j in range(n)] for i in range(n)])

    gamma_vals = gamma.values()
    drho = np.stack([rho.partial(tuple(int(k == v) for k in range(n)))
                     for v in range(n)], -1)
    g_vals = rho.value[..., None, None] ** 2 * gamma_vals \
        + np.einsum("...i,...j->...ij", drho, drho)

    chr_vals = gamma.christoffel_values()
    du = np.stack([uj.partial(tuple(int(k == v) for k in range(n)))
                   for v in range(n)], -1)
    hess = np.empty(pts.shape[:-1] + (n, n))
    for i in range(n):
        for j in range(i, n):
            gmi = tuple(int(k == i) + int(k == j) for k in range(n))
            hess[..., i, j] = hess[..., j, i] = uj.partial(gmi)
    hess_cov = hess - np.einsum("...kij,...k->...ij", chr_vals, du)

    grad_sq = np.einsum("...ij,...i,...j->...", np.linalg.inv(gamma_vals), du, du)
    uv = uj.value
    w = np.sqrt(uv**2 + grad_sq)
    chi_vals = (uv[..., None, None] * gamma_vals + hess_cov) / (uv * w)[..., None, None]
    return g_vals, chi_vals


# --------------------------------------------------------------- grids


def ball_grid(resolution, extent=GRID_EXTENT, n=3):
    """Lattice points of the coordinate ball |xi| <= extent, (K, n)."""
    if resolution < 5 or resolution % 2 == 0:
        raise ValueError("resolution must be odd and >= 5")
    axes = np.linspace(-extent, extent, resolution)
    pts = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return pts[np.linalg.norm(pts, axis=1) <= extent + 1e-12]


def chart_cover_grids(resolution, extent=GRID_EXTENT, n=3):
    """Grids for both charts whose union covers the sphere."""
    pts = ball_grid(resolution, extent, n)
    return [(0, pts), (1, pts.copy())]
