"""Pointwise inversion of the contracted Gauss relation, the Codazzi
integrability gate, and reconstruction of the embedding from frame ODEs.

The solver works per point: reduce Ricci to a g-orthonormal frame, invert
the eigenvalue system of A -> tr(A)A - A^2 in closed form (n = 3), push the
result back to coordinates.  First derivatives of chi come from the
linearization of that map fed with exact jet derivatives of g and Ricci, so
the Codazzi residual carries no grid-differencing noise.

Reconstruction integrates X_{;ij} = -chi_ij N and N_i = chi_i^j X_{;j}
along coordinate lines with classical RK4, filling the chart ball in a
fixed axis-ascending sweep; a second fill in the reversed order measures
holonomy, the path dependence that appears exactly when chi fails Codazzi.
"""

from __future__ import annotations

import dataclasses
import warnings
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .errors import ConvergenceError, DomainError, IntegrationError, ObstructionError
from .intrinsic import MetricJet, covariant_antisym, curvature
from .jets import Jet
from .surfaces import (
    GRID_EXTENT,
    Ellipsoid,
    ball_grid,
    radial_graph_bump,
    radial_graph_random,
)

SOLVE_RESIDUAL_LIMIT = 1e-9


def metric_jets(family, chart, pts, order=4) -> MetricJet:
    """Induced-metric jets of the family at chart points, any order >= 1."""
    pts = np.asarray(pts, dtype=float)
    n = family.dim
    amb = family.ambient_jets(chart, pts, order=order + 1)
    tangent = [[x.derivative(i) for x in amb] for i in range(n)]
    entries = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            acc = None
            for a in range(n + 1):
                t = tangent[i][a] * tangent[j][a]
                acc = t if acc is None else acc + t
            entries[i][j] = entries[j][i] = acc
    return MetricJet(entries)


class IntrinsicField:
    """Metric jets plus Ricci jets over one chart grid.

    Ricci is always derived from the metric's own curvature, so the two are
    consistent by construction; an optional perturbation (jet-valued
    callable of the coordinates) is added on top to model data that no
    embedding produced.  family is kept when known: it makes the field
    evaluable between grid nodes, which reconstruction needs.
    """

    def __init__(self, chart, coords, metric, ricci_jet, family=None,
                 perturbation=None):
        self.chart = chart
        self.coords = np.asarray(coords, dtype=float)
        self.metric = metric
        self.ricci_jet = ricci_jet
        self.family = family
        self.perturbation = perturbation
        if self.coords.shape[-1] != metric.n:
            raise ValueError("coordinate width does not match the metric")

    @property
    def n(self):
        return self.metric.n

    @property
    def ricci(self):
        return self.ricci_jet.value

    def g(self):
        return self.metric.values()

    @classmethod
    def from_metric(cls, metric, chart, coords, family=None, perturbation=None):
        cs = curvature(metric)
        rj = cs.ricci_jet
        if perturbation is not None:
            rj = rj + perturbation(coords, rj.order)
        return cls(chart, coords, metric, rj, family=family,
                   perturbation=perturbation)

    @classmethod
    def from_family(cls, family, chart, pts, order=4, perturbation=None):
        mj = metric_jets(family, chart, pts, order=order)
        return cls.from_metric(mj, chart, pts, family=family,
                               perturbation=perturbation)

    @classmethod
    def from_arrays(cls, chart, coords, metric_coeffs):
        """Rebuild a field from stored metric jet coefficients."""
        mj = MetricJet.from_coeff_array(np.asarray(metric_coeffs, float), nvars=3)
        return cls.from_metric(mj, chart, coords)

    def perturbed(self, perturbation):
        return IntrinsicField.from_metric(self.metric, self.chart, self.coords,
                                          family=self.family,
                                          perturbation=perturbation)

    def location(self, index):
        return {"chart": self.chart,
                "coords": [float(c) for c in self.coords[index]]}

    def grid_resolution(self):
        """Node count per axis, inferred from the first coordinate column."""
        return int(np.unique(np.round(self.coords[..., 0], 12)).size)


def diag_ramp_perturbation(scale=0.05, slopes=(0.5, -0.3, 0.4)):
    """Position-dependent diagonal Ricci perturbation, jet-valued.

    Small scales keep the input inside the solvable cone while breaking the
    Codazzi relation, which is what the negative-control tests need.
    """
    def pert(pts, order):
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[-1]
        val = np.zeros(pts.shape[:-1] + (n, n))
        grad = np.zeros(pts.shape[:-1] + (n, n, n))
        for i in range(n):
            val[..., i, i] = scale * (1.0 + slopes[i % len(slopes)] * pts[..., i])
            grad[..., i, i, i] = scale * slopes[i % len(slopes)]
        return Jet.linear(val, grad, n, order=max(order, 1))
    return pert


# ------------------------------------------------------------- the solver

def _frame_chi(g, ric):
    """Closed-form SPD solution per point, n = 3.

    Returns (chi, frame_chi, frame_ric, gaps); gaps is min_i(sum mu - 2 mu_i)
    per point, nonpositive where the input leaves the solvable cone.
    """
    chol = np.linalg.cholesky(g)
    inv = np.linalg.inv(chol)
    ric_f = inv @ ric @ np.swapaxes(inv, -1, -2)
    ric_f = 0.5 * (ric_f + np.swapaxes(ric_f, -1, -2))
    mu, q = np.linalg.eigh(ric_f)
    t = np.sum(mu, axis=-1, keepdims=True) - 2.0 * mu
    gaps = np.minimum(t.min(axis=-1), np.where(mu[..., 0] > 0, np.inf, 0.0))
    ok = gaps > 0
    safe_t = np.where(ok[..., None], t, 1.0)
    lam = np.sqrt(np.prod(safe_t, axis=-1, keepdims=True) / 2.0) / safe_t
    a = (q * lam[..., None, :]) @ np.swapaxes(q, -1, -2)
    chi = chol @ a @ np.swapaxes(chol, -1, -2)
    return chi, a, ric_f, gaps


def _chi_values(field, g, ric):
    chi, a, ric_f, gaps = _frame_chi(g, ric)
    bad = np.nonzero(gaps <= 0)
    if bad[0].size:
        k = int(bad[0][0])
        where = field.location(k)
        raise ObstructionError(
            f"Ricci leaves the solvable cone at chart {where['chart']}, "
            f"coords {where['coords']}: eps-gap {gaps[k]:.6g}",
            point=where, margin=float(gaps[k]),
        )
    return chi, a, ric_f, gaps


_SYM_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _sym_to_vec(m):
    return np.stack([m[..., a, b] for a, b in _SYM_PAIRS], axis=-1)


def _vec_to_sym(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    for k, (a, b) in enumerate(_SYM_PAIRS):
        out[..., a, b] = v[..., k]
        out[..., b, a] = v[..., k]
    return out


def _chi_derivatives(field, chi, ginv):
    """d chi / dx_k by linearizing tr_g(chi) chi - chi g^{-1} chi = Ric.

    The unknown D_k solves tr(g^{-1}D) chi + tau D - D g^{-1} chi
    - chi g^{-1} D = dRic - tr(dG chi) chi + chi dG chi with dG = d(g^{-1});
    the right side uses exact jet partials of g and Ricci.
    """
    n = field.n
    gjet = field.metric.as_jet()
    dg = np.stack([gjet.derivative(k).value for k in range(n)], axis=-1)
    dric = np.stack([field.ricci_jet.derivative(k).value for k in range(n)],
                    axis=-1)
    dginv = -np.einsum("...ab,...bck,...cd->...adk", ginv, dg, ginv)

    tau = np.einsum("...ab,...ba->...", ginv, chi)
    gchi = ginv @ chi

    cols = []
    for a, b in _SYM_PAIRS:
        s = np.zeros((3, 3))
        s[a, b] = s[b, a] = 1.0
        ms = np.einsum("...ab,ba->...", ginv, s)[..., None, None] * chi \
            + tau[..., None, None] * s \
            - s @ gchi - np.swapaxes(gchi, -1, -2) @ s
        cols.append(_sym_to_vec(ms))
    mmat = np.stack(cols, axis=-1)

    rhs = dric \
        - np.einsum("...abk,...ba->...k", dginv, chi)[..., None, None, :] * chi[..., None] \
        + np.einsum("...ab,...bck,...cd->...adk", chi, dginv, chi)
    rhs_vec = np.stack([_sym_to_vec(rhs[..., k]) for k in range(n)], axis=-1)
    sol = np.linalg.solve(mmat, rhs_vec)
    return np.stack([_vec_to_sym(sol[..., k]) for k in range(n)], axis=-1)


class ChiField:
    """Solver output: chi with first derivatives over the field's grid."""

    def __init__(self, field, values, d_values, frame_values, residuals, gaps):
        self.field = field
        self.values = values
        self.d_values = d_values          # (..., n, n, n), last axis = d/dx_k
        self.frame_values = frame_values
        self.residuals = residuals
        self.gaps = gaps

    @property
    def n(self):
        return self.field.n

    def as_jet(self):
        return Jet.linear(self.values, self.d_values, self.n)

    def principal_min(self):
        return np.linalg.eigvalsh(self.frame_values)[..., 0]

    def at(self, pts):
        """Re-solve at arbitrary chart points (family-backed fields only)."""
        g, _, chi = _continuous_data(self.field, pts)
        return chi


def solve_contracted_gauss(field: IntrinsicField) -> ChiField:
    """The unique SPD chi with tr_g(chi) chi - chi g^{-1} chi = Ric.

    Raises ObstructionError at the first point whose Ricci leaves the
    solvable cone, reporting its eps-gap.
    """
    g = field.g()
    ric = field.ricci
    chi, a, ric_f, gaps = _chi_values(field, g, ric)
    ginv = np.linalg.inv(g)
    tau = np.einsum("...ab,...ba->...", ginv, chi)
    res = tau[..., None, None] * chi - chi @ ginv @ chi - ric
    residuals = np.abs(res).max(axis=(-2, -1))
    worst = float(residuals.max())
    if worst > SOLVE_RESIDUAL_LIMIT:
        raise ConvergenceError("solver residual above the per-point limit",
                               residual=worst)
    d_chi = _chi_derivatives(field, chi, ginv)
    return ChiField(field, chi, d_chi, a, residuals, gaps)


def _continuous_data(field, pts):
    """(g, Gamma, chi) at arbitrary chart points, for integration."""
    if field.family is None:
        raise ValueError("off-grid evaluation needs a family-backed field")
    pts = np.asarray(pts, dtype=float)
    mj = metric_jets(field.family, field.chart, pts, order=2)
    cs = curvature(mj)
    ric = cs.ricci
    if field.perturbation is not None:
        ric = ric + field.perturbation(pts, 1).value
    g = cs.metric
    chi, _, _, gaps = _frame_chi(g, ric)
    if np.any(gaps <= 0):
        k = int(np.nonzero(gaps <= 0)[0][0])
        raise ObstructionError(
            f"Ricci leaves the solvable cone at coords {pts[k].tolist()}",
            point={"chart": field.chart, "coords": pts[k].tolist()},
            margin=float(gaps[k]),
        )
    return g, mj.christoffel_values(), chi


# ------------------------------------------------- Codazzi embeddability

def codazzi_residual_field(field: IntrinsicField, chi: ChiField):
    """Per-point max-norm of chi_{ij;k} - chi_{ik;j}."""
    out = covariant_antisym(field.metric, chi.as_jet())
    return np.abs(out).max(axis=(-3, -2, -1))


def reference_families():
    """Embedded families used to calibrate the Codazzi threshold."""
    return {
        "ellipsoid": Ellipsoid((1.0, 1.2, 0.9, 1.05)),
        "graph-bump": radial_graph_bump(0.1),
        "graph-random": radial_graph_random(seed=123),
    }


@lru_cache(maxsize=8)
def codazzi_threshold(resolution, extent=GRID_EXTENT):
    """10x the worst Codazzi residual the solver shows on embedded
    reference families at this resolution; (theta, per-family dict)."""
    pts = ball_grid(resolution, extent, 3)
    observed = {}
    for name, fam in reference_families().items():
        for chart in (0, 1):
            f = IntrinsicField.from_family(fam, chart, pts)
            chi = solve_contracted_gauss(f)
            observed[f"{name}/chart{chart}"] = float(
                codazzi_residual_field(f, chi).max())
    return 10.0 * max(observed.values()), observed


@dataclasses.dataclass
class EmbeddabilityVerdict:
    embeddable: bool
    sup_residual: float
    threshold: float
    at: dict
    calibration: dict
    residuals: np.ndarray = dataclasses.field(repr=False, default=None)

    def to_dict(self):
        return {
            "embeddable": self.embeddable,
            "sup_residual": self.sup_residual,
            "threshold": self.threshold,
            "at": self.at,
            "calibration": self.calibration,
        }


def embeddability_check(field: IntrinsicField, chi: ChiField,
                        theta: Optional[float] = None) -> EmbeddabilityVerdict:
    """Codazzi gate: embeddable iff sup residual stays below theta.

    theta defaults to the calibrated threshold for the field's grid
    resolution; the calibration data is echoed in the verdict.
    """
    if field.n != 3:
        raise ValueError("the embeddability gate is three-dimensional only")
    residuals = codazzi_residual_field(field, chi)
    idx = int(np.argmax(residuals))
    sup = float(residuals[idx])
    if theta is None:
        theta, observed = codazzi_threshold(field.grid_resolution())
        calibration = {"resolution": field.grid_resolution(),
                       "observed": observed}
    else:
        calibration = {"provided": True}
    return EmbeddabilityVerdict(
        embeddable=bool(sup <= theta),
        sup_residual=sup,
        threshold=float(theta),
        at=field.location(idx),
        calibration=calibration,
        residuals=residuals,
    )


# ----------------------------------------------------- frame integration

@dataclasses.dataclass
class FrameState:
    """Position, tangent frame rows, and unit normal in the ambient space."""

    X: np.ndarray
    E: np.ndarray
    N: np.ndarray

    def residuals(self, g):
        return {
            "metric": float(np.abs(self.E @ self.E.T - g).max()),
            "tangency": float(np.abs(self.E @ self.N).max()),
            "unit": float(abs(self.N @ self.N - 1.0)),
        }

    @classmethod
    def seed(cls, field: IntrinsicField) -> "FrameState":
        """Frame at the chart center: Gram rows of g, normal = last axis.

        The rows of the Cholesky factor L satisfy L L^T = g, and padding
        them with a zero last component leaves e_{n+1} as the unique unit
        normal making [E_1..E_n, N] positively oriented (det L > 0).
        """
        k0 = int(np.argmin(np.linalg.norm(field.coords, axis=-1)))
        if np.linalg.norm(field.coords[k0]) > 1e-12:
            raise ValueError("field grid has no center node")
        n = field.n
        chol = np.linalg.cholesky(field.g()[k0])
        e = np.zeros((n, n + 1))
        e[:, :n] = chol
        nvec = np.zeros(n + 1)
        nvec[n] = 1.0
        return cls(X=np.zeros(n + 1), E=e, N=nvec)


@dataclasses.dataclass
class Reconstruction:
    coords: np.ndarray
    X: np.ndarray
    isometry_sup: float
    holonomy_sup: Optional[float]
    plan: tuple
    h: float
    drift_limit: float

    def sphere_fit(self):
        """Least-squares center and radii statistics of the point cloud."""
        x = self.X
        a = np.concatenate([2.0 * x, np.ones((x.shape[0], 1))], axis=1)
        b = np.sum(x**2, axis=1)
        sol = np.linalg.lstsq(a, b, rcond=None)[0]
        center = sol[:-1]
        radii = np.linalg.norm(x - center, axis=1)
        return center, float(radii.mean()), float(np.abs(radii - radii.mean()).max())


def _rhs(axis, gamma, chi, ginv, e, nrm):
    de = np.einsum("lkj,lkp->ljp", gamma[:, :, axis, :], e) \
        - chi[:, axis, :, None] * nrm[:, None, :]
    dn = np.einsum("lj,ljp->lp", (chi @ ginv)[:, axis, :], e)
    return e[:, axis], de, dn


def _integrate_batch(field, starts, axis, sign, spacing, h, x, e, nrm):
    """March a batch of frame states one lattice segment along an axis."""
    nsub = max(1, int(round(spacing / h)))
    dt = sign * spacing / nsub
    unit = np.zeros(3)
    unit[axis] = 1.0
    data0 = _continuous_data(field, starts)
    for s in range(nsub):
        t0 = s * dt
        datam = _continuous_data(field, starts + (t0 + dt / 2.0) * unit)
        datae = _continuous_data(field, starts + (t0 + dt) * unit)

        def f(data, x, e, nrm):
            g, gamma, chi = data
            return _rhs(axis, gamma, chi, np.linalg.inv(g), e, nrm)

        k1 = f(data0, x, e, nrm)
        k2 = f(datam, x + dt / 2 * k1[0], e + dt / 2 * k1[1], nrm + dt / 2 * k1[2])
        k3 = f(datam, x + dt / 2 * k2[0], e + dt / 2 * k2[1], nrm + dt / 2 * k2[2])
        k4 = f(datae, x + dt * k3[0], e + dt * k3[1], nrm + dt * k3[2])
        x = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        e = e + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        nrm = nrm + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        data0 = datae
    return x, e, nrm


def _sweep_fill(field, seed, plan, h, drift_limit):
    coords = field.coords
    total = coords.shape[0]
    axes_vals = np.unique(np.round(coords[:, 0], 12))
    spacing = float(axes_vals[1] - axes_vals[0])
    idx = np.rint(coords / spacing).astype(int)
    lookup = {tuple(row): k for k, row in enumerate(idx)}
    if (0, 0, 0) not in lookup:
        raise ValueError("field grid has no center node")

    xs = np.zeros((total, 4))
    es = np.zeros((total, 3, 4))
    ns = np.zeros((total, 4))
    done = np.zeros(total, dtype=bool)
    k0 = lookup[(0, 0, 0)]
    xs[k0], es[k0], ns[k0] = seed.X, seed.E, seed.N
    done[k0] = True

    gvals = field.g()
    iso_sup = 0.0

    def advance(axis, active_mask):
        nonlocal iso_sup
        for sign in (1, -1):
            level = 1
            while True:
                targets = []
                sources = []
                for k in np.nonzero(active_mask & ~done)[0]:
                    if idx[k][axis] != sign * level:
                        continue
                    prev = tuple(idx[k] - sign * np.eye(3, dtype=int)[axis])
                    if prev in lookup and done[lookup[prev]]:
                        targets.append(k)
                        sources.append(lookup[prev])
                if not targets:
                    break
                targets = np.asarray(targets)
                sources = np.asarray(sources)
                x, e, nrm = _integrate_batch(
                    field, coords[sources], axis, sign, spacing, h,
                    xs[sources], es[sources], ns[sources])
                xs[targets], es[targets], ns[targets] = x, e, nrm
                done[targets] = True
                drift = np.abs(e @ np.swapaxes(e, -1, -2) - gvals[targets]).max(
                    axis=(-2, -1))
                worst = int(np.argmax(drift))
                if drift[worst] > drift_limit:
                    where = field.location(int(targets[worst]))
                    raise IntegrationError(
                        f"frame drift {drift[worst]:.3g} exceeds "
                        f"{drift_limit:.3g} at chart {where['chart']}, coords "
                        f"{where['coords']}; chi is inconsistent with g"
                    )
                iso_sup = max(iso_sup, float(drift.max()))
                level += 1

    a, b, c = plan
    advance(a, (idx[:, b] == 0) & (idx[:, c] == 0))
    advance(b, idx[:, c] == 0)
    advance(c, np.ones(total, dtype=bool))
    if not done.all():
        raise IntegrationError("sweep failed to reach every grid node")
    return xs, es, ns, iso_sup


def reconstruct(field: IntrinsicField, chi: ChiField,
                seed: Optional[FrameState] = None, path_plan=(0, 1, 2),
                h=1e-2, drift_limit=1e-3, with_holonomy=True) -> Reconstruction:
    """Integrate the frame system over the chart ball.

    The lattice fills in the path_plan's axis order (a line, then a plane,
    then the ball); holonomy is the sup of |X - X'| between this fill and
    one in the reversed order, and vanishes to integrator accuracy exactly
    when chi satisfies the Codazzi relation.
    """
    if field.n != 3:
        raise ValueError("reconstruction is three-dimensional only")
    if sorted(path_plan) != [0, 1, 2]:
        raise ValueError("path_plan must be a permutation of (0, 1, 2)")
    if chi.field is not field:
        raise ValueError("chi was solved on a different field")
    if seed is None:
        seed = FrameState.seed(field)
    bad = seed.residuals(field.g()[int(np.argmin(np.linalg.norm(field.coords, axis=-1)))])
    if max(bad.values()) > 1e-10:
        raise ValueError(f"seed frame violates its invariants: {bad}")

    xs, _, _, iso = _sweep_fill(field, seed, tuple(path_plan), h, drift_limit)
    holo = None
    if with_holonomy:
        xs2, _, _, iso2 = _sweep_fill(field, seed, tuple(reversed(path_plan)),
                                      h, drift_limit)
        iso = max(iso, iso2)
        holo = float(np.linalg.norm(xs - xs2, axis=-1).max())
    return Reconstruction(coords=field.coords, X=xs, isometry_sup=iso,
                          holonomy_sup=holo, plan=tuple(path_plan), h=h,
                          drift_limit=drift_limit)


def align_rigid(recon, truth):
    """Least-squares orthogonal map + translation taking recon onto truth.

    Reflections are allowed.  Returns (Q, t, rms) with recon @ Q + t as the
    aligned cloud; warns when either cloud is rank deficient, since the map
    is then not unique.
    """
    a = np.asarray(recon, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("point clouds must share (count, dim) shape")
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    a0, b0 = a - ca, b - cb
    for cloud in (a0, b0):
        sv = np.linalg.svd(cloud, compute_uv=False)
        if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
            warnings.warn("point cloud is rank deficient; the alignment is "
                          "not unique", RuntimeWarning, stacklevel=2)
            break
    q, _ = orthogonal_procrustes(a0, b0)
    t = cb - ca @ q
    rms = float(np.sqrt(np.mean(np.sum((a @ q + t - b) ** 2, axis=1))))
    return q, t, rms
