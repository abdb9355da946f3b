"""Curvature of a metric given as a field of Taylor jets.

Everything downstream of a metric happens here: Christoffel symbols, Riemann
and Ricci tensors, scalar curvature and its Laplacian, sectional-curvature
ranges, covariant derivatives of symmetric 2-tensors, and a shortest-path
estimate of the diameter of a two-chart geometry.

Conventions.  christoffel[..., k, i, j] holds Gamma^k_{ij}.  The lowered
curvature tensor riemann[..., i, j, k, l] contracts with u^i v^j u^k v^l to
the (unnormalized) sectional numerator of the plane spanned by u and v; on
the unit round sphere it equals g_ik g_jl - g_il g_jk, so sectional
curvatures are positive there.  ricci[..., j, l] is the (1,3)-trace and
scalar its g-trace, giving Ricci = (n-1) g and scalar = n(n-1) on the unit
sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DomainError
from .jets import Jet

# charts overlap in an annulus as long as 1 < extent < chart cap
DEFAULT_EXTENT = 1.2


def _stack_jets(entries):
    """Nested [i][j] lists of equal-shape Jets -> one Jet with (.., n, n) batch."""
    rows = [np.stack([e.coeffs for e in row], axis=-2) for row in entries]
    proto = entries[0][0]
    return Jet(proto.nvars, proto.order, np.stack(rows, axis=-3))


class MetricJet:
    """Symmetric positive-definite metric with Taylor data at grid points.

    entries[i][j] are Jets sharing a common batch shape.  The constructor
    validates symmetry and positive-definiteness of the value matrices.
    """

    def __init__(self, entries):
        n = len(entries)
        if any(len(row) != n for row in entries):
            raise ValueError("metric entries must form a square array")
        proto = entries[0][0]
        for i in range(n):
            for j in range(i + 1, n):
                if not np.allclose(entries[i][j].coeffs, entries[j][i].coeffs,
                                   rtol=1e-8, atol=1e-10):
                    raise ValueError(f"metric jets not symmetric in slot ({i},{j})")
        # share one object per unordered pair so symmetry is exact downstream
        self.entries = tuple(
            tuple(entries[i][j] if i <= j else entries[j][i] for j in range(n))
            for i in range(n)
        )
        self.n = n
        self.order = proto.order
        self.nvars = proto.nvars
        if self.nvars != n:
            raise ValueError(f"{n}x{n} metric needs jets in {n} variables, got {self.nvars}")
        vals = self.values()
        try:
            np.linalg.cholesky(vals)
        except np.linalg.LinAlgError:
            raise DomainError("metric is not positive definite") from None
        self._inv = None
        self._gamma = None

    @classmethod
    def from_coeff_array(cls, coeffs, nvars):
        """Build from an array shaped (..., n, n, nmono)."""
        coeffs = np.asarray(coeffs, dtype=float)
        n = coeffs.shape[-2]
        order = {len(Jet.constant(0.0, nvars, o).coeffs): o
                 for o in range(0, 7)}.get(coeffs.shape[-1])
        if order is None:
            raise ValueError("coefficient axis does not match any jet order")
        entries = [[Jet(nvars, order, coeffs[..., i, j, :]) for j in range(n)]
                   for i in range(n)]
        return cls(entries)

    @property
    def batch_shape(self):
        return self.entries[0][0].batch_shape

    def values(self):
        return np.stack(
            [np.stack([self.entries[i][j].value for j in range(self.n)], axis=-1)
             for i in range(self.n)],
            axis=-2,
        )

    def as_jet(self):
        return _stack_jets(self.entries)

    def inverse_entries(self):
        """Adjugate-over-determinant inverse, as jets of the same order."""
        if self._inv is not None:
            return self._inv
        e = self.entries
        if self.n == 2:
            det = e[0][0] * e[1][1] - e[0][1] * e[0][1]
            r = det.reciprocal()
            inv = [[e[1][1] * r, -1.0 * (e[0][1] * r)],
                   [None, e[0][0] * r]]
        elif self.n == 3:
            c00 = e[1][1] * e[2][2] - e[1][2] * e[1][2]
            c01 = e[0][2] * e[1][2] - e[0][1] * e[2][2]
            c02 = e[0][1] * e[1][2] - e[0][2] * e[1][1]
            c11 = e[0][0] * e[2][2] - e[0][2] * e[0][2]
            c12 = e[0][1] * e[0][2] - e[0][0] * e[1][2]
            c22 = e[0][0] * e[1][1] - e[0][1] * e[0][1]
            det = e[0][0] * c00 + e[0][1] * c01 + e[0][2] * c02
            r = det.reciprocal()
            inv = [[c00 * r, c01 * r, c02 * r],
                   [None, c11 * r, c12 * r],
                   [None, None, c22 * r]]
        else:
            raise ValueError(f"unsupported dimension {self.n}")
        full = [[inv[i][j] if i <= j else inv[j][i] for j in range(self.n)]
                for i in range(self.n)]
        self._inv = tuple(tuple(row) for row in full)
        return self._inv

    def christoffels(self):
        """Gamma^k_{ij} jets at one order below the metric, as [k][i][j]."""
        if self._gamma is not None:
            return self._gamma
        n, m = self.n, self.order
        if m < 1:
            raise ValueError("metric jets must carry at least first derivatives")
        ginv = [[ent.truncate(m - 1) for ent in row] for row in self.inverse_entries()]
        dg = [[[self.entries[b][c].derivative(a) for c in range(n)] for b in range(n)]
              for a in range(n)]
        gamma = [[[None] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                for k in range(n):
                    acc = None
                    for l in range(n):
                        term = ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j])
                        acc = term if acc is None else acc + term
                    gamma[k][i][j] = gamma[k][j][i] = 0.5 * acc
        self._gamma = tuple(tuple(tuple(r) for r in p) for p in gamma)
        return self._gamma

    def christoffel_values(self):
        g = self.christoffels()
        n = self.n
        return np.stack(
            [np.stack([np.stack([g[k][i][j].value for j in range(n)], axis=-1)
                       for i in range(n)], axis=-2)
             for k in range(n)],
            axis=-3,
        )


@dataclass
class CurvatureState:
    """Pointwise curvature data over a batch of points; see module docstring."""

    n: int
    metric: np.ndarray
    metric_inv: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    laplacian_scalar: Optional[np.ndarray]
    sectional_min: np.ndarray
    sectional_max: np.ndarray
    ricci_norm: np.ndarray
    ricci_jet: Jet = field(repr=False)
    scalar_jet: Jet = field(repr=False)

    @property
    def batch_shape(self):
        return self.scalar.shape


def curvature(mj: MetricJet) -> CurvatureState:
    """Run the full intrinsic pipeline on a metric jet field.

    The metric must carry order >= 2; the scalar-curvature Laplacian needs
    order 4 and is None below that.  All tensor outputs are plain arrays over
    the batch; Ricci and scalar curvature are additionally returned as jets
    (order = metric order - 2) so their derivatives stay exact.
    """
    n, m = mj.n, mj.order
    if m < 2:
        raise ValueError("curvature needs metric jets of order >= 2")
    ro = m - 2
    gamma = mj.christoffels()
    gamma_t = [[[gamma[k][i][j].truncate(ro) for j in range(n)] for i in range(n)]
               for k in range(n)]
    dgamma = [[[[gamma[r][nu][s].derivative(mu) for s in range(n)] for nu in range(n)]
               for r in range(n)] for mu in range(n)]

    zero = Jet.constant(np.zeros(mj.batch_shape), n, ro)
    # upper[r][s][mu][nu] = R^r_{s mu nu}, stored for mu < nu
    upper = {}
    for r in range(n):
        for s in range(n):
            for mu in range(n):
                for nu in range(mu + 1, n):
                    acc = dgamma[mu][r][nu][s] - dgamma[nu][r][mu][s]
                    for lam in range(n):
                        acc = acc + gamma_t[r][mu][lam] * gamma_t[lam][nu][s]
                        acc = acc - gamma_t[r][nu][lam] * gamma_t[lam][mu][s]
                    upper[r, s, mu, nu] = acc

    def up(r, s, mu, nu):
        if mu == nu:
            return zero
        if mu < nu:
            return upper[r, s, mu, nu]
        return -1.0 * upper[r, s, nu, mu]

    ric = [[None] * n for _ in range(n)]
    for s in range(n):
        for nu in range(s, n):
            acc = None
            for mu in range(n):
                term = up(mu, s, mu, nu)
                acc = term if acc is None else acc + term
            ric[s][nu] = ric[nu][s] = acc

    ginv_t = [[ent.truncate(ro) for ent in row] for row in mj.inverse_entries()]
    scalar = None
    for s in range(n):
        for nu in range(n):
            term = ginv_t[s][nu] * ric[s][nu]
            scalar = term if scalar is None else scalar + term

    gvals = mj.values()
    ginv_vals = np.linalg.inv(gvals)
    up_vals = np.stack(
        [np.stack([np.stack([np.stack([up(r, s, mu, nu).value for nu in range(n)], -1)
                             for mu in range(n)], -2)
                   for s in range(n)], -3)
         for r in range(n)],
        -4,
    )
    riemann = np.einsum("...rl,...lsmn->...rsmn", gvals, up_vals)

    lap = None
    if m >= 4:
        grad = np.stack([scalar.partial(tuple(int(k == v) for k in range(n)))
                         for v in range(n)], -1)
        hess = np.empty(mj.batch_shape + (n, n))
        for i in range(n):
            for j in range(i, n):
                gm = tuple(int(k == i) + int(k == j) for k in range(n))
                hess[..., i, j] = hess[..., j, i] = scalar.partial(gm)
        gamma_vals = mj.christoffel_values()
        lap = np.einsum("...ij,...ij->...", ginv_vals, hess) \
            - np.einsum("...ij,...kij,...k->...", ginv_vals, gamma_vals, grad)
    else:
        gamma_vals = mj.christoffel_values()

    ric_vals = np.stack(
        [np.stack([ric[i][j].value for j in range(n)], -1) for i in range(n)], -2
    )
    ricci_norm = np.sqrt(np.einsum(
        "...ik,...jl,...ij,...kl->...", ginv_vals, ginv_vals, ric_vals, ric_vals
    ))

    kmin, kmax = _sectional_exact(n, gvals, riemann, scalar.value)

    return CurvatureState(
        n=n,
        metric=gvals,
        metric_inv=ginv_vals,
        christoffel=gamma_vals,
        riemann=riemann,
        ricci=ric_vals,
        scalar=scalar.value,
        laplacian_scalar=lap,
        sectional_min=kmin,
        sectional_max=kmax,
        ricci_norm=ricci_norm,
        ricci_jet=_stack_jets(ric),
        scalar_jet=scalar,
    )


def orthonormal_frame(gvals):
    """Columns F[..., :, a] are g-orthonormal vectors: F^T g F = identity."""
    chol = np.linalg.cholesky(gvals)
    return np.swapaxes(np.linalg.inv(chol), -1, -2)


def _frame_riemann(riemann, frame):
    return np.einsum("...ijkl,...ia,...jb,...kc,...ld->...abcd",
                     riemann, frame, frame, frame, frame)


def _sectional_exact(n, gvals, riemann, scalar):
    if n == 2:
        half = scalar / 2.0
        return half.copy(), half.copy()
    if n == 3:
        frame = orthonormal_frame(gvals)
        rf = _frame_riemann(riemann, frame)
        pairs = [(0, 1), (0, 2), (1, 2)]
        op = np.empty(scalar.shape + (3, 3))
        for a, (i, j) in enumerate(pairs):
            for b, (k, l) in enumerate(pairs):
                op[..., a, b] = rf[..., i, j, k, l]
        ev = np.linalg.eigvalsh(op)
        return ev[..., 0], ev[..., -1]
    raise ValueError(f"unsupported dimension {n}")


class SectionalRange(NamedTuple):
    kmin: np.ndarray
    kmax: np.ndarray
    exact: bool


def sectional_extremes(cs: CurvatureState, samples: int = 0, seed: int = 0) -> SectionalRange:
    """Sectional-curvature range per point.

    For n = 2 the single curvature, for n = 3 the exact eigenvalue range of
    the operator on 2-planes (every 2-plane in dimension 3 is an eigenplane
    mixture, so the range is tight).  samples > 0 additionally evaluates that
    many random planes and widens the reported range if a sample escapes it,
    which serves as a cross-check; the exact flag reports whether the result
    is certified rather than sampled.
    """
    kmin, kmax = cs.sectional_min.copy(), cs.sectional_max.copy()
    exact = cs.n <= 3
    if samples > 0:
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            u = rng.standard_normal(cs.n)
            v = rng.standard_normal(cs.n)
            num = np.einsum("...ijkl,i,j,k,l->...", cs.riemann, u, v, u, v)
            uu = np.einsum("...ij,i,j->...", cs.metric, u, u)
            vv = np.einsum("...ij,i,j->...", cs.metric, v, v)
            uv = np.einsum("...ij,i,j->...", cs.metric, u, v)
            gram = uu * vv - uv * uv
            if np.any(gram < 1e-12):
                continue
            k = num / gram
            kmin = np.minimum(kmin, k)
            kmax = np.maximum(kmax, k)
    return SectionalRange(kmin, kmax, exact)


def adapted_sectional_sums(cs: CurvatureState):
    """Ricci eigenvalues and the plane curvatures of the eigenframe.

    Returns (mu, kappa) with mu[..., i] the Ricci eigenvalues relative to g
    (ascending) and kappa[..., i, j] the sectional curvature of the plane of
    adapted frame vectors i and j; each mu[..., i] equals kappa[..., i, :].sum().
    """
    chol = np.linalg.cholesky(cs.metric)
    inv = np.linalg.inv(chol)
    ric_f = inv @ cs.ricci @ np.swapaxes(inv, -1, -2)
    mu, q = np.linalg.eigh(ric_f)
    frame = np.swapaxes(inv, -1, -2) @ q
    rf = _frame_riemann(cs.riemann, frame)
    kappa = np.einsum("...abab->...ab", rf)
    return mu, kappa


def covariant_antisym(mj: MetricJet, t: Jet) -> np.ndarray:
    """Antisymmetrized covariant derivative T_{ij;k} - T_{ik;j} of a
    symmetric 2-tensor given as a Jet with trailing (n, n) batch axes and
    order >= 1.  Returns values shaped (..., n, n, n), last axes (i, j, k).
    """
    n = mj.n
    tv = t.value
    if tv.shape[-2:] != (n, n):
        raise ValueError("tensor jet must have trailing (n, n) batch axes")
    if not np.allclose(tv, np.swapaxes(tv, -1, -2), rtol=1e-8, atol=1e-10):
        raise ValueError("tensor is not symmetric")
    dt = np.stack([t.derivative(k).value for k in range(n)], axis=-1)
    gam = mj.christoffel_values()
    cov = dt \
        - np.einsum("...lki,...lj->...ijk", gam, tv) \
        - np.einsum("...lkj,...il->...ijk", gam, tv)
    return cov - np.swapaxes(cov, -1, -2)


# --------------------------------------------------------------- diameter


@dataclass
class GeodesicGraph:
    """Metric graph over two stereographic chart balls joined in the overlap."""

    n: int
    resolution: int
    extent: float
    node_chart: np.ndarray
    node_coords: np.ndarray
    adjacency: scipy.sparse.csr_matrix
    num_edges: int

    @property
    def num_nodes(self):
        return self.node_chart.size


@dataclass
class DiameterEstimate:
    value: float
    num_nodes: int
    num_edges: int
    num_sources: int
    resolution: int
    extent: float


def build_geodesic_graph(metric_fn: Callable, n: int, resolution: int,
                         extent: float = DEFAULT_EXTENT) -> GeodesicGraph:
    """Build the two-chart shortest-path graph of a metric on the n-sphere.

    metric_fn(chart, pts) must return the metric values (m, n, n) at chart
    points pts (m, n), for chart in {0, 1}.  Nodes are lattice points of
    spacing 2*extent/(resolution-1) inside the coordinate ball of radius
    extent in each chart; edges join lattice neighbors (full box stencil,
    3^n - 1 directions) with length sqrt(d^T g(midpoint) d), and nodes in the
    overlap annulus are stitched to the surrounding lattice cell of their
    image in the other chart.
    """
    if resolution < 5 or resolution % 2 == 0:
        raise ValueError("resolution must be odd and >= 5")
    if not 1.0 < extent < 1.8:
        raise ValueError("extent must lie in (1, 1.8) so the chart balls overlap")
    axes = np.linspace(-extent, extent, resolution)
    h = axes[1] - axes[0]
    idx = np.stack(np.meshgrid(*([np.arange(resolution)] * n), indexing="ij"),
                   axis=-1).reshape(-1, n)
    coords = axes[idx]
    keep = np.linalg.norm(coords, axis=1) <= extent + 1e-12
    idx, coords = idx[keep], coords[keep]
    per_chart = idx.shape[0]

    id_grid = np.full((2,) + (resolution,) * n, -1, dtype=np.int64)
    for c in range(2):
        id_grid[(c, *idx.T)] = np.arange(per_chart) + c * per_chart
    node_chart = np.repeat(np.arange(2), per_chart)
    node_coords = np.concatenate([coords, coords], axis=0)

    offsets = [np.array(o) for o in np.ndindex(*((3,) * n))]
    offsets = [o - 1 for o in offsets if tuple(o) > (1,) * n]  # canonical half

    rows, cols, weights = [], [], []
    for c in range(2):
        for off in offsets:
            nb = idx + off
            ok = np.all((nb >= 0) & (nb < resolution), axis=1)
            src = id_grid[(c, *idx[ok].T)]
            dst = id_grid[(c, *nb[ok].T)]
            ok2 = dst >= 0
            src, dst = src[ok2], dst[ok2]
            if src.size == 0:
                continue
            a = node_coords[src]
            disp = off * h
            mids = a + disp / 2.0
            g = metric_fn(c, mids)
            w = np.sqrt(np.einsum("i,mij,j->m", disp, g, disp))
            rows.append(src)
            cols.append(dst)
            weights.append(w)

    # stitch the overlap: nodes whose inversion lands inside the other ball
    r2 = np.einsum("mi,mi->m", coords, coords)
    far = r2 >= (1.0 / extent) ** 2
    eta = coords[far] / r2[far, None]
    base = np.floor((eta + extent) / h).astype(np.int64)
    for corner in np.ndindex(*((2,) * n)):
        cidx = base + np.array(corner)
        ok = np.all((cidx >= 0) & (cidx < resolution), axis=1)
        for c in range(2):
            src = id_grid[(c, *idx[far][ok].T)]
            dst = id_grid[(1 - c, *cidx[ok].T)]
            ok2 = dst >= 0
            s, d = src[ok2], dst[ok2]
            if s.size == 0:
                continue
            target = axes[cidx[ok][ok2]]
            disp = target - eta[ok][ok2]
            mids = (target + eta[ok][ok2]) / 2.0
            g = metric_fn(1 - c, mids)
            w = np.sqrt(np.einsum("mi,mij,mj->m", disp, g, disp))
            rows.append(s)
            cols.append(d)
            weights.append(np.maximum(w, 1e-12))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = np.concatenate(weights)
    order = np.lexsort((cols, rows))
    rows, cols, weights = rows[order], cols[order], weights[order]
    # keep the shortest copy of any duplicated pair
    pair_change = np.empty(rows.size, dtype=bool)
    pair_change[0] = True
    pair_change[1:] = (np.diff(rows) != 0) | (np.diff(cols) != 0)
    group = np.cumsum(pair_change) - 1
    best = np.full(group[-1] + 1, np.inf)
    np.minimum.at(best, group, weights)
    first = np.nonzero(pair_change)[0]
    rows, cols, weights = rows[first], cols[first], best

    total = 2 * per_chart
    adj = scipy.sparse.csr_matrix((weights, (rows, cols)), shape=(total, total))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DomainError(f"geodesic graph is disconnected ({ncomp} components)")
    return GeodesicGraph(n=n, resolution=resolution, extent=extent,
                         node_chart=node_chart, node_coords=node_coords,
                         adjacency=adj, num_edges=rows.size)


def diameter(gg: GeodesicGraph, landmarks: int = 64) -> DiameterEstimate:
    """Largest shortest-path distance found from a landmark set.

    Small graphs (resolution <= 9 per axis) run every node as a source;
    larger ones use farthest-point-sampled landmarks.  Graph paths can only
    overestimate the distances between the points they connect, so the
    estimate sits above the true geodesic distance of every represented
    pair and shrinks as resolution grows.
    """
    total = gg.num_nodes
    if gg.resolution <= 9 or landmarks >= total:
        dist = dijkstra(gg.adjacency, directed=False)
        if np.isinf(dist).any():
            raise DomainError("geodesic graph is disconnected")
        return DiameterEstimate(float(dist.max()), total, gg.num_edges, total,
                                gg.resolution, gg.extent)

    best = 0.0
    mind = None
    source = 0
    used = []
    for _ in range(landmarks):
        used.append(source)
        dist = dijkstra(gg.adjacency, directed=False, indices=[source])[0]
        if np.isinf(dist).any():
            raise DomainError("geodesic graph is disconnected")
        best = max(best, float(dist.max()))
        mind = dist if mind is None else np.minimum(mind, dist)
        source = int(np.argmax(mind))
    return DiameterEstimate(best, total, gg.num_edges, len(used),
                            gg.resolution, gg.extent)
