"""Gaussian-weighted eigenproblem for the stability operator on a shrinker.

The operator is L u = Delta u - (x.T/2) d_s u + (1/2 + |A|^2) u, reduced to
the generating profile; Fourier mode m >= 1 adds -m^2/r^2 to the potential.
Eigenvalues follow the convention L phi = -lambda phi, so the reported
numbers are eigenvalues of -L and the ground state has the smallest one.

The drift is absorbed into the weighted divergence form
    L u = (1/w) (w u')' + potential * u,      w = r^k e^{-|x|^2/4} (k = n-1),
so the assembled matrix is exactly self-adjoint for the discrete weighted
inner product.  Assembly is tridiagonal (cyclic on closed profiles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._errors import NonConvergenceError, ValidationError
from .profiles import ProfileGeometry, derivative_on_profile
from .shrinkers import ShrinkerSurface


@dataclass
class StabilityOperator:
    """Discrete -L in generalized symmetric form  K phi = lambda M phi.

    ``K`` is the (sparse) stiffness-plus-potential matrix, symmetric;
    ``mass`` the positive diagonal weighted mass.  ``index`` maps operator
    rows back to profile nodes (all nodes, or the interior of a Dirichlet
    subrange, or the profile minus axis caps for m >= 1).
    """

    surface: ShrinkerSurface
    m: int
    K: sp.csr_matrix
    mass: np.ndarray
    index: np.ndarray
    boundary_condition: str  # "none", "dirichlet", or "decay-truncated"

    @property
    def size(self) -> int:
        return self.mass.size

    def apply_minus_L(self, u: np.ndarray) -> np.ndarray:
        """-L u on operator rows."""
        return (self.K @ u) / self.mass

    def apply_L(self, u: np.ndarray) -> np.ndarray:
        return -self.apply_minus_L(u)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Weighted inner product consistent with the assembly mass."""
        norm = (4.0 * math.pi) ** (-0.5 * self.surface.n)
        return float(norm * np.sum(f * g * self.mass))

    def norm(self, f: np.ndarray) -> float:
        return math.sqrt(max(self.inner(f, f), 0.0))

    def sym_dense(self) -> np.ndarray:
        d = 1.0 / np.sqrt(self.mass)
        return (self.K.toarray() * d[:, None]) * d[None, :]

    def embed(self, u: np.ndarray) -> np.ndarray:
        """Zero-extend an operator-row field to all profile nodes."""
        full = np.zeros(self.surface.profile.node_count)
        full[self.index] = u
        return full


@dataclass
class SpectralPair:
    """Eigenvalue/eigenfunction with residual certificate.

    ``eigenvalue`` is an eigenvalue of -L (ground state = smallest).  The
    eigenfunction is defined on all profile nodes (zero on Dirichlet rows)
    and normalized to unit weighted norm.
    """

    eigenvalue: float
    eigenfunction: np.ndarray
    fourier_mode: int
    residual: float
    normalization: float
    boundary_condition: str


@dataclass
class DirichletProblem:
    """Compact subdomain of a surface given by a node index range."""

    surface: ShrinkerSurface
    node_range: tuple
    m: int = 0

    def __post_init__(self):
        lo, hi = self.node_range
        count = self.surface.profile.node_count
        if not (0 <= lo < hi <= count):
            raise ValidationError("node_range out of bounds")
        if hi - lo < 32:
            raise ValidationError("Dirichlet subdomain needs at least 32 nodes")


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _weight_density(surface: ShrinkerSurface) -> np.ndarray:
    """Density of the weighted measure against arclength: 2 pi r e^{-|x|^2/4}
    for a surface of revolution, e^{-|x|^2/4} for a planar curve."""
    geom = surface.geom
    r = surface.profile.nodes[:, 0]
    if surface.n == 2:
        return 2.0 * math.pi * r * geom.gauss
    return geom.gauss.copy()


def assemble_operator(surface: ShrinkerSurface, m: int = 0,
                      node_range: tuple | None = None) -> StabilityOperator:
    """Assemble -L for Fourier mode m, optionally on a Dirichlet subrange.

    On profiles with axis caps the cap node weight vanishes; for m = 0 the
    cap row uses the half-cell finite-volume mass (the natural no-flux
    closure), while for m >= 1 the cap rows carry the regularity condition
    phi = 0 and are removed.
    """
    if m < 0:
        raise ValidationError("Fourier mode m must be >= 0")
    prof = surface.profile
    geom = surface.geom
    N = prof.node_count
    if m >= 1 and prof.n == 1:
        raise ValidationError("Fourier modes require a rotational surface")

    w = _weight_density(surface)
    nodes = prof.nodes
    closed = prof.closed and node_range is None

    # edge list
    if closed:
        j = np.arange(N)
        k = (j + 1) % N
    else:
        j = np.arange(N - 1)
        k = j + 1
    h_edge = np.linalg.norm(nodes[k] - nodes[j], axis=1)
    w_edge = 0.5 * (w[j] + w[k])

    # finite-volume node mass; half-cells at open ends, regularized at caps
    massfull = np.zeros(N)
    np.add.at(massfull, j, 0.5 * w_edge * h_edge)
    np.add.at(massfull, k, 0.5 * w_edge * h_edge)

    potential = 0.5 + geom.A2.copy()
    if m >= 1:
        r = nodes[:, 0]
        body = r > 0
        centrifugal = np.zeros_like(r)
        centrifugal[body] = (m / r[body]) ** 2
        potential = potential - centrifugal  # cap rows are dropped below

    # row selection
    drop = np.zeros(N, dtype=bool)
    bc = "none" if closed else "decay-truncated"
    if node_range is not None:
        lo, hi = node_range
        keep_mask = np.zeros(N, dtype=bool)
        keep_mask[lo:hi] = True
        drop = ~keep_mask
        drop[lo] = drop[hi - 1] = True  # Dirichlet rows at subdomain boundary
        bc = "dirichlet"
    else:
        if not prof.closed:
            for which, idx in ((0, 0), (-1, N - 1)):
                cap = prof.has_axis_cap(which)
                if m >= 1 and cap:
                    drop[idx] = True            # phi(cap) = 0 regularity
                elif not cap:
                    drop[idx] = True            # homogeneous Dirichlet at cut
            if m >= 1 and not (prof.has_axis_cap(0) or prof.has_axis_cap(-1)) \
                    and np.any(nodes[:, 0] <= 0):
                raise ValidationError("m >= 1 requires r > 0 on the domain")

    keep = np.where(~drop)[0]
    pos = -np.ones(N, dtype=int)
    pos[keep] = np.arange(keep.size)

    rows, cols, vals = [], [], []
    for a, b, we, he in zip(j, k, w_edge, h_edge):
        ia, ib = pos[a], pos[b]
        c = we / he
        if ia >= 0:
            rows.append(ia); cols.append(ia); vals.append(c)
        if ib >= 0:
            rows.append(ib); cols.append(ib); vals.append(c)
        if ia >= 0 and ib >= 0:
            rows.append(ia); cols.append(ib); vals.append(-c)
            rows.append(ib); cols.append(ia); vals.append(-c)
    mass = massfull[keep]
    if np.any(mass <= 0):
        raise ValidationError("vanishing node mass in operator assembly")
    K = sp.csr_matrix((vals, (rows, cols)), shape=(keep.size, keep.size))
    K = K - sp.diags(potential[keep] * mass)
    return StabilityOperator(surface=surface, m=m, K=K.tocsr(), mass=mass,
                             index=keep, boundary_condition=bc)


# ---------------------------------------------------------------------------
# eigen-solvers
# ---------------------------------------------------------------------------

def _certify(op: StabilityOperator, lam: float, vec: np.ndarray) -> SpectralPair:
    nrm = op.norm(vec)
    vec = vec / nrm
    res = op.apply_minus_L(vec) - lam * vec
    pair = SpectralPair(eigenvalue=float(lam),
                        eigenfunction=op.embed(vec),
                        fourier_mode=op.m,
                        residual=op.norm(res),
                        normalization=op.norm(vec),
                        boundary_condition=op.boundary_condition)
    return pair


def ground_state(surface: ShrinkerSurface, m: int = 0, shift: float | None = None,
                 node_range: tuple | None = None, max_iter: int = 400,
                 tol: float = 1e-13) -> SpectralPair:
    """Smallest eigenvalue of -L by shifted inverse iteration.

    The iteration runs on the symmetric pencil (K - shift M, M).  The shift
    must sit below the entire spectrum for the iteration to select the
    ground state; the default -max(potential) - 1 is a guaranteed lower
    bound (it reduces to -2 on the round sphere and cylinder).  The
    eigenfunction sign is fixed positive.  A sign-changing converged ground
    state raises, since the discrete operator has Perron-Frobenius structure.
    """
    op = assemble_operator(surface, m=m, node_range=node_range)
    if shift is None:
        # Rayleigh bound: <-L u, u> >= -max(potential) ||u||^2
        shift = -float(0.5 + surface.geom.A2.max()) - 1.0
    A = (op.K - shift * sp.diags(op.mass)).tocsc()
    lu = spla.splu(A)
    rng = np.random.default_rng(12345)
    v = np.ones(op.size) + 1e-3 * rng.standard_normal(op.size)
    lam = res = None
    for it in range(max_iter):
        v = lu.solve(op.mass * v)
        v /= op.norm(v)
        lam = op.inner(v, op.apply_minus_L(v))
        res = op.norm(op.apply_minus_L(v) - lam * v)
        if res <= tol * max(1.0, abs(lam)):
            break
    if res > 1e-9 * max(1.0, abs(lam)):
        raise NonConvergenceError(
            f"inverse iteration stalled, last residual {res:.3e}")
    if v.sum() < 0:
        v = -v
    if v.min() < -1e-8 * np.abs(v).max():
        raise NonConvergenceError(
            "sign-changing candidate ground state (Perron-Frobenius violation)")
    v = np.abs(np.where(v == 0, 1e-300, v)) * np.sign(np.where(v == 0, 1, v))
    return _certify(op, lam, v)


def spectrum(surface: ShrinkerSurface, m: int = 0, k: int = 4,
             node_range: tuple | None = None) -> list:
    """k lowest eigenpairs of -L for Fourier mode m, with certificates."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    op = assemble_operator(surface, m=m, node_range=node_range)
    B = op.sym_dense()
    B = 0.5 * (B + B.T)
    evals, evecs = sla.eigh(B, subset_by_index=[0, min(k, op.size) - 1])
    d = 1.0 / np.sqrt(op.mass)
    pairs = []
    for i in range(evals.size):
        vec = evecs[:, i] * d
        if vec.sum() < 0:
            vec = -vec
        pairs.append(_certify(op, evals[i], vec))
    return pairs


def richardson_eigenvalues(surface_factory, m: int = 0, k: int = 4,
                           node_counts=(512, 1024)) -> dict:
    """Eigenvalues extrapolated from two grids under second-order refinement.

    ``surface_factory(node_count)`` must rebuild the same surface at the
    requested resolution.  Returns the extrapolated values together with the
    per-grid values and the extrapolation error estimate.
    """
    n0, n1 = node_counts
    e0 = np.array([p.eigenvalue for p in spectrum(surface_factory(n0), m=m, k=k)])
    e1 = np.array([p.eigenvalue for p in spectrum(surface_factory(n1), m=m, k=k)])
    ratio = (n1 / n0) ** 2
    extrap = (ratio * e1 - e0) / (ratio - 1.0)
    return {"coarse": e0, "fine": e1, "extrapolated": extrap,
            "error_estimate": np.abs(extrap - e1)}


def dirichlet_ground_state(problem: DirichletProblem) -> tuple:
    """Ground state on a compact subdomain with zero boundary values.

    Returns (pair, hopf) where ``hopf`` is the boundary gradient quantity
    inf over the two boundary nodes of |d phi0 / ds|, which is positive for
    the positive ground state.
    """
    pair = ground_state(problem.surface, m=problem.m,
                        node_range=problem.node_range)
    prof = problem.surface.profile
    dphi = derivative_on_profile_open(prof, pair.eigenfunction)
    lo, hi = problem.node_range
    hopf = float(min(abs(dphi[lo]), abs(dphi[hi - 1])))
    return pair, hopf


def derivative_on_profile_open(profile: ProfileGeometry, values: np.ndarray):
    """FD arclength derivative that ignores closed-profile wraparound.

    Dirichlet eigenfunctions vanish outside the subrange and are not smooth
    across it, so spectral differentiation would ring; plain second-order
    stencils stay local.
    """
    s = profile.cumulative_arclength()
    from .profiles import _fd_first
    return _fd_first(np.asarray(values, dtype=float), s)


# ---------------------------------------------------------------------------
# end decay fits
# ---------------------------------------------------------------------------

def end_decay_fit(pair: SpectralPair, surface: ShrinkerSurface, side: str,
                  window_fraction: float = 0.25, skip_nodes: int = 5) -> dict:
    """Log-log decay exponent of an eigenfunction along one end.

    Fits log phi against log |x| on the outer ``window_fraction`` of the
    chosen end (side "first" or "last"), excluding the ``skip_nodes`` nodes
    nearest the truncation to avoid the Dirichlet boundary layer.  Returns
    the fitted exponent with a least-squares confidence half-width.
    """
    prof = surface.profile
    phi = pair.eigenfunction
    N = prof.node_count
    count = max(int(window_fraction * N), 30)
    if side == "first":
        idx = np.arange(skip_nodes, count)
    elif side == "last":
        idx = np.arange(N - count, N - skip_nodes)
    else:
        raise ValidationError("side must be 'first' or 'last'")
    if idx.size < 30:
        raise ValidationError("decay fit window needs at least 30 nodes")
    vals = phi[idx]
    if np.any(vals <= 0):
        raise ValidationError("non-positive eigenfunction values in fit window")
    absx = surface.geom.absx[idx]
    from .fitting import fit_loglog
    return fit_loglog(absx, vals)
