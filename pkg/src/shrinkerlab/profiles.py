"""Discrete differential geometry of generating profiles.

A profile is an ordered list of nodes in the (r, z) half-plane.  For n = 2 it
generates a surface of revolution about the z-axis; for n = 1 it is itself a
planar curve (the coordinates are then read as (x, y)).  This module computes
tangents, normals, principal curvatures, the induced measure and the Gaussian
weight e^{-|x|^2/4}, and provides arclength refinement and the Gaussian
weighted inner product.

Sign conventions: the unit normal is nu = sign * R(T) where R is rotation by
+90 degrees, and curvatures are measured with respect to the shape operator
S = -D nu, so a sphere bounding a ball with inward normal has positive
principal curvatures and positive mean curvature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from ._errors import ValidationError

SCHEMA_VERSION = 1

#: end tags a profile may carry, one per open end
END_TAGS = ("conical", "cylindrical", "truncated")

# Node spacings below this multiple of the profile diameter are rejected.
_SPACING_FLOOR = 1e-12


@dataclass
class ProfileGeometry:
    """Discrete generating curve of a rotational surface or a planar curve.

    Parameters
    ----------
    n : int
        Hypersurface dimension, 1 (planar curve) or 2 (surface of revolution).
    nodes : (N, 2) float array
        Ordered node coordinates, (r, z) for n = 2 with r >= 0, or (x, y)
        for n = 1.
    closed : bool
        Whether the last node connects back to the first.
    ends : list of dict
        One descriptor per open end, e.g. ``{"tag": "truncated"}``.  Must be
        empty exactly when the profile is closed.
    normal_sign : int
        +1 or -1; the unit normal is ``normal_sign * R(T)`` with R the
        rotation by +90 degrees in the profile plane.
    """

    n: int
    nodes: np.ndarray
    closed: bool
    ends: list = field(default_factory=list)
    normal_sign: int = 1
    metadata: dict = field(default_factory=dict)
    # Optional exact field provider attached by analytic constructors or the
    # shooter; maps node index array -> dict of exact geometry fields.
    exact_fields: "GeometryFields | None" = None

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.validate()

    # -- invariants ------------------------------------------------------
    def validate(self):
        if self.n not in (1, 2):
            raise ValidationError(f"dimension n must be 1 or 2, got {self.n}")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValidationError("nodes must be an (N, 2) array")
        if len(self.nodes) < 8:
            raise ValidationError("need at least 8 nodes")
        if self.closed and self.ends:
            raise ValidationError("closed profile must not carry end tags")
        if not self.closed and len(self.ends) not in (0, 1, 2):
            raise ValidationError("open profile carries at most two end tags")
        for e in self.ends:
            if e.get("tag") not in END_TAGS:
                raise ValidationError(f"unknown end tag {e.get('tag')!r}")
        if self.normal_sign not in (-1, 1):
            raise ValidationError("normal_sign must be +1 or -1")
        h = self.spacings()
        scale = max(np.abs(self.nodes).max(), 1.0)
        if h.min() <= _SPACING_FLOOR * scale:
            raise ValidationError("degenerate node spacing")
        if self.n == 2:
            r = self.nodes[:, 0]
            if r.min() < -_SPACING_FLOOR:
                raise ValidationError("rotational profile requires r >= 0")
            interior = np.ones(len(r), dtype=bool)
            if not self.closed:
                interior[0] = interior[-1] = False
            if np.any(r[interior] <= _SPACING_FLOOR * scale):
                raise ValidationError("r = 0 at a non-cap interior node")

    # -- basic measures --------------------------------------------------
    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def segments(self) -> np.ndarray:
        """Edge vectors; includes the wrap-around edge for closed profiles."""
        if self.closed:
            return np.roll(self.nodes, -1, axis=0) - self.nodes
        return np.diff(self.nodes, axis=0)

    def spacings(self) -> np.ndarray:
        return np.linalg.norm(self.segments(), axis=1)

    def arclength(self) -> float:
        return float(self.spacings().sum())

    def cumulative_arclength(self) -> np.ndarray:
        """Arclength parameter of each node (first node at 0)."""
        h = np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(h)])

    def is_uniform(self, rtol: float = 1e-3) -> bool:
        # Chord lengths of an arclength-equispaced smooth curve vary at
        # O(h^3), so the tolerance is loose relative to exact equality.
        h = self.spacings()
        return bool(np.ptp(h) <= rtol * h.mean())

    def has_axis_cap(self, which: int) -> bool:
        """True if the first (which=0) or last (which=-1) node sits on the axis."""
        if self.n != 2 or self.closed:
            return False
        scale = max(np.abs(self.nodes).max(), 1.0)
        return bool(self.nodes[which, 0] <= 1e-9 * scale)

    # -- serialization ---------------------------------------------------
    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "closed": self.closed,
            "ends": self.ends,
            "normal_sign": self.normal_sign,
            "nodes": [[float(a), float(b)] for a, b in self.nodes],
            "metadata": self.metadata,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ProfileGeometry":
        version = doc.get("schema_version")
        if not isinstance(version, int) or version > SCHEMA_VERSION:
            raise ValidationError(
                f"unsupported profile schema_version {version!r}")
        return cls(
            n=doc["n"],
            nodes=np.asarray(doc["nodes"], dtype=float),
            closed=doc["closed"],
            ends=doc.get("ends", []),
            normal_sign=doc.get("normal_sign", 1),
            metadata=doc.get("metadata", {}),
        )

    @classmethod
    def load(cls, path) -> "ProfileGeometry":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"truncated or malformed file: {exc}")
        return cls.from_json_dict(doc)


@dataclass
class GeometryFields:
    """Pointwise geometric data of a profile.

    ``k2`` is the rotational principal curvature and is identically zero for
    n = 1 (where it does not contribute to H or |A|^2 either).  ``measure``
    is the per-node quadrature weight of the induced measure: dual-cell
    length times 2*pi*r for n = 2, dual-cell length for n = 1.
    """

    T: np.ndarray        # (N, 2) unit tangent
    nu: np.ndarray       # (N, 2) unit normal
    k1: np.ndarray       # profile principal curvature
    k2: np.ndarray       # rotational principal curvature (zeros for n = 1)
    H: np.ndarray        # mean curvature k1 + k2
    A2: np.ndarray       # |A|^2 = k1^2 + k2^2
    absx: np.ndarray     # |x|
    xT: np.ndarray       # x . T
    xnu: np.ndarray      # x . nu
    measure: np.ndarray  # induced-measure quadrature weight per node
    gauss: np.ndarray    # e^{-|x|^2/4}
    cell: np.ndarray     # dual-cell arclength per node
    source: str = "fd"   # "fd", "fourier", or "exact"

    def shrinker_residual(self) -> np.ndarray:
        """Pointwise shrinker residual H + x.nu/2."""
        return self.H + 0.5 * self.xnu


# ---------------------------------------------------------------------------
# differentiation kernels
# ---------------------------------------------------------------------------

def _fourier_derivative(values: np.ndarray, length: float, order: int = 1):
    n = values.shape[0]
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=length / n)
    spec = np.fft.rfft(values) * (1j * k) ** order
    return np.fft.irfft(spec, n=n)


def _fd_first(values: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Second-order first derivative on a possibly non-uniform open grid."""
    out = np.empty_like(values)
    h1 = s[1:-1] - s[:-2]
    h2 = s[2:] - s[1:-1]
    out[1:-1] = (
        -h2 / (h1 * (h1 + h2)) * values[:-2]
        + (h2 - h1) / (h1 * h2) * values[1:-1]
        + h1 / (h2 * (h1 + h2)) * values[2:]
    )
    # one-sided second order at the ends
    a, b = s[1] - s[0], s[2] - s[0]
    out[0] = (
        -(a + b) / (a * b) * values[0]
        + b / (a * (b - a)) * values[1]
        - a / (b * (b - a)) * values[2]
    )
    a, b = s[-1] - s[-2], s[-1] - s[-3]
    out[-1] = (
        (a + b) / (a * b) * values[-1]
        - b / (a * (b - a)) * values[-2]
        + a / (b * (b - a)) * values[-3]
    )
    return out


def derivative_on_profile(profile: ProfileGeometry, values: np.ndarray,
                          order: int = 1) -> np.ndarray:
    """Arclength derivative of a node field, spectral on closed uniform grids."""
    values = np.asarray(values, dtype=float)
    if profile.closed and profile.is_uniform():
        return _fourier_derivative(values, profile.arclength(), order)
    s = profile.cumulative_arclength()
    out = values
    for _ in range(order):
        out = _fd_first(out, s)
    return out


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def compute_geometry(profile: ProfileGeometry, method: str = "auto") -> GeometryFields:
    """Populate all geometry fields of a profile.

    Parameters
    ----------
    profile : ProfileGeometry
    method : {"auto", "fd", "fourier", "exact"}
        "auto" uses attached exact fields when present, Fourier
        differentiation on closed uniform grids, and second-order finite
        differences otherwise.  "fd" forces the finite-difference stencils
        (used by refinement-convergence studies and residual recomputation).

    The rotational curvature at an axis cap is evaluated by the L'Hopital
    limit k2 = -d(nu_r)/ds / d(r)/ds, which equals the profile curvature at
    a smooth cap.
    """
    if method == "auto" and profile.exact_fields is not None:
        return profile.exact_fields
    if method == "exact":
        if profile.exact_fields is None:
            raise ValidationError("profile carries no exact geometry fields")
        return profile.exact_fields
    profile.validate()

    use_fourier = (method in ("auto", "fourier")) and profile.closed \
        and profile.is_uniform()
    if method == "fourier" and not use_fourier:
        raise ValidationError("fourier geometry requires a closed uniform profile")

    x = profile.nodes
    if use_fourier:
        L = profile.arclength()
        xp = np.stack([_fourier_derivative(x[:, 0], L), _fourier_derivative(x[:, 1], L)], axis=1)
        xpp = np.stack([_fourier_derivative(x[:, 0], L, 2), _fourier_derivative(x[:, 1], L, 2)], axis=1)
        source = "fourier"
    else:
        s = profile.cumulative_arclength()
        xp = np.stack([_fd_first(x[:, 0], s), _fd_first(x[:, 1], s)], axis=1)
        xpp = np.stack([_fd_first(xp[:, 0], s), _fd_first(xp[:, 1], s)], axis=1)
        source = "fd"

    speed = np.linalg.norm(xp, axis=1)
    T = xp / speed[:, None]
    nu = profile.normal_sign * np.stack([-T[:, 1], T[:, 0]], axis=1)
    # curvature of the profile curve with respect to nu
    k1 = np.einsum("ij,ij->i", xpp, nu) / speed**2

    if profile.n == 2:
        r = x[:, 0]
        k2 = np.zeros_like(k1)
        body = r > 1e-9 * max(np.abs(x).max(), 1.0)
        k2[body] = -nu[body, 0] / r[body]
        if np.any(~body):
            # axis caps: L'Hopital limit of -nu_r / r
            dnur = derivative_on_profile(profile, nu[:, 0])
            dr = derivative_on_profile(profile, r)
            idx = np.where(~body)[0]
            k2[idx] = -dnur[idx] / dr[idx]
    else:
        k2 = np.zeros_like(k1)

    return _finish_fields(profile, T, nu, k1, k2, source)


def _finish_fields(profile, T, nu, k1, k2, source) -> GeometryFields:
    x = profile.nodes
    absx = np.linalg.norm(x, axis=1)
    xT = np.einsum("ij,ij->i", x, T)
    xnu = np.einsum("ij,ij->i", x, nu)
    cell = dual_cell_lengths(profile)
    if profile.n == 2:
        measure = cell * 2.0 * np.pi * x[:, 0]
    else:
        measure = cell.copy()
    gauss = np.exp(-0.25 * absx**2)
    H = k1 + k2
    A2 = k1**2 + k2**2
    return GeometryFields(T=T, nu=nu, k1=k1, k2=k2, H=H, A2=A2, absx=absx,
                          xT=xT, xnu=xnu, measure=measure, gauss=gauss,
                          cell=cell, source=source)


def dual_cell_lengths(profile: ProfileGeometry) -> np.ndarray:
    """Trapezoidal dual-cell lengths (half-cells at open ends)."""
    h = np.linalg.norm(np.diff(profile.nodes, axis=0), axis=1)
    n = profile.node_count
    cell = np.zeros(n)
    if profile.closed:
        hw = np.linalg.norm(profile.nodes[0] - profile.nodes[-1])
        cell[0] = 0.5 * (hw + h[0])
        cell[-1] = 0.5 * (h[-1] + hw)
    else:
        cell[0] = 0.5 * h[0]
        cell[-1] = 0.5 * h[-1]
    cell[1:-1] = 0.5 * (h[:-1] + h[1:])
    return cell


def analytic_fields(profile: ProfileGeometry, k1, k2, T=None, nu=None) -> GeometryFields:
    """Assemble GeometryFields from closed-form curvatures (and optionally frames).

    Frames default to finite-difference evaluations when not supplied;
    constructors of exact models pass everything in closed form.
    """
    if T is None or nu is None:
        base = compute_geometry(profile, method="fd" if not profile.closed else "auto")
        T = base.T if T is None else T
        nu = base.nu if nu is None else nu
    k1 = np.broadcast_to(np.asarray(k1, dtype=float), (profile.node_count,)).copy()
    k2 = np.broadcast_to(np.asarray(k2, dtype=float), (profile.node_count,)).copy()
    return _finish_fields(profile, np.asarray(T, float), np.asarray(nu, float),
                          k1, k2, "exact")


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def resample_arclength(profile: ProfileGeometry, count: int) -> ProfileGeometry:
    """Arclength-equispaced resampling with cubic interpolation of positions."""
    if count < 8:
        raise ValidationError("resampling needs at least 8 nodes")
    s = profile.cumulative_arclength()
    if profile.closed:
        # periodic spline through the closed polygon
        hw = np.linalg.norm(profile.nodes[0] - profile.nodes[-1])
        sp = np.concatenate([s, [s[-1] + hw]])
        pts = np.vstack([profile.nodes, profile.nodes[:1]])
        length = sp[-1]
        spl = CubicSpline(sp, pts, axis=0, bc_type="periodic")
        snew = np.arange(count) * (length / count)
    else:
        spl = make_interp_spline(s, profile.nodes, k=3, axis=0)
        snew = np.linspace(0.0, s[-1], count)
    nodes = spl(snew)
    if profile.n == 2:
        nodes[:, 0] = np.maximum(nodes[:, 0], 0.0)
        if profile.has_axis_cap(0):
            nodes[0, 0] = 0.0
        if profile.has_axis_cap(-1):
            nodes[-1, 0] = 0.0
    return replace(profile, nodes=nodes, exact_fields=None,
                   metadata=dict(profile.metadata))


def refine(profile: ProfileGeometry, factor: int) -> ProfileGeometry:
    """Multiply the node count by an integer factor >= 2, preserving end tags."""
    if not isinstance(factor, (int, np.integer)) or factor < 2:
        raise ValidationError("refinement factor must be an integer >= 2")
    return resample_arclength(profile, int(factor) * profile.node_count)


# ---------------------------------------------------------------------------
# weighted inner product
# ---------------------------------------------------------------------------

def weighted_inner(f, g, geom: GeometryFields, n: int | None = None) -> float:
    """Gaussian weighted inner product (4 pi)^{-n/2} \\int f g e^{-|x|^2/4} dmu.

    Trapezoidal quadrature on the induced measure.  ``n`` defaults to 2 when
    the rotational measure was used and can be passed explicitly.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.shape != geom.gauss.shape:
        raise ValidationError("mismatched node counts in weighted_inner")
    if n is None:
        n = 2 if np.any(geom.measure != geom.cell) else 1
    norm = (4.0 * np.pi) ** (-0.5 * n)
    return float(norm * np.sum(f * g * geom.gauss * geom.measure))


def weighted_norm(f, geom: GeometryFields, n: int | None = None) -> float:
    return float(np.sqrt(max(weighted_inner(f, f, geom, n=n), 0.0)))


def gaussian_area(profile: ProfileGeometry, geom: GeometryFields | None = None) -> float:
    """Gaussian-weighted area (4 pi)^{-n/2} \\int e^{-|x|^2/4} dmu."""
    if geom is None:
        geom = compute_geometry(profile)
    ones = np.ones(profile.node_count)
    return weighted_inner(ones, ones, geom, n=profile.n)
