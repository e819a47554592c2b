"""Model self-shrinkers and certification of the shrinker equation.

A self-shrinker satisfies H + x.nu/2 = 0.  This module builds the exact
models (sphere of radius 2, cylinder of radius sqrt(2), circle of radius
sqrt(2), plane, line), traces rotationally symmetric shrinkers by shooting
the profile ODE, locates the compact genus-1 torus by closure bisection,
and certifies profiles by their pointwise shrinker residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ._errors import NonConvergenceError, ValidationError
from .profiles import (GeometryFields, ProfileGeometry, analytic_fields,
                       compute_geometry, weighted_norm)

#: default truncation half-length of the cylinder model; the Gaussian weight
#: at the cut is e^{-Z^2/4} < 2e-8, below every quadrature tolerance used here
CYLINDER_HALF_LENGTH = 6.0 * math.sqrt(2.0)

#: default radius of the plane / line models
FLAT_RADIUS = 8.0

MODELS = ("sphere", "cylinder", "plane", "line", "circle", "torus",
          "conical", "custom")


@dataclass
class ShrinkerSurface:
    """A profile certified against the shrinker equation."""

    profile: ProfileGeometry
    geom: GeometryFields
    residual_report: dict
    model: str = "custom"
    end_classification: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.profile.n

    def max_abs_A(self) -> float:
        return float(np.sqrt(self.geom.A2).max())


@dataclass
class ShootingState:
    """Initial data and controls for the rotational shrinker shooter."""

    r0: float
    z0: float = 0.0
    theta0: float = math.pi / 2
    tolerance: float = 1e-12
    s_max: float = 40.0
    events: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# profile ODE:  tangent angle theta, T = (cos th, sin th), nu = (-sin th, cos th)
# k1 = th', k2 = sin th / r, x.nu = -r sin th + z cos th
# shrinker equation  =>  th' = -(sin th / r + (z cos th - r sin th)/2)
# ---------------------------------------------------------------------------

def _shrinker_rhs(s, y):
    r, z, th = y
    st, ct = math.sin(th), math.cos(th)
    return (ct, st, -(st / r + 0.5 * (z * ct - r * st)))


def shoot_rotational(state: ShootingState):
    """Integrate the rotational shrinker profile ODE with adaptive stepping.

    Returns the scipy solution object (dense output enabled) together with an
    event log.  The trajectory terminates when it hits the axis r = 0
    transversally or leaves the ball |x| <= s_max.
    """
    if state.r0 <= 0:
        raise ValidationError("shooting requires r0 > 0")
    if state.tolerance <= 0:
        raise ValidationError("shooting requires a positive tolerance")

    def hit_axis(s, y):
        return y[0] - 1e-6

    hit_axis.terminal = True
    hit_axis.direction = -1

    def far_away(s, y):
        return np.hypot(y[0], y[1]) - 4.0 * state.s_max

    far_away.terminal = True

    def z_crossing(s, y):
        return y[1]

    z_crossing.terminal = False
    z_crossing.direction = -1

    sol = solve_ivp(_shrinker_rhs, [0.0, state.s_max],
                    [state.r0, state.z0, state.theta0],
                    rtol=state.tolerance, atol=state.tolerance * 1e-2,
                    dense_output=True, method="DOP853",
                    events=[hit_axis, far_away, z_crossing], max_step=0.05)
    log = {
        "hit_axis": sol.t_events[0].tolist(),
        "left_domain": sol.t_events[1].tolist(),
        "z_crossings": sol.t_events[2].tolist(),
        "status": int(sol.status),
    }
    return sol, log


def _profile_from_solution(sol, s_grid, n=2, closed=False, ends=None,
                           normal_sign=1, metadata=None) -> ProfileGeometry:
    y = sol.sol(s_grid)
    nodes = np.stack([y[0], y[1]], axis=1)
    prof = ProfileGeometry(n=n, nodes=nodes, closed=closed, ends=ends or [],
                           normal_sign=normal_sign, metadata=metadata or {})
    return prof


# ---------------------------------------------------------------------------
# exact models
# ---------------------------------------------------------------------------

def _sphere(node_count, radius=2.0):
    s = np.linspace(0.0, math.pi * radius, node_count)
    psi = s / radius
    nodes = np.stack([radius * np.sin(psi), -radius * np.cos(psi)], axis=1)
    prof = ProfileGeometry(n=2, nodes=nodes, closed=False, ends=[],
                           normal_sign=1, metadata={"model": "sphere",
                                                    "radius": radius})
    T = np.stack([np.cos(psi), np.sin(psi)], axis=1)
    nu = np.stack([-T[:, 1], T[:, 0]], axis=1)
    k = 1.0 / radius
    prof.exact_fields = analytic_fields(prof, k, k, T=T, nu=nu)
    return prof


def _circle(node_count, radius=math.sqrt(2.0)):
    t = np.arange(node_count) * (2.0 * math.pi / node_count)
    nodes = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    prof = ProfileGeometry(n=1, nodes=nodes, closed=True, ends=[],
                           normal_sign=1, metadata={"model": "circle",
                                                    "radius": radius})
    T = np.stack([-np.sin(t), np.cos(t)], axis=1)
    nu = np.stack([-T[:, 1], T[:, 0]], axis=1)   # inward
    prof.exact_fields = analytic_fields(prof, 1.0 / radius, 0.0, T=T, nu=nu)
    return prof


def _cylinder(node_count, radius=math.sqrt(2.0), half_length=CYLINDER_HALF_LENGTH):
    z = np.linspace(-half_length, half_length, node_count)
    nodes = np.stack([np.full_like(z, radius), z], axis=1)
    ends = [{"tag": "truncated"}, {"tag": "truncated"}]
    prof = ProfileGeometry(n=2, nodes=nodes, closed=False, ends=ends,
                           normal_sign=1,
                           metadata={"model": "cylinder", "radius": radius,
                                     "half_length": half_length})
    T = np.stack([np.zeros_like(z), np.ones_like(z)], axis=1)
    nu = np.stack([-np.ones_like(z), np.zeros_like(z)], axis=1)  # toward axis
    prof.exact_fields = analytic_fields(prof, 0.0, 1.0 / radius, T=T, nu=nu)
    return prof


def _plane(node_count, radius=FLAT_RADIUS):
    r = np.linspace(0.0, radius, node_count)
    nodes = np.stack([r, np.zeros_like(r)], axis=1)
    ends = [{"tag": "truncated"}]
    prof = ProfileGeometry(n=2, nodes=nodes, closed=False, ends=ends,
                           normal_sign=1,
                           metadata={"model": "plane", "radius": radius})
    T = np.stack([np.ones_like(r), np.zeros_like(r)], axis=1)
    nu = np.stack([np.zeros_like(r), np.ones_like(r)], axis=1)
    prof.exact_fields = analytic_fields(prof, 0.0, 0.0, T=T, nu=nu)
    return prof


def _line(node_count, radius=FLAT_RADIUS):
    x = np.linspace(-radius, radius, node_count)
    nodes = np.stack([x, np.zeros_like(x)], axis=1)
    ends = [{"tag": "truncated"}, {"tag": "truncated"}]
    prof = ProfileGeometry(n=1, nodes=nodes, closed=False, ends=ends,
                           normal_sign=1,
                           metadata={"model": "line", "radius": radius})
    T = np.stack([np.ones_like(x), np.zeros_like(x)], axis=1)
    nu = np.stack([np.zeros_like(x), np.ones_like(x)], axis=1)
    prof.exact_fields = analytic_fields(prof, 0.0, 0.0, T=T, nu=nu)
    return prof


# ---------------------------------------------------------------------------
# torus search
# ---------------------------------------------------------------------------

def _torus_closure_gap(r0: float, tolerance: float):
    """Angle defect at the next downward z = 0 crossing, starting vertically."""
    def hit(s, y):
        return y[1]

    hit.terminal = True
    hit.direction = -1
    sol = solve_ivp(_shrinker_rhs, [0.0, 20.0], [r0, 0.0, math.pi / 2],
                    rtol=tolerance, atol=tolerance * 1e-2,
                    dense_output=True, method="DOP853", events=hit,
                    max_step=0.05)
    if sol.t_events[0].size == 0:
        raise NonConvergenceError(
            f"torus shot from r0={r0} did not return to z = 0")
    th_end = sol.y_events[0][0][2]
    gap = (th_end + math.pi / 2 + math.pi) % (2.0 * math.pi) - math.pi
    return gap, sol


def find_torus_profile(node_count: int = 512, tolerance: float = 1e-12,
                       bracket=(0.3, 0.7)) -> ProfileGeometry:
    """Locate the compact genus-1 rotational shrinker by closure bisection.

    The profile is symmetric about z = 0, so two-parameter shooting reduces
    to one parameter: the inner equator radius r0.  The closed curve is the
    upper half trace glued to its mirror image, resampled at equispaced
    arclength directly from the dense ODE output.
    """
    def gap(r0):
        return _torus_closure_gap(r0, tolerance)[0]

    try:
        r0 = brentq(gap, *bracket, xtol=1e-14, rtol=8.9e-16)
    except ValueError as exc:
        raise NonConvergenceError(f"torus closure bracket failed: {exc}")
    residual_gap, sol = _torus_closure_gap(r0, tolerance)
    s_half = sol.t_events[0][0]
    length = 2.0 * s_half
    s = np.arange(node_count) * (length / node_count)
    upper = sol.sol(np.minimum(s, s_half))
    lower = sol.sol(np.clip(length - s, 0.0, s_half))
    top = s <= s_half
    r = np.where(top, upper[0], lower[0])
    z = np.where(top, upper[1], -lower[1])
    prof = ProfileGeometry(
        n=2, nodes=np.stack([r, z], axis=1), closed=True, ends=[],
        normal_sign=1,
        metadata={"model": "torus", "inner_radius": float(r0),
                  "outer_radius": float(sol.y_events[0][0][0]),
                  "closure_gap": float(abs(residual_gap)),
                  "ode_tolerance": tolerance})
    return prof


def _conical_shot(node_count, direction=0.4, start_radius=12.0,
                  tolerance=1e-12) -> ProfileGeometry:
    """Trace a rotational shrinker piece with an asymptotically conical end.

    Conical ends repel outward shooting (deviations grow like e^{|x|^2/4}),
    so the piece is traced inward from exact-cone initial data far out; any
    trajectory of the profile ODE is an exact shrinker, and inward
    integration is stable.  The trace is clipped at the first closest
    approach to the origin, before the trajectory winds around the core.
    """
    r0 = start_radius * math.cos(direction)
    z0 = start_radius * math.sin(direction)
    th0 = direction + math.pi

    def hit_axis(s, y):
        return y[0] - 1e-6

    hit_axis.terminal = True
    hit_axis.direction = -1

    def turnaround(s, y):
        # d|x|^2/ds = 2 x.T; stop when |x| starts growing again
        return y[0] * math.cos(y[2]) + y[1] * math.sin(y[2])

    turnaround.terminal = True
    turnaround.direction = 1

    sol = solve_ivp(_shrinker_rhs, [0.0, 4.0 * start_radius], [r0, z0, th0],
                    rtol=tolerance, atol=tolerance * 1e-2,
                    dense_output=True, method="DOP853",
                    events=[hit_axis, turnaround], max_step=0.05)
    s_end = sol.t[-1]
    # sample inner -> outer so the outer end is the conical one
    s = np.linspace(s_end, 0.0, node_count)
    y = sol.sol(s)
    ends = [{"tag": "truncated"}, {"tag": "truncated"}]
    prof = ProfileGeometry(n=2, nodes=np.stack([y[0], y[1]], axis=1),
                           closed=False, ends=ends, normal_sign=1,
                           metadata={"model": "conical",
                                     "direction": direction,
                                     "start_radius": start_radius,
                                     "ode_tolerance": tolerance})
    return prof


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def certify(profile: ProfileGeometry, model: str = "custom") -> ShrinkerSurface:
    """Compute the shrinker residual and classify the ends of a profile.

    The certified residual uses the best geometry available (analytic fields
    for exact models, spectral differentiation on closed uniform grids); the
    report additionally records the residual recomputed with plain
    second-order finite differences, which is what refinement studies see.
    """
    geom = compute_geometry(profile)
    res = geom.shrinker_residual()
    fd_geom = compute_geometry(profile, method="fd")
    fd_res = fd_geom.shrinker_residual()
    report = {
        "max_res": float(np.abs(res).max()),
        "l2_res": weighted_norm(res, geom, n=profile.n),
        "fd_max_res": float(np.abs(fd_res).max()),
        "field_source": geom.source,
    }
    ends = classify_ends(profile)
    return ShrinkerSurface(profile=profile, geom=geom, residual_report=report,
                           model=model, end_classification=ends)


def classify_ends(profile: ProfileGeometry, window_fraction: float = 0.25,
                  fit_tol: float = 1e-3) -> list:
    """Fit each open end to a cylindrical (r constant) or conical (r linear
    in z, cone through the origin) model on the outer quarter of arclength.

    The reported ``slope`` is the limit of r/z (infinite for a flat plane,
    where z stays 0).  Ambiguous fits keep the tag ``truncated`` and carry
    ``ambiguous: True``.
    """
    if profile.closed:
        return []
    out = []
    count = max(int(window_fraction * profile.node_count), 12)
    for side, sl in (("first", slice(None, count)), ("last", slice(-count, None))):
        r = profile.nodes[sl, 0]
        z = profile.nodes[sl, 1]
        if profile.n == 2 and (r.min() <= 1e-9 * max(np.abs(profile.nodes).max(), 1.0)):
            out.append({"side": side, "kind": "cap"})
            continue
        scale = max(np.abs(r).max(), np.abs(z).max(), 1.0)
        r_spread = np.ptp(r) / scale
        # linear fit r = a z + b against constant fit r = mean
        const_res = np.ptp(r) / 2.0
        A = np.stack([z, np.ones_like(z)], axis=1)
        coef, *_ = np.linalg.lstsq(A, r, rcond=None)
        lin_res = np.abs(A @ coef - r).max()
        cyl_ok = const_res <= fit_tol * scale
        if cyl_ok:
            out.append({"side": side, "kind": "cylindrical",
                        "radius": float(r.mean())})
            continue
        # conical: direction of x stabilizes; slope = lim r/z (inf on a plane)
        absx = np.hypot(r, z)
        ratio = np.where(np.abs(z) > 1e-12 * scale, r / np.where(z == 0, 1, z),
                         np.inf)
        if np.all(np.isfinite(ratio)):
            spread = np.ptp(ratio)
            slope = float(ratio[-1] if side == "last" else ratio[0])
            conical_ok = spread <= 50 * fit_tol * max(abs(slope), 1.0)
        else:
            slope = math.inf
            conical_ok = np.ptp(z) <= fit_tol * scale
        if conical_ok and lin_res <= 50 * fit_tol * scale:
            out.append({"side": side, "kind": "conical", "slope": slope})
        elif cyl_ok and conical_ok:
            out.append({"side": side, "kind": "truncated", "ambiguous": True})
        else:
            out.append({"side": side, "kind": "truncated",
                        "ambiguous": bool(cyl_ok == conical_ok)})
    return out


# ---------------------------------------------------------------------------
# front door
# ---------------------------------------------------------------------------

def make_model(model: str, params: dict | None = None,
               node_count: int = 512) -> ShrinkerSurface:
    """Build a named model shrinker and certify it.

    Supported models: sphere (radius 2), cylinder (radius sqrt 2), circle
    (radius sqrt 2), plane, line, torus (closure search), conical (shot
    non-compact piece).  Non-shrinker parameter choices (e.g. a sphere of a
    different radius) are allowed; the residual report simply records the
    defect.
    """
    params = dict(params or {})
    if node_count < 64:
        raise ValidationError("node_count must be at least 64")
    for key in ("radius", "half_length"):
        if key in params and not params[key] > 0:
            raise ValidationError(f"model parameter {key} must be positive")
    if model == "sphere":
        prof = _sphere(node_count, radius=float(params.pop("radius", 2.0)))
    elif model == "circle":
        prof = _circle(node_count, radius=float(params.pop("radius", math.sqrt(2))))
    elif model == "cylinder":
        prof = _cylinder(node_count,
                         radius=float(params.pop("radius", math.sqrt(2))),
                         half_length=float(params.pop("half_length",
                                                      CYLINDER_HALF_LENGTH)))
    elif model == "plane":
        prof = _plane(node_count, radius=float(params.pop("radius", FLAT_RADIUS)))
    elif model == "line":
        prof = _line(node_count, radius=float(params.pop("radius", FLAT_RADIUS)))
    elif model == "torus":
        prof = find_torus_profile(node_count,
                                  tolerance=float(params.pop("tolerance", 1e-12)))
    elif model == "conical":
        prof = _conical_shot(node_count,
                             direction=float(params.pop("direction", 0.4)),
                             start_radius=float(params.pop("start_radius", 12.0)),
                             tolerance=float(params.pop("tolerance", 1e-12)))
    else:
        raise ValidationError(f"unknown model {model!r}")
    return certify(prof, model=model)
