"""Velocity fields driving the transport problem.

Two variants: the analytic laminar (Poiseuille) profile directed down the
unit square, and a discrete Darcy field obtained from a variable-permeability
pressure solve on a fine grid.  Both expose pointwise velocity evaluation and
traverse-time estimation along streamlines, which feeds the norm-equivalence
constants of the error certificate.
"""

import logging
from dataclasses import dataclass

import numpy as np

from uwrom import fem, mesh as meshmod

log = logging.getLogger(__name__)


class TraverseEstimationError(RuntimeError):
    """No streamline seed reached the outflow boundary within the time cap."""


@dataclass
class TraverseTimes:
    t_min: float
    t_max: float
    capped: bool


def poincare_constant(times):
    """Upper bound 2*T_max + max(1 - T_min, 0) for the graph-norm Poincare
    constant of an outflow-filling field."""
    return 2.0 * times.t_max + max(1.0 - times.t_min, 0.0)


class PoiseuilleFlow:
    """b(x,y) = (0, -(R^2 - r^2)/(4 eta)) with r = |x - 1/2|.

    Vertical laminar profile, inflow across the top edge, no-slip at the side
    walls (where the traverse time degenerates).
    """

    geometry = "poiseuille"

    def __init__(self, radius=0.5, eta=0.2):
        self.radius = radius
        self.eta = eta
        # analytic field has no grid; streamline step uses a fixed fine scale
        self.length_scale = 1.0 / 64.0

    def profile(self, x):
        r = np.abs(np.asarray(x) - 0.5)
        return (self.radius**2 - r**2) / (4.0 * self.eta)

    def velocity_at(self, points):
        pts = np.asarray(points, dtype=float)
        shape = pts.shape
        flat = pts.reshape(-1, 2)
        out = np.zeros_like(flat)
        out[:, 1] = -self.profile(flat[:, 0])
        return out.reshape(shape)

    def max_speed(self):
        return self.radius**2 / (4.0 * self.eta)


class DarcyFlow:
    """Velocity b = -k grad(p) from a fine-grid pressure solve.

    Pointwise evaluation locates the containing fine element and differentiates
    the pressure there; points outside the closed square are clamped onto it
    (needed when streamline integration steps graze the boundary).
    """

    geometry = "darcy"

    def __init__(self, space, pressure, k_w, k_c):
        self.space = space
        self.pressure = pressure
        self.k_w = k_w
        self.k_c = k_c
        self.length_scale = space.mesh.h
        self._max_speed = None

    def permeability_at(self, points):
        pts = np.atleast_2d(points)
        tags = self.space.mesh.tags[self.space.mesh.element_of_point(pts)]
        k = np.ones(len(pts))
        k[tags == meshmod.WASHCOAT] = self.k_w
        k[tags == meshmod.COATING] = self.k_c
        return k

    def velocity_at(self, points):
        pts = np.asarray(points, dtype=float)
        shape = pts.shape
        flat = np.clip(pts.reshape(-1, 2), 0.0, 1.0)
        _, grad = fem.evaluate_field(self.space, self.pressure, flat)
        b = -self.permeability_at(flat)[:, None] * grad
        return b.reshape(shape)

    def max_speed(self):
        if self._max_speed is None:
            qr = fem.QuadratureRule(fem.default_q_ord(self.space.k))
            pts = fem.volume_points(self.space, qr).reshape(-1, 2)
            self._max_speed = float(
                np.linalg.norm(self.velocity_at(pts), axis=1).max()
            )
        return self._max_speed


def poiseuille_velocity(points, radius=0.5, eta=0.2):
    """Analytic profile velocity at the given points."""
    return PoiseuilleFlow(radius, eta).velocity_at(points)


def solve_darcy(mesh_fine, k_w=0.2, k_c=0.05, order=2):
    """Pressure solve of the heterogeneous-permeability Darcy model.

    p = 1 on the inflow part, p = 0 on the outflow part, natural (no-flux)
    condition on the characteristic boundary; permeability 1 in the free
    region, k_w in the washcoat, k_c in the coating.
    """
    if not (0.0 < k_c <= k_w < 1.0):
        raise ValueError(f"permeabilities must satisfy 0 < k_c <= k_w < 1, "
                         f"got k_w={k_w}, k_c={k_c}")
    space = fem.LagrangeSpace(mesh_fine, order)
    coeff = np.ones(mesh_fine.n_el)
    coeff[mesh_fine.tags == meshmod.WASHCOAT] = k_w
    coeff[mesh_fine.tags == meshmod.COATING] = k_c
    K = fem.stiffness_matrix(space, coeff=coeff)

    facets = meshmod.classify_boundary(mesh_fine, "darcy")
    dirichlet = np.full(space.n, np.nan)
    for f in facets:
        if f.tag == meshmod.CHARACTERISTIC:
            continue
        dofs = space.elem2dof[f.element][fem.face_local_dofs(space.k, f.face)]
        dirichlet[dofs] = 1.0 if f.tag == meshmod.INFLOW else 0.0

    fixed = np.isfinite(dirichlet)
    free = ~fixed
    p = np.zeros(space.n)
    p[fixed] = dirichlet[fixed]
    rhs = -K[free][:, fixed] @ p[fixed]
    p[free] = fem.solve_spd(K[free][:, free], rhs)

    lo, hi = p.min(), p.max()
    if lo < -1e-8 or hi > 1.0 + 1e-8:
        log.warning("Darcy pressure violates the discrete maximum principle: "
                    "range [%.3e, %.3e]", lo, hi)
    return DarcyFlow(space, p, k_w, k_c)


def normal_velocity(flow, facet, t):
    """b.n at facet parameters t; exactly zero on characteristic facets."""
    t = np.atleast_1d(t)
    if facet.tag == meshmod.CHARACTERISTIC:
        return np.zeros(t.size)
    b = flow.velocity_at(facet.points_at(t))
    return b @ facet.normal


def facet_flux(flow, facets, tag, q_ord=6):
    """Signed flux int b.n ds over all facets with the given tag."""
    t, w = fem.gauss_1d(q_ord)
    total = 0.0
    for f in facets:
        if f.tag != tag:
            continue
        total += f.length * float(w @ normal_velocity(flow, f, t))
    return total


def _inflow_seed_points(geometry, s):
    s = np.asarray(s)
    if geometry == "poiseuille":
        return np.column_stack([s, np.ones_like(s)])
    return np.column_stack([np.zeros_like(s), 0.75 + 0.25 * s])


def estimate_traverse_times(flow, n_seeds=64, t_cap=100.0):
    """Extremal streamline traverse times from inflow to outflow.

    Integrates the velocity field with the classical 4th-order Runge-Kutta
    one-step method (step h/(2 max|b|)) from ``n_seeds`` points spread
    uniformly over the inflow boundary, offset from the endpoints by half a
    seed spacing.  Seeds that do not exit within ``t_cap`` set the cap flag
    and are excluded from the maximum.
    """
    if n_seeds < 2:
        raise ValueError(f"need at least 2 seeds, got {n_seeds}")
    if t_cap <= 0:
        raise ValueError(f"time cap must be positive, got {t_cap}")
    s = (np.arange(n_seeds) + 0.5) / n_seeds
    pos = _inflow_seed_points(flow.geometry, s)
    dt = flow.length_scale / (2.0 * flow.max_speed())
    n_steps = int(np.ceil(t_cap / dt))

    exit_times = np.full(n_seeds, np.nan)
    active = np.ones(n_seeds, dtype=bool)
    t = 0.0
    for _ in range(n_steps):
        if not active.any():
            break
        p = pos[active]
        k1 = flow.velocity_at(p)
        k2 = flow.velocity_at(np.clip(p + 0.5 * dt * k1, 0.0, 1.0))
        k3 = flow.velocity_at(np.clip(p + 0.5 * dt * k2, 0.0, 1.0))
        k4 = flow.velocity_at(np.clip(p + dt * k3, 0.0, 1.0))
        new = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if flow.geometry == "poiseuille":
            crossing = new[:, 1] < 0.0
            denom = p[:, 1] - new[:, 1]
            alpha = np.divide(p[:, 1], denom, out=np.ones_like(denom),
                              where=denom != 0.0)
            in_outflow = np.ones(len(p), dtype=bool)
        else:
            crossing = new[:, 0] > 1.0
            denom = new[:, 0] - p[:, 0]
            alpha = np.divide(1.0 - p[:, 0], denom, out=np.ones_like(denom),
                              where=denom != 0.0)
            y_exit = p[:, 1] + alpha * (new[:, 1] - p[:, 1])
            in_outflow = (y_exit > 0.0) & (y_exit < 0.25)

        exited = crossing & in_outflow
        idx = np.flatnonzero(active)
        exit_times[idx[exited]] = t + alpha[exited] * dt
        still = ~exited
        pos[idx[still]] = np.clip(new[still], 0.0, 1.0)
        active[idx[exited]] = False
        t += dt

    done = np.isfinite(exit_times)
    if not done.any():
        raise TraverseEstimationError(
            f"no streamline reached the outflow within t_cap={t_cap}")
    return TraverseTimes(
        t_min=float(exit_times[done].min()),
        t_max=float(exit_times[done].max()),
        capped=bool((~done).any()),
    )


def write_velocity_csv(flow, path, n=64):
    """Dump the velocity on an n x n cell-center grid as x,y,bx,by."""
    s = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(s, s, indexing="xy")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    b = flow.velocity_at(pts)
    with open(path, "w") as fh:
        fh.write("x,y,bx,by\n")
        for (x, y), (bx, by) in zip(pts, b):
            fh.write(f"{x:.17g},{y:.17g},{bx:.17g},{by:.17g}\n")
    return path
