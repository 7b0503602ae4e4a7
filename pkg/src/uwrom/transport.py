"""Full-order model of the reactive transport problem.

The dual (test-space) unknown w solves the symmetric, coercive normal
equation

    (-b.grad w + c_mu w, -b.grad v + c_mu v) + (w, v)_{out} = f_mu(v),

where (.,.)_{out} is the |b.n|-weighted product on the outflow boundary and
f_mu(v) = g_0 (g_hat, v)_{in}.  The reaction coefficient
c_mu = c_w 1_washcoat + c_c 1_coating makes the operator parameter-separable
with three components, assembled here once into six symmetric blocks; the
primal solution is recovered pointwise as -b.grad w + c_mu w plus its outflow
trace.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from uwrom import fem, flow as flowmod, mesh as meshmod


class DegenerateStreamlineError(ValueError):
    """Streamline oracle evaluated on a no-slip wall (zero velocity)."""


@dataclass(frozen=True)
class Parameter:
    """mu = (c_w, c_c, g_0): reaction rates in washcoat/coating, inflow
    magnitude."""

    c_w: float
    c_c: float
    g_0: float = 1.0

    def astuple(self):
        return (self.c_w, self.c_c, self.g_0)


class ParameterDomain:
    """Admissible parameter sets of the parametrized testcases.

    P.1: c_w in [0,1], c_c = 0, g_0 = 1
    P.2: 0 <= c_c <= c_w <= 1, g_0 = 1
    P.3: as P.2 with g_0 in [1,10]
    """

    NAMES = ("P.1", "P.2", "P.3")

    def __init__(self, name):
        if name not in self.NAMES:
            raise ValueError(f"unknown parameter domain {name!r}")
        self.name = name

    def contains(self, mu, tol=1e-12):
        ok = -tol <= mu.c_c <= mu.c_w <= 1.0 + tol
        if self.name == "P.1":
            ok = ok and abs(mu.c_c) <= tol and abs(mu.g_0 - 1.0) <= tol
        elif self.name == "P.2":
            ok = ok and abs(mu.g_0 - 1.0) <= tol
        else:
            ok = ok and 1.0 - tol <= mu.g_0 <= 10.0 + tol
        return bool(ok)

    @staticmethod
    def _triangle_lattice(n_min):
        m = 1
        while m * (m + 1) // 2 < n_min:
            m += 1
        pts = [(i / (m - 1), j / (m - 1)) for i in range(m) for j in range(i + 1)]
        return pts

    def training_set(self, n_train):
        """Deterministic training grids (uniform line / triangular lattice /
        lattice tensorized with 10 inflow magnitudes)."""
        if n_train < 1:
            raise ValueError("training set must be nonempty")
        if self.name == "P.1":
            return [Parameter(c, 0.0, 1.0) for c in np.linspace(0.0, 1.0, n_train)]
        if self.name == "P.2":
            return [Parameter(cw, cc, 1.0)
                    for cw, cc in self._triangle_lattice(n_train)]
        n_g = 10
        pairs = self._triangle_lattice(max(1, -(-n_train // n_g)))
        gs = np.linspace(1.0, 10.0, n_g)
        return [Parameter(cw, cc, g) for cw, cc in pairs for g in gs]

    def validation_set(self, n_test, seed):
        """i.i.d. uniform samples of the domain with a fixed seed."""
        rng = np.random.default_rng(seed)
        if self.name == "P.1":
            return [Parameter(c, 0.0, 1.0) for c in rng.uniform(0.0, 1.0, n_test)]
        u = np.sort(rng.uniform(0.0, 1.0, (n_test, 2)), axis=1)
        if self.name == "P.2":
            return [Parameter(cw, cc, 1.0) for cc, cw in u]
        gs = rng.uniform(1.0, 10.0, n_test)
        return [Parameter(cw, cc, g) for (cc, cw), g in zip(u, gs)]


def reaction_at(points, mu):
    """Reaction coefficient c_mu at physical points (piecewise constant in
    the compartment bands)."""
    y = np.atleast_2d(points)[:, 1]
    c = np.zeros(y.size)
    c[(y > 0.25) & (y < 0.75)] = mu.c_c
    c[(y > 0.375) & (y < 0.625)] = mu.c_w
    return c


G_PROFILES = {
    "sin4pi_sq": lambda s: np.sin(4.0 * np.pi * s) ** 2,
    "indicator_quarter": lambda s: ((s >= 0.25) & (s <= 0.75)).astype(float),
    "sin_pi_sq": lambda s: np.sin(np.pi * s) ** 2,
}

# symmetrized-block coefficients: combined(mu) = sum_k theta_pair_k * sym_op_k
_SYM_PAIRS = ((1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3))


def theta_a(mu):
    """Coefficients of the adjoint-operator split (identity, washcoat,
    coating)."""
    return np.array([1.0, mu.c_w, mu.c_c])


def theta_pairs(mu):
    th = theta_a(mu)
    return np.array([th[p - 1] * th[q - 1] for p, q in _SYM_PAIRS])


class AffineSystem:
    """Parameter-separable FOM: blocks M^{p,q}, rhs component, Gram matrix,
    and the quadrature caches used for reconstruction and error norms."""

    def __init__(self, space, flow, facets, g_name, q_ord=None):
        if _facets_geometry(facets) != flow.geometry:
            raise ValueError(
                f"facets classified for {_facets_geometry(facets)!r} but flow "
                f"is {flow.geometry!r}")
        if g_name not in G_PROFILES:
            raise ValueError(f"unknown inflow profile {g_name!r}")
        self.space = space
        self.flow = flow
        self.facets = facets
        self.g_name = g_name
        g_unit = G_PROFILES[g_name]
        mesh = space.mesh

        self.qr = fem.QuadratureRule(q_ord or fem.default_q_ord(space.k))
        self.phi, self.dphix, self.dphiy = fem.tabulate(space, self.qr)
        self.qpoints = fem.volume_points(space, self.qr)
        self.bq = flow.velocity_at(self.qpoints)
        self.vol_weights = np.tile(mesh.h**2 * self.qr.wts, mesh.n_el)

        kbb_loc, conv_loc = fem.local_streamline_matrices(space, self.bq, self.qr)
        wmask = mesh.tags == meshmod.WASHCOAT
        cmask = mesh.tags == meshmod.COATING
        k_bb = fem.scatter_element_matrices(space, kbb_loc)
        c_w = fem.scatter_element_matrices(space, conv_loc[wmask],
                                           np.flatnonzero(wmask))
        c_c = fem.scatter_element_matrices(space, conv_loc[cmask],
                                           np.flatnonzero(cmask))
        mloc = fem.local_mass(space, self.qr)
        m_w = fem.scatter_element_matrices(space, mloc, np.flatnonzero(wmask))
        m_c = fem.scatter_element_matrices(space, mloc, np.flatnonzero(cmask))
        m_full = fem.scatter_element_matrices(space, mloc)

        out_facets = meshmod.facets_with_tag(facets, meshmod.OUTFLOW)
        in_facets = meshmod.facets_with_tag(facets, meshmod.INFLOW)
        self.outflow_mass = fem.boundary_mass(
            space, out_facets,
            lambda f, t, pts: np.abs(flowmod.normal_velocity(flow, f, t)),
            q_ord=self.qr.q_ord)

        self.components = {
            (1, 1): (k_bb + self.outflow_mass).tocsr(),
            (1, 2): (-c_w).tocsr(),
            (1, 3): (-c_c).tocsr(),
            (2, 2): m_w.tocsr(),
            (2, 3): sp.csr_matrix((space.n, space.n)),
            (3, 3): m_c.tocsr(),
        }
        # moving the inflow boundary term (where b.n = -|b.n|) to the right
        # hand side makes the load positive for positive inflow data
        self.f1 = fem.boundary_load(
            space, in_facets,
            lambda f, t, pts: G_PROFILES[g_name](f.s_at(t))
            * np.abs(flowmod.normal_velocity(flow, f, t)),
            q_ord=self.qr.q_ord)
        self.gram = (k_bb + m_full).tocsr()

        self.sym_ops = []
        for p, q in _SYM_PAIRS:
            m = self.components[(p, q)]
            self.sym_ops.append(m if p == q else (m + m.T).tocsr())

        # outflow trace tabulation for the primal reconstruction
        t, wt = fem.gauss_1d(self.qr.q_ord)
        tr = fem.face_tabulation(space, 0, t)
        self._trace_dofs = []
        self._trace_tab = tr
        trace_w = []
        trace_pts = []
        for f in out_facets:
            dofs = space.elem2dof[f.element][fem.face_local_dofs(space.k, f.face)]
            self._trace_dofs.append(dofs)
            bn = np.abs(flowmod.normal_velocity(flow, f, t))
            trace_w.append(wt * f.length * bn)
            trace_pts.append(f.points_at(t))
        self.trace_weights = (np.concatenate(trace_w) if trace_w
                              else np.zeros(0))
        self.trace_points = (np.vstack(trace_pts) if trace_pts
                             else np.zeros((0, 2)))

        # unscaled g-profile values for the g-profile consistency tests
        self._g_unit = g_unit

    @property
    def n(self):
        return self.space.n

    def component(self, p, q):
        """M^{p,q} for any ordered pair (transposed storage for p > q)."""
        if p <= q:
            return self.components[(p, q)]
        return self.components[(q, p)].T.tocsr()

    def reaction_per_element(self, mu):
        c = np.zeros(self.space.mesh.n_el)
        c[self.space.mesh.tags == meshmod.WASHCOAT] = mu.c_w
        c[self.space.mesh.tags == meshmod.COATING] = mu.c_c
        return c

    def combined(self, mu):
        """System matrix sum_pq theta_p theta_q M^{p,q}."""
        th = theta_pairs(mu)
        m = th[0] * self.sym_ops[0]
        for c, op in zip(th[1:], self.sym_ops[1:]):
            if c != 0.0:
                m = m + c * op
        return m.tocsr()

    def rhs(self, mu):
        return mu.g_0 * self.f1

    def energy_norm(self, mu, v):
        """Operator-induced norm sqrt(v' A(mu) v)."""
        return float(np.sqrt(max(v @ (self.combined(mu) @ v), 0.0)))


def _facets_geometry(facets):
    for f in facets:
        if f.tag == meshmod.INFLOW:
            return "poiseuille" if f.face == 2 else "darcy"
    raise ValueError("facet list contains no inflow facet")


def assemble_affine(space, flow, facets, g_profile, q_ord=None):
    """Assemble the parameter-separable normal-equation system."""
    return AffineSystem(space, flow, facets, g_profile, q_ord=q_ord)


@dataclass
class FomSolution:
    w: np.ndarray
    mu: Parameter
    solve_time: float
    residual: float


def solve_fom(sys, mu):
    """Solve the combined SPD system for one parameter."""
    t0 = time.perf_counter()
    m = sys.combined(mu)
    rhs = sys.rhs(mu)
    w = fem.factor_spd(m).solve(rhs)
    dt = time.perf_counter() - t0
    nrhs = np.linalg.norm(rhs)
    res = np.linalg.norm(m @ w - rhs) / nrhs if nrhs > 0 else 0.0
    return FomSolution(w=w, mu=mu, solve_time=dt, residual=float(res))


@dataclass
class PrimalField:
    """Primal reconstruction -b.grad w + c_mu w at the volume quadrature
    points plus the outflow trace of w."""

    values: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    trace_values: np.ndarray
    trace_weights: np.ndarray

    def trace_norm(self):
        return float(np.sqrt(self.trace_weights @ self.trace_values**2))


def reconstruct_primal(sys, mu, w):
    """Primal field of a dual coefficient vector (FOM solution or lifted
    reduced solution)."""
    wvec = w.w if isinstance(w, FomSolution) else np.asarray(w)
    wloc = wvec[sys.space.elem2dof]
    dwx = wloc @ sys.dphix.T
    dwy = wloc @ sys.dphiy.T
    wval = wloc @ sys.phi.T
    bgrad = sys.bq[:, :, 0] * dwx + sys.bq[:, :, 1] * dwy
    vals = -bgrad + sys.reaction_per_element(mu)[:, None] * wval
    trace = (np.concatenate([sys._trace_tab @ wvec[d] for d in sys._trace_dofs])
             if sys._trace_dofs else np.zeros(0))
    return PrimalField(
        values=vals.ravel(),
        weights=sys.vol_weights,
        points=sys.qpoints.reshape(-1, 2),
        trace_values=trace,
        trace_weights=sys.trace_weights,
    )


def evaluate_primal(space, w, flow, mu, points):
    """-b.grad w + c_mu w at arbitrary physical points (used to compare a
    fine-grid solution against a coarse quadrature layout)."""
    vals, grads = fem.evaluate_field(space, w, points)
    b = flow.velocity_at(points)
    return -(b[:, 0] * grads[:, 0] + b[:, 1] * grads[:, 1]) \
        + reaction_at(points, mu) * vals


def l2_error(primal, reference):
    """Quadrature-weighted L2 distance of a primal field to a reference
    (callable on points, or a PrimalField on the same layout)."""
    if callable(reference):
        ref = np.asarray(reference(primal.points))
    else:
        if reference.values.shape != primal.values.shape or not np.array_equal(
                reference.points, primal.points):
            raise ValueError("reference field has a different quadrature layout")
        ref = reference.values
    d = primal.values - ref
    return float(np.sqrt(primal.weights @ d**2))


def exact_poiseuille(points, c_w, c_c, g_fn, radius=0.5, eta=0.2):
    """Exact solution of the laminar-profile transport problem.

    Streamlines are vertical lines traversed at constant speed b0(x), so
    u(x,y) = g(x) * exp(-(c_w |[y,1] ^ washcoat| + c_c |[y,1] ^ coating|)/b0(x)).
    """
    pts = np.atleast_2d(points)
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DegenerateStreamlineError(
            "streamline oracle undefined on the no-slip walls x in {0,1}")
    b0 = (radius**2 - (x - 0.5) ** 2) / (4.0 * eta)
    ow = np.maximum(0.0, 0.625 - np.maximum(y, 0.375))
    oc = np.maximum(0.0, 0.75 - np.maximum(y, 0.25)) - ow
    return g_fn(x) * np.exp(-(c_w * ow + c_c * oc) / b0)
