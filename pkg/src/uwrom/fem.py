"""Lagrange tensor-product elements on structured grids.

Provides Q^k spaces (k = 1, 2 for the studies; k = 3 exists for self-reference
solutions), tensor Gauss quadrature, element/facet assembly into scipy sparse
matrices, point evaluation, and an SPD solve with a direct factorization and a
preconditioned-CG fallback.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from uwrom import kernels


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def gauss_1d(q):
    """Gauss-Legendre points/weights on [0,1]; exact to degree 2q-1."""
    if q < 1:
        raise ValueError(f"quadrature order must be >= 1, got {q}")
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


class QuadratureRule:
    """Tensor Gauss rule on the reference square [0,1]^2 (unit measure)."""

    def __init__(self, q_ord):
        self.q_ord = q_ord
        self.pts1d, self.wts1d = gauss_1d(q_ord)
        gx, gy = np.meshgrid(self.pts1d, self.pts1d, indexing="xy")
        self.pts = np.column_stack([gx.ravel(), gy.ravel()])
        self.wts = np.outer(self.wts1d, self.wts1d).ravel()
        self.nq = self.wts.size


def default_q_ord(k):
    """Module default: k+2 points per direction."""
    return k + 2


# ---------------------------------------------------------------------------
# 1D Lagrange bases on equispaced nodes
# ---------------------------------------------------------------------------

def lagrange_nodes(k):
    return np.linspace(0.0, 1.0, k + 1)


def lagrange_1d(nodes, t):
    """Values and derivatives of the nodal basis at points t.

    Returns ``vals[i, j] = L_j(t_i)`` and ``ders[i, j] = L_j'(t_i)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = len(nodes)
    vals = np.ones((t.size, m))
    ders = np.zeros((t.size, m))
    for j in range(m):
        for l in range(m):
            if l == j:
                continue
            vals[:, j] *= (t - nodes[l]) / (nodes[j] - nodes[l])
            term = np.full(t.size, 1.0 / (nodes[j] - nodes[l]))
            for i in range(m):
                if i == j or i == l:
                    continue
                term *= (t - nodes[i]) / (nodes[j] - nodes[i])
            ders[:, j] += term
    return vals, ders


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

class LagrangeSpace:
    """Continuous Q^k space on a structured mesh.

    Global dofs are ordered lexicographically by node coordinates (y-major),
    local dofs on the reference square as ``l = b*(k+1) + a`` with a the
    x-index and b the y-index.
    """

    def __init__(self, mesh, k):
        if k not in (1, 2, 3):
            raise ValueError(f"polynomial order must be 1, 2 or 3, got {k}")
        self.mesh = mesh
        self.k = k
        self.nloc = (k + 1) ** 2
        self.ndof1d = k * mesh.nel1d + 1
        self.n = self.ndof1d**2

        e = np.arange(mesh.n_el)
        gx0 = (e % mesh.nel1d) * k
        gy0 = (e // mesh.nel1d) * k
        l = np.arange(self.nloc)
        la = l % (k + 1)
        lb = l // (k + 1)
        self.elem2dof = ((gy0[:, None] + lb[None, :]) * self.ndof1d
                         + gx0[:, None] + la[None, :])

    @property
    def dof_coords(self):
        s = np.arange(self.ndof1d) / (self.ndof1d - 1)
        gx, gy = np.meshgrid(s, s, indexing="xy")
        return np.column_stack([gx.ravel(), gy.ravel()])


def tabulate(space, qr):
    """Reference basis values and physical derivatives at the rule's points.

    Returns (phi, dphix, dphiy), each of shape (nq, nloc); derivatives carry
    the 1/h chain-rule factor of the structured grid.
    """
    k = space.k
    nodes = lagrange_nodes(k)
    v, d = lagrange_1d(nodes, qr.pts1d)
    nq1 = qr.pts1d.size
    # index layout [gy, gx, b, a] -> (gy*nq1+gx, b*(k+1)+a)
    phi = (v[:, None, :, None] * v[None, :, None, :]).reshape(nq1 * nq1, space.nloc)
    dxi = (v[:, None, :, None] * d[None, :, None, :]).reshape(nq1 * nq1, space.nloc)
    deta = (d[:, None, :, None] * v[None, :, None, :]).reshape(nq1 * nq1, space.nloc)
    inv_h = 1.0 / space.mesh.h
    return phi, dxi * inv_h, deta * inv_h


def volume_points(space, qr, elements=None):
    """Physical quadrature points, shape (nel, nq, 2)."""
    mesh = space.mesh
    if elements is None:
        elements = np.arange(mesh.n_el)
    ex = (elements % mesh.nel1d)[:, None] * mesh.h
    ey = (elements // mesh.nel1d)[:, None] * mesh.h
    pts = np.empty((len(elements), qr.nq, 2))
    pts[:, :, 0] = ex + mesh.h * qr.pts[None, :, 0]
    pts[:, :, 1] = ey + mesh.h * qr.pts[None, :, 1]
    return pts


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def scatter_element_matrices(space, local, elements=None):
    """Sum per-element local matrices into a global CSR matrix.

    ``local`` is (nel, nloc, nloc), or (nloc, nloc) to be reused on every
    element of the selection.
    """
    if elements is None:
        elements = np.arange(space.mesh.n_el)
    dofs = space.elem2dof[elements]
    nel, nloc = dofs.shape
    if local.ndim == 2:
        data = np.broadcast_to(local, (nel, nloc, nloc))
    else:
        data = local
    rows = np.broadcast_to(dofs[:, :, None], (nel, nloc, nloc))
    cols = np.broadcast_to(dofs[:, None, :], (nel, nloc, nloc))
    m = sp.coo_matrix(
        (data.ravel(), (rows.ravel(), cols.ravel())), shape=(space.n, space.n)
    )
    return m.tocsr()


def local_mass(space, qr):
    """Reference-element mass matrix scaled by the element area."""
    phi, _, _ = tabulate(space, qr)
    return space.mesh.h**2 * np.einsum("q,qa,qb->ab", qr.wts, phi, phi)


def local_streamline_matrices(space, bq, qr):
    """Per-element (b.grad, b.grad) and (b.grad, id) matrices.

    ``bq`` is the velocity at the points of :func:`volume_points`.  Dispatches
    to the selected kernel backend.
    """
    phi, dphix, dphiy = tabulate(space, qr)
    wq = space.mesh.h**2 * qr.wts
    return kernels.element_matrices(
        np.ascontiguousarray(bq), np.ascontiguousarray(phi),
        np.ascontiguousarray(dphix), np.ascontiguousarray(dphiy),
        np.ascontiguousarray(wq),
    )


def assemble_h1b_gram(space, flow, q_ord=None):
    """Gram matrix of the streamline Sobolev norm:
    v' G v = int (b.grad v)^2 + int v^2."""
    qr = QuadratureRule(q_ord or default_q_ord(space.k))
    bq = flow.velocity_at(volume_points(space, qr))
    kbb, _ = local_streamline_matrices(space, bq, qr)
    gram = scatter_element_matrices(space, kbb)
    gram = gram + scatter_element_matrices(space, local_mass(space, qr))
    return gram.tocsr()


def stiffness_matrix(space, q_ord=None, coeff=None):
    """Diffusion matrix int c grad(u).grad(v) with an elementwise-constant
    coefficient (``coeff`` per element, default 1)."""
    qr = QuadratureRule(q_ord or default_q_ord(space.k))
    _, dphix, dphiy = tabulate(space, qr)
    wq = space.mesh.h**2 * qr.wts
    loc = np.einsum("q,qa,qb->ab", wq, dphix, dphix)
    loc = loc + np.einsum("q,qa,qb->ab", wq, dphiy, dphiy)
    if coeff is None:
        return scatter_element_matrices(space, loc)
    data = coeff[:, None, None] * loc[None, :, :]
    return scatter_element_matrices(space, data)


# ---------------------------------------------------------------------------
# facet assembly
# ---------------------------------------------------------------------------

_FACE_REF = {
    0: lambda t: np.column_stack([t, np.zeros_like(t)]),
    1: lambda t: np.column_stack([np.ones_like(t), t]),
    2: lambda t: np.column_stack([t, np.ones_like(t)]),
    3: lambda t: np.column_stack([np.zeros_like(t), t]),
}


def face_local_dofs(k, face):
    """Local dof indices along a face, ordered by increasing face parameter."""
    idx = np.arange(k + 1)
    if face == 0:
        return idx
    if face == 1:
        return idx * (k + 1) + k
    if face == 2:
        return k * (k + 1) + idx
    return idx * (k + 1)


def face_tabulation(space, face, t):
    """Trace of the (k+1) face basis functions at face parameters t."""
    nodes = lagrange_nodes(space.k)
    vals, _ = lagrange_1d(nodes, t)
    return vals  # (nt, k+1); matches face_local_dofs ordering


def boundary_mass(space, facets, weight_fn, q_ord=None):
    """Facet mass matrix sum_F int_F w(x) u v ds with a per-point weight."""
    q = q_ord or default_q_ord(space.k)
    t, wt = gauss_1d(q)
    tr = face_tabulation(space, 0, t)  # trace values depend only on t
    rows, cols, data = [], [], []
    for f in facets:
        pts = f.points_at(t)
        w = weight_fn(f, t, pts) * wt * f.length
        loc = np.einsum("q,qa,qb->ab", w, tr, tr)
        dofs = space.elem2dof[f.element][face_local_dofs(space.k, f.face)]
        rows.append(np.broadcast_to(dofs[:, None], loc.shape).ravel())
        cols.append(np.broadcast_to(dofs[None, :], loc.shape).ravel())
        data.append(loc.ravel())
    if not rows:
        return sp.csr_matrix((space.n, space.n))
    m = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.n, space.n),
    )
    return m.tocsr()


def boundary_load(space, facets, value_fn, q_ord=None):
    """Facet load vector sum_F int_F g(x) v ds with a per-point value."""
    q = q_ord or default_q_ord(space.k)
    t, wt = gauss_1d(q)
    tr = face_tabulation(space, 0, t)
    vec = np.zeros(space.n)
    for f in facets:
        pts = f.points_at(t)
        w = value_fn(f, t, pts) * wt * f.length
        dofs = space.elem2dof[f.element][face_local_dofs(space.k, f.face)]
        np.add.at(vec, dofs, tr.T @ w)
    return vec


# ---------------------------------------------------------------------------
# evaluation / interpolation
# ---------------------------------------------------------------------------

def evaluate_field(space, coeffs, points):
    """Values and gradients of a coefficient vector at physical points.

    Raises ValueError for points outside the closed unit square.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("evaluation point outside the domain [0,1]^2")
    mesh = space.mesh
    elems = mesh.element_of_point(pts)
    ox = (elems % mesh.nel1d) * mesh.h
    oy = (elems // mesh.nel1d) * mesh.h
    xi = (pts[:, 0] - ox) / mesh.h
    eta = (pts[:, 1] - oy) / mesh.h

    nodes = lagrange_nodes(space.k)
    vx, dx = lagrange_1d(nodes, xi)
    vy, dy = lagrange_1d(nodes, eta)
    local = coeffs[space.elem2dof[elems]].reshape(len(pts), space.k + 1, space.k + 1)
    values = np.einsum("mba,mb,ma->m", local, vy, vx)
    gx = np.einsum("mba,mb,ma->m", local, vy, dx) / mesh.h
    gy = np.einsum("mba,mb,ma->m", local, dy, vx) / mesh.h
    return values, np.column_stack([gx, gy])


def evaluate_on_element(space, coeffs, element, ref_points):
    """Evaluate at reference coordinates of one specific element (used to
    check conformity across interfaces)."""
    ref = np.atleast_2d(ref_points)
    nodes = lagrange_nodes(space.k)
    vx, _ = lagrange_1d(nodes, ref[:, 0])
    vy, _ = lagrange_1d(nodes, ref[:, 1])
    local = coeffs[space.elem2dof[element]].reshape(space.k + 1, space.k + 1)
    return np.einsum("ba,mb,ma->m", local, vy, vx)


def interpolate(space, f):
    """Nodal interpolant of ``f`` (callable on (m,2) arrays)."""
    return np.asarray(f(space.dof_coords), dtype=float)


# ---------------------------------------------------------------------------
# SPD solves
# ---------------------------------------------------------------------------

class SolverFailure(RuntimeError):
    """Linear solve did not reach the residual contract."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class SpdSolver:
    """Sparse SPD solve: direct factorization, PCG fallback.

    The direct path uses a sparse LU with a symmetric fill-reducing ordering;
    the fallback is diagonally preconditioned CG with relative tolerance
    ``rtol`` and an iteration cap of 20*sqrt(n) (the conditioning of the
    assembled systems grows like h^-2, so the cap scales with size).
    """

    def __init__(self, M, rtol=1e-10):
        self.M = M.tocsc()
        self.n = M.shape[0]
        self.rtol = rtol
        self._lu = None
        try:
            self._lu = spla.splu(self.M, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            self._lu = None  # singular or breakdown; fall back to CG

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        nrhs = np.linalg.norm(rhs)
        if nrhs == 0.0:
            return np.zeros_like(rhs)
        if self._lu is not None:
            x = self._lu.solve(rhs)
            res = np.linalg.norm(self.M @ x - rhs) / nrhs
            if np.isfinite(res) and res <= self.rtol:
                return x
        return self._cg(rhs, nrhs)

    def _cg(self, rhs, nrhs):
        d = self.M.diagonal().copy()
        d[d <= 0.0] = 1.0
        precond = spla.LinearOperator(self.M.shape, matvec=lambda v: v / d)
        maxiter = int(20 * np.sqrt(self.n)) + 1
        with np.errstate(divide="ignore", invalid="ignore"):
            x, _ = spla.cg(self.M, rhs, rtol=self.rtol, atol=0.0,
                           maxiter=maxiter, M=precond)
        res = np.linalg.norm(self.M @ x - rhs) / nrhs
        if not np.isfinite(res) or res > self.rtol:
            raise SolverFailure(
                f"SPD solve failed: relative residual {res:.3e} "
                f"(tolerance {self.rtol:.1e})", residual=float(res))
        return x


def factor_spd(M, rtol=1e-10):
    return SpdSolver(M, rtol=rtol)


def solve_spd(M, rhs, rtol=1e-10):
    """One-shot SPD solve with relative residual <= rtol."""
    return SpdSolver(M, rtol=rtol).solve(rhs)


def spd_condition(M):
    """Condition number estimate via extremal eigenvalues."""
    if M.shape[0] <= 400:
        w = np.linalg.eigvalsh(M.toarray())
        return float(w[-1] / w[0])
    lmax = spla.eigsh(M, k=1, which="LM", return_eigenvectors=False, tol=1e-8)[0]
    lmin = spla.eigsh(M, k=1, sigma=0.0, which="LM",
                      return_eigenvectors=False, tol=1e-8)[0]
    return float(lmax / lmin)


def symmetry_defect(M):
    """max |M - M^T| relative to max |M|."""
    d = abs(M - M.T)
    denom = abs(M).max() or 1.0
    return float(d.max() / denom)
