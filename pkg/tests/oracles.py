"""Independent reference computations used by the tests.

These deliberately avoid the library's assembly paths: the monolithic matrix
is built by brute-force quadrature with the pointwise reaction coefficient,
the dense solve oracle uses a plain Cholesky factorization, and the 1D
integral oracle is high-order Gauss quadrature.
"""

import numpy as np

from uwrom import fem, flow as flowmod, mesh as meshmod, transport


def gauss_integral_1d(f, a=0.0, b=1.0, q=50):
    x, w = np.polynomial.legendre.leggauss(q)
    x = 0.5 * (b - a) * (x + 1.0) + a
    return float(0.5 * (b - a) * (w @ f(x)))


def dense_cholesky_solve(a, rhs):
    l = np.linalg.cholesky(a)
    y = np.linalg.solve(l, rhs)
    return np.linalg.solve(l.T, y)


def assemble_monolithic(space, flow, facets, g_name, mu, q_ord=None):
    """Direct assembly of the combined system and rhs for one parameter.

    Computes (-b.grad phi_i + c phi_i)(-b.grad phi_j + c phi_j) with the
    pointwise reaction coefficient in one pass (no affine splitting).
    """
    qr = fem.QuadratureRule(q_ord or fem.default_q_ord(space.k))
    phi, dphix, dphiy = fem.tabulate(space, qr)
    mesh = space.mesh
    n = space.n
    a = np.zeros((n, n))
    pts = fem.volume_points(space, qr)
    bq = flow.velocity_at(pts)
    w2 = mesh.h**2 * qr.wts
    cvals = {meshmod.FREE: 0.0, meshmod.WASHCOAT: mu.c_w, meshmod.COATING: mu.c_c}
    for e in range(mesh.n_el):
        c = cvals[int(mesh.tags[e])]
        op = -(bq[e, :, 0, None] * dphix + bq[e, :, 1, None] * dphiy) + c * phi
        dofs = space.elem2dof[e]
        a[np.ix_(dofs, dofs)] += np.einsum("q,qa,qb->ab", w2, op, op)

    t, wt = fem.gauss_1d(qr.q_ord)
    tr = fem.face_tabulation(space, 0, t)
    rhs = np.zeros(n)
    g_fn = transport.G_PROFILES[g_name]
    for f in facets:
        if f.tag == meshmod.OUTFLOW:
            bn = np.abs(flowmod.normal_velocity(flow, f, t))
            dofs = space.elem2dof[f.element][fem.face_local_dofs(space.k, f.face)]
            a[np.ix_(dofs, dofs)] += np.einsum("q,qa,qb->ab",
                                               wt * f.length * bn, tr, tr)
        elif f.tag == meshmod.INFLOW:
            bn = np.abs(flowmod.normal_velocity(flow, f, t))
            dofs = space.elem2dof[f.element][fem.face_local_dofs(space.k, f.face)]
            rhs[dofs] += tr.T @ (wt * f.length * bn * g_fn(f.s_at(t)))
    return a, mu.g_0 * rhs


def residual_dual_norm_direct(sys, mu, lifted):
    """Dual norm of the residual assembled explicitly and measured through
    a fresh factorization of the Gram matrix."""
    r = sys.rhs(mu) - sys.combined(mu) @ lifted
    z = fem.solve_spd(sys.gram, r)
    return float(np.sqrt(max(r @ z, 0.0)))
