"""Pure-NumPy fallback for the element assembly kernels.

Same contract as the compiled module ``uwrom._kernels_cy``; used when the
extension is unavailable or when UWROM_PURE_PYTHON is set.
"""

import numpy as np

BACKEND = "numpy"


def element_matrices(bq, phi, dphix, dphiy, wq):
    """Per-element streamline-stiffness and convection matrices.

    Parameters
    ----------
    bq : (nel, nq, 2) velocity at the physical quadrature points
    phi : (nq, nloc) basis values at the reference quadrature points
    dphix, dphiy : (nq, nloc) physical basis derivatives (structured grid,
        identical on every element)
    wq : (nq,) quadrature weights including the element Jacobian

    Returns
    -------
    kbb : (nel, nloc, nloc) with kbb[e,a,b] = sum_g wq[g] (b.grad phi_a)(b.grad phi_b)
    conv : (nel, nloc, nloc) with conv[e,a,b] = sum_g wq[g] (b.grad phi_a) phi_b
    """
    bd = bq[:, :, 0, None] * dphix[None, :, :] + bq[:, :, 1, None] * dphiy[None, :, :]
    kbb = np.einsum("q,eqa,eqb->eab", wq, bd, bd, optimize=True)
    conv = np.einsum("q,eqa,qb->eab", wq, bd, phi, optimize=True)
    return kbb, conv
