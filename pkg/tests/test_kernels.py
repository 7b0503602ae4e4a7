import numpy as np
import pytest

from uwrom import _kernels_np

try:
    from uwrom import _kernels_cy
except ImportError:
    _kernels_cy = None


def _random_inputs(nel=37, nq=9, nloc=4, seed=3):
    rng = np.random.default_rng(seed)
    bq = rng.normal(size=(nel, nq, 2))
    phi = rng.normal(size=(nq, nloc))
    dphix = rng.normal(size=(nq, nloc))
    dphiy = rng.normal(size=(nq, nloc))
    wq = rng.uniform(0.1, 1.0, size=nq)
    return bq, phi, dphix, dphiy, wq


def _brute_force(bq, phi, dphix, dphiy, wq):
    nel, nq, _ = bq.shape
    nloc = phi.shape[1]
    kbb = np.zeros((nel, nloc, nloc))
    conv = np.zeros((nel, nloc, nloc))
    for e in range(nel):
        for g in range(nq):
            bd = bq[e, g, 0] * dphix[g] + bq[e, g, 1] * dphiy[g]
            kbb[e] += wq[g] * np.outer(bd, bd)
            conv[e] += wq[g] * np.outer(bd, phi[g])
    return kbb, conv


def test_numpy_kernel_matches_brute_force():
    args = _random_inputs()
    kbb, conv = _kernels_np.element_matrices(*args)
    kbb_ref, conv_ref = _brute_force(*args)
    assert np.allclose(kbb, kbb_ref, atol=1e-13)
    assert np.allclose(conv, conv_ref, atol=1e-13)


@pytest.mark.skipif(_kernels_cy is None, reason="compiled kernels not built")
def test_backends_agree():
    args = _random_inputs(nel=64, nq=16, nloc=9, seed=11)
    kbb_c, conv_c = _kernels_cy.element_matrices(*args)
    kbb_n, conv_n = _kernels_np.element_matrices(*args)
    assert np.allclose(kbb_c, kbb_n, rtol=1e-14, atol=1e-15)
    assert np.allclose(conv_c, conv_n, rtol=1e-14, atol=1e-15)


def test_backend_selection_reports_name():
    from uwrom import kernels
    assert kernels.BACKEND in ("cython", "numpy")
