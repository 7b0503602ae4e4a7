"""Assembly kernel backend selection.

The compiled Cython kernels are preferred; the NumPy twin is used when the
extension was not built or when the environment variable UWROM_PURE_PYTHON
is set (to anything non-empty).  Both expose the same ``element_matrices``
contract, compared head-to-head in benchmarks/bench_assembly.py.
"""

import os

if os.environ.get("UWROM_PURE_PYTHON"):
    from uwrom import _kernels_np as _backend
else:
    try:
        from uwrom import _kernels_cy as _backend
    except ImportError:
        from uwrom import _kernels_np as _backend

element_matrices = _backend.element_matrices
BACKEND = _backend.BACKEND
