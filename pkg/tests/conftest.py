import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uwrom import fem, flow, mesh, transport


@pytest.fixture(scope="session")
def poiseuille():
    return flow.PoiseuilleFlow()


@pytest.fixture(scope="session")
def darcy_small():
    """Fine pressure solve at level 2 (cheap, for unit tests)."""
    return flow.solve_darcy(mesh.build_mesh(2), k_w=0.2, k_c=0.05, order=2)


@pytest.fixture(scope="session")
def darcy_r3():
    """Fine pressure solve at level 3 (greedy studies at r = 2)."""
    return flow.solve_darcy(mesh.build_mesh(3), k_w=0.2, k_c=0.05, order=2)


def make_system(geometry, flow_obj, r, k, g_profile, q_ord=None):
    m = mesh.build_mesh(r)
    space = fem.LagrangeSpace(m, k)
    facets = mesh.classify_boundary(m, geometry)
    return transport.assemble_affine(space, flow_obj, facets, g_profile,
                                     q_ord=q_ord)


@pytest.fixture(scope="session")
def t1_sys_r1(poiseuille):
    return make_system("poiseuille", poiseuille, 1, 1, "sin4pi_sq")


@pytest.fixture(scope="session")
def darcy_sys_r1(darcy_small):
    return make_system("darcy", darcy_small, 1, 1, "sin_pi_sq")


@pytest.fixture(scope="session")
def darcy_sys_r2(darcy_r3):
    return make_system("darcy", darcy_r3, 2, 1, "sin_pi_sq")
