import numpy as np
import pytest

from uwrom import mesh


def test_build_mesh_r0():
    m = mesh.build_mesh(0)
    assert m.n_el == 64
    assert m.h == 0.125


def test_build_mesh_r2():
    m = mesh.build_mesh(2)
    assert m.n_el == 1024
    assert m.h == 2.0 ** -5


def test_build_mesh_rejects_negative():
    with pytest.raises(ValueError):
        mesh.build_mesh(-1)


def test_build_mesh_rejects_non_integer():
    with pytest.raises(ValueError):
        mesh.build_mesh(1.5)


@pytest.mark.parametrize("r", range(4))
def test_gridwidth_exact(r):
    m = mesh.build_mesh(r)
    assert m.h * 2 ** (r + 3) == 1.0


@pytest.mark.parametrize("r", range(4))
def test_element_areas_sum_to_one(r):
    m = mesh.build_mesh(r)
    assert m.n_el * m.h**2 == 1.0


@pytest.mark.parametrize("r", range(4))
def test_compartment_areas_exact(r):
    m = mesh.build_mesh(r)
    assert m.compartment_area(mesh.WASHCOAT) == 0.25
    assert m.compartment_area(mesh.COATING) == 0.25
    assert m.compartment_area(mesh.FREE) == 0.5


def test_elements_lie_in_single_compartment():
    m = mesh.build_mesh(1)
    for e in range(m.n_el):
        ey = e // m.nel1d
        y0, y1 = ey * m.h, (ey + 1) * m.h
        tag = m.tags[e]
        if tag == mesh.WASHCOAT:
            assert y0 >= 0.375 and y1 <= 0.625
        elif tag == mesh.COATING:
            assert (0.25 <= y0 and y1 <= 0.375) or (0.625 <= y0 and y1 <= 0.75)
        else:
            assert y1 <= 0.25 or y0 >= 0.75


def test_connectivity_shapes():
    m = mesh.build_mesh(0)
    assert m.vertices.shape == (81, 2)
    assert m.elem2vert.shape == (64, 4)
    v = m.vertices[m.elem2vert[0]]
    assert np.allclose(v, [[0, 0], [0.125, 0], [0.125, 0.125], [0, 0.125]])


def test_classify_rejects_unknown_geometry():
    with pytest.raises(ValueError):
        mesh.classify_boundary(mesh.build_mesh(0), "couette")


def test_poiseuille_tags():
    m = mesh.build_mesh(0)
    facets = mesh.classify_boundary(m, "poiseuille")
    for f in facets:
        if np.isclose(f.midpoint[1], 1.0):
            assert f.tag == mesh.INFLOW
        elif np.isclose(f.midpoint[1], 0.0):
            assert f.tag == mesh.OUTFLOW
        else:
            assert f.tag == mesh.CHARACTERISTIC


def test_darcy_tags():
    m = mesh.build_mesh(0)
    facets = mesh.classify_boundary(m, "darcy")
    for f in facets:
        x, y = f.midpoint
        if np.isclose(x, 0.0) and 0.75 < y < 1.0:
            assert f.tag == mesh.INFLOW
        elif np.isclose(x, 1.0) and 0.0 < y < 0.25:
            assert f.tag == mesh.OUTFLOW
        else:
            assert f.tag == mesh.CHARACTERISTIC


@pytest.mark.parametrize("r", range(4))
@pytest.mark.parametrize("geometry,measures", [
    ("poiseuille", {"inflow": 1.0, "outflow": 1.0, "characteristic": 2.0}),
    ("darcy", {"inflow": 0.25, "outflow": 0.25, "characteristic": 3.5}),
])
def test_facet_length_sums_exact(r, geometry, measures):
    m = mesh.build_mesh(r)
    facets = mesh.classify_boundary(m, geometry)
    assert len(facets) == 4 * m.nel1d
    for tag, measure in measures.items():
        total = sum(f.length for f in facets if f.tag == tag)
        assert total == measure


@pytest.mark.parametrize("geometry", ["poiseuille", "darcy"])
def test_inflow_parameter_ranges_cover_unit_interval(geometry):
    m = mesh.build_mesh(1)
    facets = mesh.classify_boundary(m, geometry)
    ranges = sorted(f.s_range for f in facets if f.tag == mesh.INFLOW)
    assert ranges[0][0] == 0.0
    assert np.isclose(ranges[-1][1], 1.0)
    for (_, hi), (lo, _) in zip(ranges, ranges[1:]):
        assert np.isclose(hi, lo)
    # non-inflow facets carry no parameter range
    out = next(f for f in facets if f.tag == mesh.OUTFLOW)
    assert out.s_range is None
    with pytest.raises(ValueError):
        out.s_at(np.array([0.5]))


def test_element_of_point():
    m = mesh.build_mesh(0)
    e = m.element_of_point(np.array([[0.0625, 0.0625], [0.99, 0.99], [1.0, 1.0]]))
    assert e[0] == 0
    assert e[1] == m.n_el - 1
    assert e[2] == m.n_el - 1  # boundary points clamp inside


def test_facet_normals():
    m = mesh.build_mesh(0)
    facets = mesh.classify_boundary(m, "poiseuille")
    f_in = next(f for f in facets if f.tag == mesh.INFLOW)
    assert np.array_equal(f_in.normal, [0.0, 1.0])
    f_out = next(f for f in facets if f.tag == mesh.OUTFLOW)
    assert np.array_equal(f_out.normal, [0.0, -1.0])
