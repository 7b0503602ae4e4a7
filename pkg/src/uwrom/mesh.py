"""Structured quadrilateral meshes of the unit-square filter geometry.

The domain [0,1]^2 is split into three compartments: a central washcoat band,
a coating band around it, and the free-flow region.  All compartment
boundaries sit at multiples of 1/8, so the coarsest grid (refinement level 0,
gridwidth 1/8) already resolves the geometry exactly and every element lies
inside exactly one compartment.
"""

from dataclasses import dataclass, field

import numpy as np

# compartment tags
FREE = 0
WASHCOAT = 1
COATING = 2

# boundary facet tags
INFLOW = "inflow"
OUTFLOW = "outflow"
CHARACTERISTIC = "characteristic"

GEOMETRIES = ("poiseuille", "darcy")

# washcoat band [3/8, 5/8], coating band [1/4, 3/4] minus washcoat
_WASHCOAT_LO, _WASHCOAT_HI = 0.375, 0.625
_COATING_LO, _COATING_HI = 0.25, 0.75

# local face index -> outward unit normal (0 bottom, 1 right, 2 top, 3 left)
FACE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


class Mesh:
    """Uniform n x n grid of axis-aligned square elements on [0,1]^2.

    Elements are ordered row-major, ``e = ey * nel1d + ex``; vertices
    lexicographically by (y, x).  Compartment tags are per element and exact
    (element interiors never straddle a compartment boundary).
    """

    def __init__(self, r):
        if not isinstance(r, (int, np.integer)):
            raise ValueError(f"refinement level must be an integer, got {r!r}")
        if r < 0:
            raise ValueError(f"refinement level must be >= 0, got {r}")
        self.r = int(r)
        self.nel1d = 2 ** (self.r + 3)
        self.h = 1.0 / self.nel1d
        self.n_el = self.nel1d**2

        nv1d = self.nel1d + 1
        xs = np.arange(nv1d) * self.h
        xv, yv = np.meshgrid(xs, xs, indexing="xy")
        self.vertices = np.column_stack([xv.ravel(), yv.ravel()])

        ex, ey = np.meshgrid(np.arange(self.nel1d), np.arange(self.nel1d), indexing="xy")
        ex = ex.ravel()
        ey = ey.ravel()
        v00 = ey * nv1d + ex
        self.elem2vert = np.column_stack([v00, v00 + 1, v00 + nv1d + 1, v00 + nv1d])

        yc = (ey + 0.5) * self.h
        self.tags = np.full(self.n_el, FREE, dtype=np.int8)
        self.tags[(yc > _COATING_LO) & (yc < _COATING_HI)] = COATING
        self.tags[(yc > _WASHCOAT_LO) & (yc < _WASHCOAT_HI)] = WASHCOAT

    def element_origin(self, e):
        """Lower-left corner of element e."""
        ex = e % self.nel1d
        ey = e // self.nel1d
        return np.column_stack([ex * self.h, ey * self.h]) if np.ndim(e) else np.array(
            [ex * self.h, ey * self.h]
        )

    def element_of_point(self, points):
        """Row-major element indices containing the given points (boundary
        points are assigned to the touching element inside the domain)."""
        pts = np.atleast_2d(points)
        ij = np.clip((pts / self.h).astype(np.int64), 0, self.nel1d - 1)
        return ij[:, 1] * self.nel1d + ij[:, 0]

    def compartment_area(self, tag):
        return float(np.count_nonzero(self.tags == tag)) * self.h**2


def build_mesh(r):
    """Mesh at refinement level r with gridwidth 2^-(r+3)."""
    return Mesh(r)


@dataclass
class BoundaryFacet:
    """One element edge on the domain boundary.

    ``s_range`` carries the arc-length parameter interval of the inflow map
    (poiseuille: phi(s) = (s, 1); darcy: phi(s) = (0, 3/4 + s/4)) and is None
    for non-inflow facets.
    """

    element: int
    face: int
    p0: np.ndarray
    p1: np.ndarray
    tag: str
    s_range: tuple | None = None
    midpoint: np.ndarray = field(init=False)

    def __post_init__(self):
        self.midpoint = 0.5 * (self.p0 + self.p1)

    @property
    def normal(self):
        return FACE_NORMALS[self.face]

    @property
    def length(self):
        return float(np.linalg.norm(self.p1 - self.p0))

    def points_at(self, t):
        """Physical points at facet parameters t in [0,1]."""
        t = np.asarray(t)[:, None]
        return (1.0 - t) * self.p0[None, :] + t * self.p1[None, :]

    def s_at(self, t):
        """Inflow arc-length parameters at facet parameters t."""
        if self.s_range is None:
            raise ValueError("facet is not on the inflow boundary")
        s0, s1 = self.s_range
        return s0 + np.asarray(t) * (s1 - s0)


def _facet_geometry(mesh, ex, ey, face):
    h = mesh.h
    x0, y0 = ex * h, ey * h
    corners = {
        0: (np.array([x0, y0]), np.array([x0 + h, y0])),
        1: (np.array([x0 + h, y0]), np.array([x0 + h, y0 + h])),
        2: (np.array([x0, y0 + h]), np.array([x0 + h, y0 + h])),
        3: (np.array([x0, y0]), np.array([x0, y0 + h])),
    }
    return corners[face]


def classify_boundary(mesh, geometry):
    """Tag every boundary facet as inflow/outflow/characteristic.

    Tag assignment is purely geometric (poiseuille: top inflow, bottom
    outflow; darcy: {0} x (3/4,1) inflow, {1} x (0,1/4) outflow), so the
    no-flux condition on characteristic facets holds independently of any
    discrete velocity.
    """
    if geometry not in GEOMETRIES:
        raise ValueError(f"unknown geometry {geometry!r}, expected one of {GEOMETRIES}")
    n = mesh.nel1d
    facets = []

    def add(ex, ey, face):
        p0, p1 = _facet_geometry(mesh, ex, ey, face)
        e = ey * n + ex
        mid = 0.5 * (p0 + p1)
        tag = CHARACTERISTIC
        s_range = None
        if geometry == "poiseuille":
            if face == 2:  # y = 1
                tag = INFLOW
                s_range = (p0[0], p1[0])
            elif face == 0:  # y = 0
                tag = OUTFLOW
        else:  # darcy
            if face == 3 and _COATING_HI < mid[1] < 1.0:  # x = 0, y in (3/4, 1)
                tag = INFLOW
                s_range = (4.0 * (p0[1] - 0.75), 4.0 * (p1[1] - 0.75))
            elif face == 1 and 0.0 < mid[1] < _COATING_LO:  # x = 1, y in (0, 1/4)
                tag = OUTFLOW
        facets.append(BoundaryFacet(e, face, p0, p1, tag, s_range))

    for ex in range(n):
        add(ex, 0, 0)
        add(ex, n - 1, 2)
    for ey in range(n):
        add(0, ey, 3)
        add(n - 1, ey, 1)
    return facets


def facets_with_tag(facets, tag):
    return [f for f in facets if f.tag == tag]
