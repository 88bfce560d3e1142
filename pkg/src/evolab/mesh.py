"""Icosphere triangulations of the unit sphere and the lift geometry.

The closest-point projection onto the unit sphere is ``x / |x|`` and the
area quotient between a flat face and its image on the sphere is the
radial Jacobian ``(x . nu) / |x|^3``.
"""
from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np

from . import kernels
from .errors import CapacityError, DomainError, GeometryError

MAX_LEVEL = 7
TUBE_RADIUS = 0.5
MIN_AREA = 1e-16

_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTICES = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ]
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


@dataclass(frozen=True, eq=False)
class TriangulatedSurface:
    vertices: np.ndarray
    triangles: np.ndarray
    level: int = 0

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def corners(self):
        """Array ``(F, 3, 3)`` of corner coordinates per triangle."""
        return self.vertices[self.triangles]

    def edges(self):
        """Unique undirected edges ``(E, 2)`` with the smaller index first."""
        e = np.sort(self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    def face_geometry(self):
        """Areas and outward unit normals of the flat faces."""
        c = self.corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        twice = np.linalg.norm(cross, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return 0.5 * twice, cross / twice[:, None]

    def euler_characteristic(self):
        return self.n_vertices - self.edges().shape[0] + self.n_triangles

    def signed_volume(self):
        c = self.corners()
        return float(np.einsum("fi,fi->", c[:, 0], np.cross(c[:, 1], c[:, 2])) / 6.0)


def _freeze(a):
    a.flags.writeable = False
    return a


def _subdivide(vertices, triangles):
    n = vertices.shape[0]
    pairs = triangles[:, [[0, 1], [1, 2], [2, 0]]]  # (F, 3, 2): ab, bc, ca
    flat = np.sort(pairs.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    mid = vertices[edges[:, 0]] + vertices[edges[:, 1]]
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    ids = n + inverse.reshape(-1, 3)
    ab, bc, ca = ids[:, 0], ids[:, 1], ids[:, 2]
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    children = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([b, bc, ab], axis=1),
            np.stack([c, ca, bc], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return np.vstack([vertices, mid]), children


def build_icosphere(level):
    """Icosahedron refined ``level`` times by renormalized edge midpoints.

    Gives ``10 * 4**level + 2`` vertices and ``20 * 4**level`` outward
    oriented triangles.
    """
    if int(level) != level or level < 0:
        raise DomainError(f"level must be a non-negative integer, got {level}")
    if level > MAX_LEVEL:
        raise CapacityError(f"level {level} exceeds the guard of {MAX_LEVEL}")
    vertices = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1)[:, None]
    triangles = _ICO_FACES.copy()
    c = vertices[triangles]
    outward = np.einsum("fi,fi->f", np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), c.sum(axis=1))
    flip = outward < 0
    triangles[flip] = triangles[flip][:, ::-1]
    for _ in range(int(level)):
        vertices, triangles = _subdivide(vertices, triangles)
    return TriangulatedSurface(_freeze(vertices), _freeze(triangles.astype(np.int64)), int(level))


def project_to_sphere(x):
    """Closest-point projection ``x / |x|`` (works on a single point or an ``(..., 3)`` stack)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < TUBE_RADIUS):
        raise GeometryError(f"point(s) with |x| < {TUBE_RADIUS} lie outside the tubular neighborhood")
    return x / r[..., None]


def area_quotient(tri, points):
    """Area quotient ``delta_h`` at points of one flat triangle.

    ``tri`` holds the three corners (rows). The result is the Jacobian of the
    radial map from the plane of ``tri`` onto the unit sphere, so that
    integrating it over a face gives the area of the spherical image.
    """
    tri = np.asarray(tri, dtype=float)
    points = np.asarray(points, dtype=float)
    cross = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    twice = np.linalg.norm(cross)
    if 0.5 * twice < MIN_AREA:
        raise GeometryError("degenerate triangle (area < 1e-16)")
    normal = cross / twice
    if np.dot(normal, tri.sum(axis=0)) < 0:
        normal = -normal
    offset = (points - tri[0]) @ normal
    if np.max(np.abs(offset), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(tri))):
        raise GeometryError("point does not lie in the plane of the triangle")
    single = points.ndim == 1
    out = kernels.radial_jacobian(np.atleast_2d(points), normal)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(q, 3)`` and weights summing to 1 (so sums are face averages)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


_DEG4_A = 0.44594849091596488632
_DEG4_B = 0.091576213509770743460
_DEG4_WA = 0.22338158967801146570
_DEG4_WB = 0.10995174365532186764


def _orbit(a):
    c = 1.0 - 2.0 * a
    return [[a, a, c], [a, c, a], [c, a, a]]


def reference_quadrature(degree):
    if degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        wts = np.full(3, 1.0 / 3.0)
    elif degree == 4:
        pts = np.array(_orbit(_DEG4_A) + _orbit(_DEG4_B))
        wts = np.array([_DEG4_WA] * 3 + [_DEG4_WB] * 3)
    else:
        raise DomainError(f"unsupported quadrature degree {degree}; use 2 or 4")
    return QuadratureRule(_freeze(pts), _freeze(wts), degree)


def quadrature_points(mesh, rule):
    """Physical quadrature points on every face, shape ``(F, q, 3)``."""
    return np.einsum("qi,fik->fqk", rule.points, mesh.corners())


def face_area_quotients(mesh, rule):
    """``delta_h`` at every quadrature point, shape ``(F, q)``."""
    _, normals = mesh.face_geometry()
    pts = quadrature_points(mesh, rule)
    return kernels.radial_jacobian(pts, normals[:, None, :])


@dataclass(frozen=True)
class MeshMetrics:
    h: float
    quasi_uniformity: float
    total_area: float


def mesh_metrics(mesh):
    e = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    areas, _ = mesh.face_geometry()
    return MeshMetrics(
        h=float(lengths.max()),
        quasi_uniformity=float(lengths.max() / lengths.min()),
        total_area=float(areas.sum()),
    )


def write_off(mesh, path):
    """Write ``mesh`` as OFF; ``repr`` floats make the round trip bit-exact."""
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} 0"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_off(path, level=0):
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "OFF":
        raise GeometryError(f"{path}: missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = np.array(tokens[pos:pos + 4 * nf], dtype=np.int64).reshape(nf, 4)
    if np.any(faces[:, 0] != 3):
        raise GeometryError(f"{path}: only triangular faces are supported")
    return TriangulatedSurface(_freeze(verts), _freeze(faces[:, 1:].copy()), level)
