"""Hot numeric kernels, each with a numba path and a pure-numpy path.

The active backend defaults to numba when it is importable and
``EVOLAB_DISABLE_NUMBA`` is unset; :func:`use_backend` switches it at runtime
(the benchmark and the cross-backend tests rely on that).
"""
from contextlib import contextmanager

import numpy as np

from . import _accel
from ._accel import njit

BACKENDS = ("numba", "numpy")
_backend = "numba" if _accel.USE_NUMBA else "numpy"


def backend():
    return _backend


@contextmanager
def use_backend(name):
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous = _backend
    _backend = name
    try:
        yield
    finally:
        _backend = previous


# --------------------------------------------------------------------------
# backward-Euler defect F_n(s) = (1 + s)^-n - exp(-n s)


def _defect_sups_numpy(n_values, s, n_exp, s_exp):
    log1p_s = np.log1p(s)
    weight_s = s ** s_exp
    out = np.empty(n_values.shape[0])
    for k in range(n_values.shape[0]):
        n = float(n_values[k])
        f = np.abs(np.exp(-n * log1p_s) - np.exp(-n * s))
        out[k] = np.max(f * weight_s) * n ** n_exp
    return out


@njit
def _defect_sups_numba(n_values, s, n_exp, s_exp):
    m = s.shape[0]
    log1p_s = np.empty(m)
    weight_s = np.empty(m)
    for j in range(m):
        log1p_s[j] = np.log1p(s[j])
        weight_s[j] = s[j] ** s_exp
    out = np.empty(n_values.shape[0])
    for k in range(n_values.shape[0]):
        n = float(n_values[k])
        best = 0.0
        for j in range(m):
            f = abs(np.exp(-n * log1p_s[j]) - np.exp(-n * s[j])) * weight_s[j]
            if f > best:
                best = f
        out[k] = best * n ** n_exp
    return out


def defect_sups(n_values, s, n_exp=0.0, s_exp=0.0):
    """For each n return ``max_s |F_n(s)| * s**s_exp`` times ``n**n_exp``.

    ``s`` holds the scaled spectral values ``lambda * dt``; every entry must be
    positive when ``s_exp`` is negative.
    """
    n_values = np.ascontiguousarray(n_values, dtype=np.int64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    if _backend == "numba":
        return _defect_sups_numba(n_values, s, float(n_exp), float(s_exp))
    return _defect_sups_numpy(n_values, s, float(n_exp), float(s_exp))


# --------------------------------------------------------------------------
# P1 element matrices on flat triangles embedded in R^3


def _p1_elements_numpy(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    # edge opposite local vertex i
    edges = np.stack([p2 - p1, p0 - p2, p1 - p0], axis=1)
    cross = np.cross(p1 - p0, p2 - p0)
    twice_area = np.linalg.norm(cross, axis=1)
    areas = 0.5 * twice_area
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = cross / twice_area[:, None]
        stiff = np.einsum("fik,fjk->fij", edges, edges) / (4.0 * areas)[:, None, None]
    local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mass = areas[:, None, None] * local_mass[None, :, :]
    return areas, normals, mass, stiff


@njit
def _p1_elements_numba(vertices, triangles):
    nf = triangles.shape[0]
    areas = np.empty(nf)
    normals = np.empty((nf, 3))
    mass = np.empty((nf, 3, 3))
    stiff = np.empty((nf, 3, 3))
    e = np.empty((3, 3))
    for f in range(nf):
        i0, i1, i2 = triangles[f, 0], triangles[f, 1], triangles[f, 2]
        for k in range(3):
            e[0, k] = vertices[i2, k] - vertices[i1, k]
            e[1, k] = vertices[i0, k] - vertices[i2, k]
            e[2, k] = vertices[i1, k] - vertices[i0, k]
        # (p1 - p0) x (p2 - p0) = e2 x (-e1)
        cx = -(e[2, 1] * e[1, 2] - e[2, 2] * e[1, 1])
        cy = -(e[2, 2] * e[1, 0] - e[2, 0] * e[1, 2])
        cz = -(e[2, 0] * e[1, 1] - e[2, 1] * e[1, 0])
        twice = np.sqrt(cx * cx + cy * cy + cz * cz)
        area = 0.5 * twice
        areas[f] = area
        normals[f, 0] = cx / twice
        normals[f, 1] = cy / twice
        normals[f, 2] = cz / twice
        for i in range(3):
            for j in range(3):
                dot = e[i, 0] * e[j, 0] + e[i, 1] * e[j, 1] + e[i, 2] * e[j, 2]
                stiff[f, i, j] = dot / (4.0 * area)
                mass[f, i, j] = area * (2.0 if i == j else 1.0) / 12.0
    return areas, normals, mass, stiff


def p1_elements(vertices, triangles):
    """Areas, unit normals, and 3x3 P1 mass and stiffness blocks per triangle.

    Stiffness uses the cotangent identity ``K_ij = e_i . e_j / (4 |T|)`` with
    ``e_i`` the edge opposite vertex ``i``. Degenerate triangles produce a zero
    area and non-finite blocks; callers check ``areas``.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if _backend == "numba":
        with np.errstate(invalid="ignore", divide="ignore"):
            return _p1_elements_numba(vertices, triangles)
    return _p1_elements_numpy(vertices, triangles)


# --------------------------------------------------------------------------
# radial projection Jacobian from a flat triangle onto the unit sphere


def _radial_jacobian_numpy(points, normals):
    r = np.linalg.norm(points, axis=-1)
    return np.einsum("...k,...k->...", points, normals) / r**3


@njit
def _radial_jacobian_numba(points, normals):
    n = points.shape[0]
    out = np.empty(n)
    for i in range(n):
        x, y, z = points[i, 0], points[i, 1], points[i, 2]
        r2 = x * x + y * y + z * z
        dot = x * normals[i, 0] + y * normals[i, 1] + z * normals[i, 2]
        out[i] = dot / (r2 * np.sqrt(r2))
    return out


def radial_jacobian(points, normals):
    """``(x . nu) / |x|^3`` row by row (``normals`` broadcast against ``points``)."""
    points = np.asarray(points, dtype=np.float64)
    normals = np.broadcast_to(np.asarray(normals, dtype=np.float64), points.shape)
    shape = points.shape[:-1]
    if _backend == "numba":
        flat = _radial_jacobian_numba(
            np.ascontiguousarray(points.reshape(-1, 3)),
            np.ascontiguousarray(normals.reshape(-1, 3)),
        )
        return flat.reshape(shape)
    return _radial_jacobian_numpy(points, normals)
