"""P1 surface finite elements on icosphere triangulations.

The bilinear form is ``a_h(u, v) = int grad u . grad v + u v`` on the flat
surface, so the elliptic matrix is ``M + K`` and the evolution operator is the
pencil ``(K, M)``. Loads are integrated on the flat faces with ``f`` evaluated
at the projected quadrature points; the area quotient only enters error
measurement.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from . import kernels
from .errors import AccuracyError, DomainError, GeometryError, NumericError
from .mesh import MIN_AREA, face_area_quotients, project_to_sphere, quadrature_points, reference_quadrature

DENSE_EIG_LIMIT = 3000


@dataclass(frozen=True)
class SparseSolverConfig:
    method: str = "cg"
    rel_tol: float = 1e-10
    max_iter: int | None = None
    dense_below: int = 500

    def __post_init__(self):
        if self.method not in ("cg", "direct"):
            raise DomainError(f"unknown solver method {self.method!r}")
        if not 0 < self.rel_tol <= 1e-6:
            raise DomainError(f"rel_tol must lie in (0, 1e-6], got {self.rel_tol}")


def _relative_residual(a, x, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(b - a @ x) / nb if nb > 0 else np.linalg.norm(a @ x)


def solve_spd(a, b, config=SparseSolverConfig()):
    """Solve the SPD system ``a x = b`` per ``config``; raises NumericError on failure."""
    n = a.shape[0]
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    if n < config.dense_below:
        dense = a.toarray() if sp.issparse(a) else np.asarray(a)
        x = scipy.linalg.solve(dense, b, assume_a="pos")
    elif config.method == "direct":
        x = spla.splu(sp.csc_matrix(a)).solve(b)
    else:
        diag = a.diagonal()
        precond = spla.LinearOperator(a.shape, matvec=lambda r: r / diag, dtype=float)
        maxiter = config.max_iter or 10 * n
        x, info = spla.cg(a, b, rtol=config.rel_tol, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            raise NumericError(
                f"CG did not converge in {maxiter} iterations",
                residual=_relative_residual(a, x, b),
            )
    res = _relative_residual(a, x, b)
    # CG measures its own recursively updated residual; allow for drift.
    if res > 10 * config.rel_tol:
        raise NumericError(f"relative residual {res:.3e} above tolerance", residual=res)
    return x


class FemSystem:
    """Mass and stiffness matrices of a triangulated surface, plus face data.

    Arrays are read-only once assembled. The object also acts as a
    backward-Euler solve oracle: ``backward_euler_solve(dt, c)`` returns
    ``(M + dt K)^-1 M c``.
    """

    def __init__(self, mesh, mass, stiffness, areas, normals, gradients, solver=SparseSolverConfig()):
        self.mesh = mesh
        self.mass = mass
        self.stiffness = stiffness
        self.areas = areas
        self.normals = normals
        self.gradients = gradients
        self.solver = solver
        for arr in (areas, normals, gradients):
            arr.flags.writeable = False

    @property
    def n_dofs(self):
        return self.mesh.n_vertices

    @cached_property
    def energy_matrix(self):
        return (self.mass + self.stiffness).tocsr()

    @lru_cache(maxsize=8)
    def _step_matrix(self, dt):
        return (self.mass + dt * self.stiffness).tocsr()

    def backward_euler_solve(self, dt, c):
        return solve_spd(self._step_matrix(float(dt)), self.mass @ c, self.solver)

    def m_norm(self, c):
        return float(np.sqrt(c @ (self.mass @ c)))

    def energy_norm(self, c):
        return float(np.sqrt(c @ (self.energy_matrix @ c)))

    @cached_property
    def _centroid_tree(self):
        centroids = self.mesh.corners().mean(axis=1)
        return cKDTree(centroids / np.linalg.norm(centroids, axis=1)[:, None])

    def locate(self, points, candidates=12):
        """Face index and barycentric coordinates of ``p^-1(y)`` for sphere points ``y``.

        Returns ``(faces, bary)`` with ``bary`` of shape ``(n, 3)``.
        """
        y = project_to_sphere(np.atleast_2d(points))
        k = min(candidates, self.mesh.n_triangles)
        _, cand = self._centroid_tree.query(y, k=k)
        cand = cand.reshape(len(y), k)
        corners = self.mesh.corners()[cand]  # (n, k, 3, 3)
        nu = self.normals[cand]
        depth = np.einsum("nkd,nkd->nk", nu, corners[:, :, 0])
        x = y[:, None, :] * (depth / np.einsum("nd,nkd->nk", y, nu))[..., None]
        bary = 1.0 + np.einsum("nkid,nkid->nki", self.gradients[cand], x[:, :, None, :] - corners)
        inside = bary.min(axis=2)
        best = inside.argmax(axis=1)
        rows = np.arange(len(y))
        if np.any(inside[rows, best] < -1e-8):
            raise GeometryError("point location failed: no candidate face contains the preimage")
        return cand[rows, best], bary[rows, best]


@dataclass(frozen=True, eq=False)
class GridFunction:
    coefficients: np.ndarray
    fem: FemSystem

    def __post_init__(self):
        if self.coefficients.shape != (self.fem.n_dofs,):
            raise DomainError(
                f"{self.coefficients.shape[0]} coefficients for {self.fem.n_dofs} dofs"
            )

    def lift(self, points):
        """Evaluate the lifted function ``u_h o p^-1`` at points of the sphere."""
        faces, bary = self.fem.locate(points)
        nodes = self.fem.mesh.triangles[faces]
        return np.einsum("ni,ni->n", bary, self.coefficients[nodes])

    def at_quadrature(self, rule):
        nodes = self.fem.mesh.triangles
        return np.einsum("qi,fi->fq", rule.points, self.coefficients[nodes])


def assemble(mesh, solver=SparseSolverConfig()):
    areas, _ = mesh.face_geometry()
    bad = np.flatnonzero(~(areas >= MIN_AREA))
    if bad.size:
        raise GeometryError(f"degenerate triangle {int(bad[0])} (area {areas[bad[0]]:.3e})")
    areas, normals, mass_local, stiff_local = kernels.p1_elements(mesh.vertices, mesh.triangles)
    tri = mesh.triangles
    rows = np.broadcast_to(tri[:, :, None], stiff_local.shape).ravel()
    cols = np.broadcast_to(tri[:, None, :], stiff_local.shape).ravel()
    n = mesh.n_vertices

    def scatter(local):
        a = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        a.sum_duplicates()
        return ((a + a.T) * 0.5).tocsr()

    corners = mesh.corners()
    edges = np.stack(
        [corners[:, 2] - corners[:, 1], corners[:, 0] - corners[:, 2], corners[:, 1] - corners[:, 0]],
        axis=1,
    )
    gradients = np.cross(normals[:, None, :], edges) / (2.0 * areas)[:, None, None]
    return FemSystem(
        mesh, scatter(mass_local), scatter(stiff_local),
        np.array(areas), np.array(normals), gradients, solver,
    )


def interpolate(fem, f):
    return GridFunction(np.asarray(f(fem.mesh.vertices), dtype=float), fem)


def load_vector(fem, f, rule=None):
    """``b_i = int_{Gamma_h} (f o p) phi_i`` by the degree-4 face rule."""
    rule = rule or reference_quadrature(4)
    pts = quadrature_points(fem.mesh, rule)
    vals = np.asarray(f(project_to_sphere(pts.reshape(-1, 3))), dtype=float).reshape(pts.shape[:2])
    contrib = fem.areas[:, None] * np.einsum("q,fq,qi->fi", rule.weights, vals, rule.points)
    return np.bincount(fem.mesh.triangles.ravel(), weights=contrib.ravel(), minlength=fem.n_dofs)


def l2_project(fem, f):
    return GridFunction(solve_spd(fem.mass, load_vector(fem, f), fem.solver), fem)


def elliptic_solve(fem, f):
    """Solve ``a_h(u_h, v) = int (f o p) v`` for all ``v`` in the P1 space."""
    return GridFunction(solve_spd(fem.energy_matrix, load_vector(fem, f), fem.solver), fem)


def parabolic_step(fem, dt, c):
    if not dt > 0:
        raise DomainError(f"time step must be > 0, got {dt}")
    coeffs = c.coefficients if isinstance(c, GridFunction) else np.asarray(c, dtype=float)
    return GridFunction(fem.backward_euler_solve(dt, coeffs), fem)


@dataclass(frozen=True, eq=False)
class Eigenpairs:
    """Ascending eigenvalues of ``K v = mu M v`` and M-orthonormal vectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def complete(self):
        return self.vectors.shape[1] == self.vectors.shape[0]

    def evolve(self, fem, c, t):
        """Exact discrete semigroup ``e^{-t L_0h} c`` from the expansion."""
        coeffs = self.vectors.T @ (fem.mass @ c)
        return self.vectors @ (np.exp(-t * self.values) * coeffs)


def generalized_eigenpairs(fem, count=None, dense_limit=DENSE_EIG_LIMIT):
    """Lowest ``count`` (default: all) eigenpairs of the pencil ``(K, M)``.

    Dense symmetric-definite solve up to ``dense_limit`` dofs; beyond that only
    low modes by shift-invert Lanczos about a negative shift.
    """
    n = fem.n_dofs
    count = n if count is None else int(count)
    if not 1 <= count <= n:
        raise DomainError(f"count must lie in [1, {n}], got {count}")
    if n <= dense_limit:
        idx = None if count == n else [0, count - 1]
        try:
            values, vectors = scipy.linalg.eigh(
                fem.stiffness.toarray(), fem.mass.toarray(), subset_by_index=idx
            )
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"dense generalized eigensolve failed: {exc}") from exc
    else:
        if count >= n - 1:
            raise DomainError(f"{n} dofs exceed the dense limit; request fewer modes")
        try:
            # padded request: an unpadded Krylov space can drop members of degenerate clusters
            k = min(n - 2, 2 * count + 8)
            values, vectors = spla.eigsh(
                fem.stiffness.tocsc(), k=k, M=fem.mass.tocsc(), sigma=-0.5, which="LM", tol=1e-12,
                ncv=min(n - 1, max(2 * k + 1, 40)),
            )
        except spla.ArpackNoConvergence as exc:
            raise NumericError(f"shift-invert eigensolve did not converge: {exc}") from exc
        order = np.argsort(values)
        values, vectors = values[order][:count], vectors[:, order][:, :count]
    return Eigenpairs(values, vectors)


def largest_eigenvalue(fem):
    """Largest eigenvalue of ``(K, M)`` (Lanczos, no dense solve)."""
    if fem.n_dofs <= 3:
        return float(scipy.linalg.eigh(fem.stiffness.toarray(), fem.mass.toarray(), eigvals_only=True)[-1])
    value = spla.eigsh(fem.stiffness.tocsc(), k=1, M=fem.mass.tocsc(), which="LA", tol=1e-12,
                       return_eigenvectors=False)
    return float(value[0])


def discrete_fractional_norm(fem, eig, alpha, c, shift=1.0):
    """``||(shift + L_0h)^alpha c||`` in the M-inner product, from an eigen-expansion."""
    if not -1 <= alpha <= 1:
        raise DomainError(f"alpha must lie in [-1, 1], got {alpha}")
    coeffs = c.coefficients if isinstance(c, GridFunction) else np.asarray(c, dtype=float)
    modal = eig.vectors.T @ (fem.mass @ coeffs)
    total = coeffs @ (fem.mass @ coeffs)
    missing = total - modal @ modal
    if total > 0 and missing > 1e-8 * total:
        raise AccuracyError(f"eigenbasis misses {missing / total:.2e} of the M-norm mass")
    weights = (shift + np.maximum(eig.values, 0.0)) ** (2.0 * alpha)
    return float(np.sqrt(weights @ modal**2))


def lifted_error_l2(fem, c, u_exact, weighted=True, rule=None):
    """``(int (u_h - u o p)^2 delta_h)^1/2`` over the flat surface.

    With ``weighted`` the area quotient makes this the L2 norm on the sphere of
    the lifted error (up to quadrature error).
    """
    rule = rule or reference_quadrature(4)
    coeffs = c.coefficients if isinstance(c, GridFunction) else np.asarray(c, dtype=float)
    uh = GridFunction(coeffs, fem).at_quadrature(rule)
    pts = quadrature_points(fem.mesh, rule)
    ue = np.asarray(u_exact(project_to_sphere(pts.reshape(-1, 3))), dtype=float).reshape(uh.shape)
    sq = (uh - ue) ** 2
    if weighted:
        sq = sq * face_area_quotients(fem.mesh, rule)
    return float(np.sqrt(np.einsum("f,q,fq->", fem.areas, rule.weights, sq)))


def lifted_error_energy(fem, c, u_exact, grad_exact, rule=None):
    """``a_h``-norm of ``u_h - u o p`` on the flat surface.

    ``grad_exact(y)`` is the gradient at sphere points of any smooth extension
    of ``u``; only its tangential part is used. The chain rule for ``u o p``
    uses ``Dp(x) = (I - y y^T) / |x|`` with ``y = x / |x|``.
    """
    rule = rule or reference_quadrature(4)
    coeffs = c.coefficients if isinstance(c, GridFunction) else np.asarray(c, dtype=float)
    uh = GridFunction(coeffs, fem).at_quadrature(rule)
    pts = quadrature_points(fem.mesh, rule)
    flat = pts.reshape(-1, 3)
    y = project_to_sphere(flat)
    ue = np.asarray(u_exact(y), dtype=float).reshape(uh.shape)
    g = np.asarray(grad_exact(y), dtype=float)
    g = (g - np.einsum("nd,nd->n", g, y)[:, None] * y) / np.linalg.norm(flat, axis=1)[:, None]
    g = g.reshape(pts.shape)
    nu = fem.normals[:, None, :]
    g = g - np.einsum("fqd,fqd->fq", g, np.broadcast_to(nu, g.shape))[..., None] * nu
    grad_h = np.einsum("fid,fi->fd", fem.gradients, coeffs[fem.mesh.triangles])
    dg = grad_h[:, None, :] - g
    sq = np.einsum("fqd,fqd->fq", dg, dg) + (uh - ue) ** 2
    return float(np.sqrt(np.einsum("f,q,fq->", fem.areas, rule.weights, sq)))


def inverse_estimate_constant(fem, eig=None):
    """``h^2 (1 + mu_max)``: the measured constant of ``||L_h f|| <= C h^-2 ||f||``."""
    from .mesh import mesh_metrics

    h = mesh_metrics(fem.mesh).h
    if eig is not None and eig.complete:
        mu_max = float(eig.values[-1])
    else:
        mu_max = largest_eigenvalue(fem)
    return h**2 * (1.0 + mu_max)
