"""Finite-dimensional symmetric sectorial operators with exact spectral calculus.

Every operator here is ``A = Q diag(lam) Q^T`` with orthogonal ``Q``; functions
of ``A`` are applied by transforming into the eigenbasis, scaling, and
transforming back. These serve as the ground truth against which the abstract
inequalities are measured.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import AccuracyError, DomainError, SingularResolventError

SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class Sector:
    """Sectoriality data: shift ``lam``, half-angle ``delta``, resolvent constant ``M``."""

    lam: float
    delta: float
    M: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise DomainError(f"sector shift must be >= 0, got {self.lam}")
        if not 0 < self.delta < math.pi / 2:
            raise DomainError(f"sector angle must lie in (0, pi/2), got {self.delta}")
        if not self.M >= 1:
            raise DomainError(f"resolvent constant must be >= 1, got {self.M}")

    def contains(self, z):
        """True where ``z`` lies in the open sector ``|arg z| < delta`` (zero excluded)."""
        z = np.asarray(z, dtype=complex)
        return (z != 0) & (np.abs(np.angle(z)) < self.delta)


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    eigenvalues: np.ndarray
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).copy()
        q = np.asarray(self.basis, dtype=float).copy()
        if lam.ndim != 1 or q.shape != (lam.size, lam.size):
            raise DomainError("basis must be a dim x dim matrix matching the eigenvalues")
        order = np.argsort(lam, kind="stable")
        lam, q = lam[order], q[:, order]
        if np.max(np.abs(q.T @ q - np.eye(lam.size)), initial=0.0) > 1e-12:
            raise DomainError("basis is not orthogonal to 1e-12")
        lam.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "basis", q)

    @classmethod
    def diagonal(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values, np.eye(values.size))

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * max(1.0, np.abs(matrix).max())):
            raise DomainError("matrix is not symmetric")
        lam, q = np.linalg.eigh(0.5 * (matrix + matrix.T))
        return cls(lam, q)

    @property
    def dim(self):
        return self.eigenvalues.size

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(self.eigenvalues)))

    def matrix(self):
        return (self.basis * self.eigenvalues) @ self.basis.T

    def shifted(self, shift):
        return SpectralOperator(self.eigenvalues + shift, self.basis)

    def apply_function(self, values, x):
        """Apply ``Q diag(values) Q^T`` to ``x`` (vector or column stack)."""
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DomainError(f"vector length {x.shape[0]} does not match dim {self.dim}")
        coeffs = self.basis.T @ x
        if coeffs.ndim == 1:
            return self.basis @ (values * coeffs)
        return self.basis @ (values[:, None] * coeffs)

    def backward_euler_solve(self, dt, x):
        """``(I + dt A)^-1 x``; lets the operator serve as a linear-solve oracle."""
        return self.apply_function(1.0 / (1.0 + dt * self.eigenvalues), x)


def random_spd(dim, seed, low=1e-2, high=1e2):
    """Random SPD operator: QR-orthogonalized Gaussian basis, log-uniform spectrum."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    lam = np.sort(10.0 ** rng.uniform(math.log10(low), math.log10(high), dim))
    return SpectralOperator(lam, q)


def resolvent_apply(op, z, x):
    """Solve ``(z I - A) y = x``.

    Raises :class:`SingularResolventError` when ``z`` is within
    ``1e-12 * max(1, spectral radius)`` of an eigenvalue.
    """
    gap = z - op.eigenvalues
    if np.min(np.abs(gap)) <= SINGULAR_RTOL * max(1.0, op.spectral_radius):
        raise SingularResolventError(f"z = {z} lies on the spectrum")
    return op.apply_function(1.0 / gap, x)


def semigroup_apply(op, t, x):
    if t < 0:
        raise DomainError(f"semigroup time must be >= 0, got {t}")
    if t == 0:
        return np.array(x, copy=True)
    return op.apply_function(np.exp(-t * op.eigenvalues), x)


def _shifted_powers(op, alpha, shift):
    mu = op.eigenvalues + shift
    if alpha == 0:
        return np.ones_like(mu)
    if alpha < 0 and np.any(mu <= 0):
        raise DomainError("negative power needs a positive shifted spectrum")
    if np.any(mu < 0) and alpha != int(alpha):
        raise DomainError("fractional power of an operator with negative spectrum")
    return mu**alpha


def fractional_power_apply(op, alpha, x, shift=0.0):
    """``(shift I + A)^alpha x`` by spectral calculus, ``alpha`` in [-1, 1]."""
    if not -1 <= alpha <= 1:
        raise DomainError(f"alpha must lie in [-1, 1], got {alpha}")
    if alpha == 0:
        return np.array(x, copy=True)
    return op.apply_function(_shifted_powers(op, alpha, shift), x)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule in ``s = log t``.

    ``lower``/``upper`` of None choose the truncation automatically so that the
    neglected tails are below ``tail_tol`` relative to the result.
    """

    order: int = 16
    panels: int = 16
    rel_tol: float = 1e-8
    max_panels: int = 4096
    lower: float | None = None
    upper: float | None = None
    tail_tol: float = 1e-13


def _truncation(alpha, mu_min, mu_max, spec):
    # integrand ~ e^{alpha s} as s -> -inf and ~ mu e^{(alpha-1) s} as s -> +inf,
    # so both tails decay only exponentially; size the window from alpha.
    lower = -40.0 if spec.lower is None else spec.lower
    upper = 40.0 if spec.upper is None else spec.upper
    log_floor = alpha * math.log(min(1.0, mu_min))
    if spec.lower is None:
        lower = min(lower, (math.log(spec.tail_tol * alpha) + log_floor) / alpha)
    if spec.upper is None:
        need = (math.log(mu_max) - math.log(spec.tail_tol * (1 - alpha)) - log_floor) / (1 - alpha)
        upper = max(upper, need)
    return lower, upper


def fractional_power_integral(op, alpha, x, shift=0.0, quad=QuadratureSpec()):
    """``(shift I + A)^alpha x`` from the Balakrishnan integral.

    Evaluates ``sin(alpha pi)/pi * int_0^inf t^(alpha-1) (t + shift + A)^-1 (shift + A) x dt``
    after substituting ``t = e^s``. Each node needs a dense linear solve with
    ``(t + shift) I + A``, so this route never touches the eigenbasis. Panels
    are doubled until the relative change drops below ``quad.rel_tol``.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    mu = op.eigenvalues + shift
    if np.any(mu <= 0):
        raise DomainError("Balakrishnan form needs a positive shifted spectrum")
    x = np.asarray(x, dtype=float)
    a = op.matrix() + shift * np.eye(op.dim)
    ax = a @ x
    lower, upper = _truncation(alpha, float(mu.min()), float(mu.max()), quad)
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(quad.order)

    def integrate(panels):
        edges = np.linspace(lower, upper, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        s = (mid[:, None] + half[:, None] * gl_nodes[None, :]).ravel()
        w = (half[:, None] * gl_weights[None, :]).ravel()
        t = np.exp(s)
        systems = a[None, :, :] + t[:, None, None] * np.eye(op.dim)[None, :, :]
        rhs = np.broadcast_to(ax, (t.size, op.dim))[..., None]
        solved = np.linalg.solve(systems, rhs)[..., 0]
        weights = w * np.exp(alpha * s)
        return math.sin(alpha * math.pi) / math.pi * (weights @ solved)

    panels = quad.panels
    previous = integrate(panels)
    while panels < quad.max_panels:
        panels *= 2
        current = integrate(panels)
        scale = max(np.linalg.norm(current), np.finfo(float).tiny)
        if np.linalg.norm(current - previous) <= quad.rel_tol * scale:
            return current
        previous = current
    raise AccuracyError(
        f"Balakrishnan quadrature did not reach rel_tol={quad.rel_tol} "
        f"with {quad.max_panels} panels"
    )


@dataclass(frozen=True)
class SectorReport:
    inclusion: bool
    bound: bool
    worst_ratio: float
    worst_ratio_negative_axis: float
    probe_angle: float

    @property
    def passed(self):
        return self.inclusion and self.bound


def verify_sectorial(op, sector, samples=64):
    """Check spectral inclusion and the resolvent bound on sampled rays.

    The shifted spectrum ``lam + A`` must lie in the open sector. The resolvent
    ``(z - lam - A)^-1`` is probed at ``samples`` log-spaced radii on each of
    the rays ``arg z = +-delta'`` (``delta'`` just outside the sector) and on
    the negative real axis; ``|z| * ||(z - lam - A)^-1||`` must stay <= ``M``.
    Failures are reported, never raised.
    """
    if samples < 8:
        raise DomainError("verify_sectorial needs at least 8 samples")
    mu = op.eigenvalues + sector.lam
    inclusion = bool(np.all(sector.contains(mu)))

    probe = sector.delta + 1e-6 * (math.pi - sector.delta)
    scale = np.abs(mu[mu != 0]) if np.any(mu != 0) else np.ones(1)
    radii = np.logspace(
        math.log10(scale.min()) - 3, math.log10(scale.max()) + 3, samples
    )

    def worst(z):
        dist = np.min(np.abs(z[:, None] - mu[None, :]), axis=1)
        with np.errstate(divide="ignore"):
            return float(np.max(np.abs(z) / dist))

    rays = np.concatenate([radii * np.exp(1j * probe), radii * np.exp(-1j * probe)])
    ray_ratio = worst(rays)
    axis_ratio = worst(-radii.astype(complex))
    worst_ratio = max(ray_ratio, axis_ratio)
    return SectorReport(
        inclusion=inclusion,
        bound=bool(worst_ratio <= sector.M),
        worst_ratio=worst_ratio,
        worst_ratio_negative_axis=axis_ratio,
        probe_angle=probe,
    )


@dataclass(frozen=True)
class SectorFamily:
    """Sectors generated by a coercive, continuous form with constants ``C >= c``."""

    continuity: float
    coercivity: float

    @property
    def m_prime(self):
        return 1.0 + self.continuity / self.coercivity

    @property
    def delta_min(self):
        return math.pi / 2 - math.asin(1.0 / self.m_prime)

    def constant(self, delta):
        """Resolvent constant ``M`` for an admissible half-angle ``delta``."""
        if not self.delta_min < delta < math.pi / 2:
            raise DomainError(
                f"delta must lie in ({self.delta_min}, pi/2), got {delta}"
            )
        mp = self.m_prime
        denom = 1.0 - mp * math.sin(math.pi / 2 - delta)
        if denom <= 0:
            raise DomainError(f"delta = {delta} gives a nonpositive denominator")
        return mp * math.cos(math.pi / 2 - delta) / denom

    def sector(self, delta, lam=0.0):
        return Sector(lam, delta, self.constant(delta))


def sector_from_form(continuity, coercivity):
    if not (coercivity > 0 and continuity >= coercivity):
        raise DomainError("need continuity >= coercivity > 0")
    return SectorFamily(float(continuity), float(coercivity))


def check_smoothing(op, alpha, t_grid):
    """``max_t t^alpha ||A^alpha e^{-tA}||``, evaluated on the spectrum."""
    t = np.asarray(t_grid, dtype=float)
    s = np.outer(t, op.eigenvalues)
    return float(np.max(s**alpha * np.exp(-s)))


def check_interpolation(op, phi, alpha, trials, seed=0, shift=0.0):
    """Worst ratio ``||B^{phi alpha} x|| / (||B^phi x||^alpha ||x||^{1-alpha})``, ``B = shift + A``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((op.dim, trials))
    top = np.linalg.norm(fractional_power_apply(op, phi * alpha, x, shift), axis=0)
    mid = np.linalg.norm(fractional_power_apply(op, phi, x, shift), axis=0)
    base = np.linalg.norm(x, axis=0)
    return float(np.max(top / (mid**alpha * base ** (1.0 - alpha))))


def check_decay_identity(op, alpha, t_grid, shift=0.0):
    """``max_t t^-alpha ||(I - e^{-tA})(shift + A)^-alpha||`` over ``t > 0``."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise DomainError("decay identity grid must be strictly positive")
    mu = op.eigenvalues + shift
    if alpha > 0 and np.any(mu <= 0):
        raise DomainError("negative power needs a positive shifted spectrum")
    s = np.outer(t, op.eigenvalues)
    vals = -np.expm1(-s) * (mu[None, :] ** (-alpha)) / t[:, None] ** alpha
    return float(np.max(np.abs(vals)))
