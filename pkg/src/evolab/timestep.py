"""Backward Euler, ``r(z) = 1/(1+z)``, and the scalar defect suprema.

A "solver" is anything with ``backward_euler_solve(dt, x)`` returning
``(I + dt A_h)^-1 x``: :class:`~evolab.operators.SpectralOperator` and
:class:`~evolab.sfem.FemSystem` both qualify.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .errors import DomainError

# per-decade density of the lambda grids used for operator-norm suprema
POINTS_PER_DECADE = 512

# weight name -> (exponent of n, exponent of s = lambda dt)
WEIGHTS = {
    "one": (0.0, 0.0),  # |F_n|
    "shift": (0.0, -1.0),  # |F_n| / (dt lambda)
    "inv_time": (1.0, 0.0),  # |F_n| t_n / dt
    "half": (0.5, 0.5),  # |F_n| sqrt(lambda t_n)
}


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"terminal time must be > 0, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"step count must be a positive integer, got {self.N}")

    @property
    def dt(self):
        return self.T / self.N

    def time(self, n):
        return n * self.dt

    def times(self):
        return np.arange(self.N + 1) * self.dt

    def steps_to(self, t):
        """Number of factors of ``r`` applied at time ``t`` (``t in (t_n, t_{n+1}]`` gives n+1)."""
        if not 0 <= t <= self.T:
            raise DomainError(f"query time {t} outside [0, {self.T}]")
        if t == 0:
            return 0
        ratio = t / self.dt
        # absorb round-off so that t = n*dt maps to exactly n steps
        n = math.ceil(ratio - 1e-9 * max(1.0, ratio))
        return min(max(n, 1), self.N)


def backward_euler_step(solver, dt, x):
    if not dt > 0:
        raise DomainError(f"time step must be > 0, got {dt}")
    return solver.backward_euler_solve(dt, x)


def evolve_fully_discrete(solver, grid, x, t):
    """Evaluate the piecewise-constant backward-Euler approximation at time ``t``."""
    steps = grid.steps_to(t)
    y = np.asarray(x, dtype=float)
    for _ in range(steps):
        y = backward_euler_step(solver, grid.dt, y)
    return y


def lambda_grid(lo=1e-3, hi=1e3, per_decade=POINTS_PER_DECADE):
    decades = math.log10(hi) - math.log10(lo)
    count = int(round(decades * per_decade)) + 1
    return np.logspace(math.log10(lo), math.log10(hi), count)


def defect(n, s):
    """``F_n(s) = (1 + s)^-n - e^{-n s}``."""
    s = np.asarray(s, dtype=float)
    return np.exp(-n * np.log1p(s)) - np.exp(-n * s)


def _weight_exponents(weight):
    if isinstance(weight, tuple):
        return weight
    try:
        return WEIGHTS[weight]
    except KeyError:
        raise DomainError(f"unknown weight {weight!r}; expected one of {sorted(WEIGHTS)}") from None


def defect_sup_scalar(n, dt, weight, lambda_values):
    """Weighted supremum of ``|F_n(lambda dt)|`` over a lambda grid.

    ``weight`` selects the right-hand side being witnessed: ``"one"`` returns
    ``sup |F_n|``; ``"shift"`` divides by ``dt lambda``; ``"inv_time"`` scales
    by ``t_n / dt``; ``"half"`` scales by ``sqrt(lambda t_n)``. A pair
    ``(a, b)`` gives ``sup |F_n(s)| n^a s^b`` directly.
    """
    lam = np.asarray(lambda_values, dtype=float)
    if lam.size == 0:
        raise DomainError("empty lambda grid")
    if n < 1 or not dt > 0:
        raise DomainError("need n >= 1 and dt > 0")
    n_exp, s_exp = _weight_exponents(weight)
    return float(kernels.defect_sups(np.array([n]), lam * dt, n_exp, s_exp)[0])


def defect_sup_table(n_max, dt, weight, lambda_values):
    """``defect_sup_scalar`` for every ``n = 1..n_max`` at once."""
    lam = np.asarray(lambda_values, dtype=float)
    if lam.size == 0:
        raise DomainError("empty lambda grid")
    n_exp, s_exp = _weight_exponents(weight)
    return kernels.defect_sups(np.arange(1, n_max + 1), lam * dt, n_exp, s_exp)


def theta_rho_weight(theta, rho):
    """Exponents for ``|F_n| / (t_n^{(rho-theta)/2} dt^{theta/2} lambda^{rho/2})`` (P1, r = 2).

    With ``s = lambda dt`` and ``t_n = n dt`` this is ``|F_n(s)| n^{(theta-rho)/2} s^{-rho/2}``.
    """
    return ((theta - rho) / 2.0, -rho / 2.0)
