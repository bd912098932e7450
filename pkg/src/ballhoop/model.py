"""Plant parameters and the mode-wise vector fields of the ball-in-double-hoop.

Coordinates: the x-axis points down (along gravity), ``psi`` is measured from
the downward vertical, so the outer-hoop rest point is ``psi = 0`` and the
balance point on top of the inner hoop is ``psi = pi``.

Rolling state (modes S1 and S3) is the 4-vector ``[theta, theta_dot, psi,
psi_dot]``.  The full hybrid state is the 8-vector
``[theta, theta_dot, psi, psi_dot, r, r_dot, phi, phi_dot]``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from enum import Enum

import numpy as np

# indices into the 8-vector hybrid state
THETA, THETA_DOT, PSI, PSI_DOT, R, R_DOT, PHI, PHI_DOT = range(8)
STATE_NAMES = ("theta", "theta_dot", "psi", "psi_dot", "r", "r_dot", "phi", "phi_dot")
ROLL_NAMES = STATE_NAMES[:4]

MIN_RADIUS = 1e-6


class Hoop(str, Enum):
    OUTER = "outer"
    INNER = "inner"


@dataclass(frozen=True)
class PlantParams:
    """Physical constants, SI units. Defaults are the demonstration model."""

    R_o: float = 95.8e-3
    R_i: float = 43.8e-3
    R_b: float = 7.7e-3
    m: float = 0.032
    I: float = 1.28e-6
    b: float = 1.4e-6
    g: float = 9.81

    def __post_init__(self):
        # b == 0 is allowed for frictionless studies
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0 or (v == 0 and f.name != "b"):
                raise ValueError(f"PlantParams.{f.name} must be positive, got {v}")
        if not self.R_b < self.R_i < self.R_o:
            raise ValueError("need R_b < R_i < R_o")

    @property
    def r_outer(self) -> float:
        """Radius of the ball-centre circle when rolling on the outer hoop."""
        return self.R_o - self.R_b

    @property
    def r_inner(self) -> float:
        """Radius of the ball-centre circle when rolling on the inner hoop."""
        return self.R_i + self.R_b

    def perturbed(self, m: float = 1.0, I: float = 1.0, b: float = 1.0) -> "PlantParams":
        """Copy with multiplicative factors on mass, inertia and friction."""
        return replace(self, m=self.m * m, I=self.I * I, b=self.b * b)

    @classmethod
    def from_mapping(cls, d) -> "PlantParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown plant keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class RollCoeffs:
    """Coefficients of ``a psi'' + b psi' + c sin(psi) + d theta' = e theta''``."""

    a_bar: float
    b_bar: float
    c_bar: float
    d_bar: float
    e_bar: float


def outer_coeffs(p: PlantParams) -> RollCoeffs:
    k = p.R_o / p.R_b
    b_bar = p.b * k**2
    return RollCoeffs(
        a_bar=p.m * (p.R_o - p.R_b) ** 2 + p.I * k**2,
        b_bar=b_bar,
        c_bar=p.m * p.g * (p.R_o - p.R_b),
        d_bar=-b_bar,
        e_bar=p.I * k * (k + 1.0),
    )


def inner_coeffs(p: PlantParams) -> RollCoeffs:
    k = p.R_i / p.R_b
    b_bar = p.b * k**2
    return RollCoeffs(
        a_bar=p.m * (p.R_i + p.R_b) ** 2 + p.I * k**2,
        b_bar=b_bar,
        c_bar=p.m * p.g * (p.R_i + p.R_b),
        d_bar=-b_bar,
        e_bar=p.I * k * (k - 1.0),
    )


def coeffs_for(p: PlantParams, hoop: Hoop) -> RollCoeffs:
    return outer_coeffs(p) if Hoop(hoop) is Hoop.OUTER else inner_coeffs(p)


def f_roll(x, u: float, c: RollCoeffs) -> np.ndarray:
    """Rolling vector field shared by S1 and S3 (they differ only in ``c``)."""
    x2, x3, x4 = x[1], x[2], x[3]
    psi_ddot = (-c.b_bar * x4 - c.c_bar * np.sin(x3) - c.d_bar * x2 + c.e_bar * u) / c.a_bar
    return np.array([x2, u, x4, psi_ddot])


def f_s1(x, u: float, c: RollCoeffs) -> np.ndarray:
    return f_roll(x, u, c)


def f_s3(x, u: float, c: RollCoeffs) -> np.ndarray:
    return f_roll(x, u, c)


def roll_jacobians(x, u: float, c: RollCoeffs) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(df/dx, df/du)`` of :func:`f_roll`."""
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[2, 3] = 1.0
    A[3, 1] = -c.d_bar / c.a_bar
    A[3, 2] = -c.c_bar * np.cos(x[2]) / c.a_bar
    A[3, 3] = -c.b_bar / c.a_bar
    B = np.array([0.0, 1.0, 0.0, c.e_bar / c.a_bar])
    return A, B


def f_s2_polar(x, u: float, p: PlantParams, hoop_actuated: bool = True) -> np.ndarray:
    """Free-fall vector field on the full 8-vector.

    The ball centre obeys the polar form of ``x'' = g, y'' = 0``, the spin is
    constant and the hoop keeps integrating its commanded acceleration unless
    ``hoop_actuated`` is False.
    """
    r, r_dot, psi, psi_dot = x[R], x[R_DOT], x[PSI], x[PSI_DOT]
    if r < MIN_RADIUS:
        raise FloatingPointError(f"free-fall radius degenerate: r={r:.3e}")
    dx = np.zeros(8)
    dx[THETA] = x[THETA_DOT]
    dx[THETA_DOT] = u if hoop_actuated else 0.0
    dx[PSI] = psi_dot
    dx[PSI_DOT] = -(p.g * np.sin(psi) + 2.0 * psi_dot * r_dot) / r
    dx[R] = r_dot
    dx[R_DOT] = r * psi_dot**2 + p.g * np.cos(psi)
    dx[PHI] = x[PHI_DOT]
    dx[PHI_DOT] = 0.0
    return dx


def rolling_kinematics(x, p: PlantParams, hoop: Hoop = Hoop.OUTER) -> tuple[float, float]:
    """Translational velocity of the ball centre and spin rate relative to the hoop.

    On the inner hoop the spin angle has the opposite orientation.
    """
    theta_dot, psi_dot = x[1], x[3]
    if Hoop(hoop) is Hoop.OUTER:
        return -p.r_outer * psi_dot, (p.R_o / p.R_b) * (theta_dot - psi_dot)
    return -p.r_inner * psi_dot, -(p.R_i / p.R_b) * (theta_dot - psi_dot)


def rolling_spin_angle(x, p: PlantParams, hoop: Hoop = Hoop.OUTER) -> float:
    theta, psi = x[0], x[2]
    if Hoop(hoop) is Hoop.OUTER:
        return (p.R_o / p.R_b) * (theta - psi)
    return -(p.R_i / p.R_b) * (theta - psi)


def outer_energy(x, p: PlantParams) -> float:
    """Kinetic co-energy plus potential energy of the ball on the outer hoop."""
    theta_dot, psi, psi_dot = x[1], x[2], x[3]
    k = p.R_o / p.R_b
    T = 0.5 * p.m * p.r_outer**2 * psi_dot**2 + 0.5 * p.I * (
        (p.R_o + p.R_b) / p.R_b * theta_dot - k * psi_dot
    ) ** 2
    V = -p.m * p.g * p.r_outer * np.cos(psi)
    return T + V


def free_fall_energy(x, p: PlantParams) -> float:
    """Translational energy of the ball centre in free fall (V = -m g x)."""
    r, r_dot, psi, psi_dot = x[R], x[R_DOT], x[PSI], x[PSI_DOT]
    return 0.5 * p.m * (r_dot**2 + r**2 * psi_dot**2) - p.m * p.g * r * np.cos(psi)


def cartesian_position(x) -> np.ndarray:
    """Ball-centre position ``(x_down, y)`` from a hybrid 8-vector."""
    return np.array([x[R] * np.cos(x[PSI]), x[R] * np.sin(x[PSI])])


def cartesian_velocity(x) -> np.ndarray:
    r, r_dot, psi, psi_dot = x[R], x[R_DOT], x[PSI], x[PSI_DOT]
    c, s = np.cos(psi), np.sin(psi)
    return np.array([r_dot * c - r * psi_dot * s, r_dot * s + r * psi_dot * c])


def rk4_step(f, x, h: float):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.remainder(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w
