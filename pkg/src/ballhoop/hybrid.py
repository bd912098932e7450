"""Event-detected simulation of the three-mode hybrid model.

Modes: S1 rolling on the outer hoop, S2 free fall, S3 rolling on the inner
hoop.  Within a mode the active vector field is integrated by fixed-step RK4;
a guard that changes sign inside a step is localised by bisection, the reset
map is applied and integration resumes on the original step grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable

import numpy as np

from .model import (
    PHI, PHI_DOT, PSI, PSI_DOT, R, R_DOT, STATE_NAMES, THETA, THETA_DOT,
    Hoop, PlantParams, cartesian_position, f_roll, f_s2_polar, inner_coeffs,
    outer_coeffs, rk4_step, rolling_kinematics, rolling_spin_angle,
)


class Mode(IntEnum):
    S1 = 1
    S2 = 2
    S3 = 3


class Guard(IntEnum):
    G1 = 1  # S1 -> S2, ball leaves the outer hoop
    G2 = 2  # S2 -> S1, ball hits the outer hoop
    G3 = 3  # S2 -> S3, ball hits the inner hoop
    G4 = 4  # S3 -> S2, ball leaves the inner hoop


ARMED = {Mode.S1: (Guard.G1,), Mode.S2: (Guard.G2, Guard.G3), Mode.S3: (Guard.G4,)}
SOURCE = {Guard.G1: Mode.S1, Guard.G2: Mode.S2, Guard.G3: Mode.S2, Guard.G4: Mode.S3}

# a guard must exceed this to fire; absorbs rounding right after a reset
FIRE_EPS = {Guard.G1: 1e-10, Guard.G2: 1e-13, Guard.G3: 1e-13, Guard.G4: 1e-10}


class SimulationError(RuntimeError):
    """Raised on blow-up or chattering; carries the partial trace."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class HybridState:
    mode: Mode
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        x = np.asarray(self.x, dtype=float).reshape(8)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def roll(self) -> np.ndarray:
        """``[theta, theta_dot, psi, psi_dot]``."""
        return self.x[:4].copy()

    @classmethod
    def rolling(cls, mode, x4, p: PlantParams) -> "HybridState":
        """Rolling state with r, r_dot, phi, phi_dot filled in from the contact."""
        return cls(mode, pin_rolling(Mode(mode), np.asarray(x4, dtype=float)[:4], p))

    @classmethod
    def free(cls, theta=0.0, theta_dot=0.0, psi=0.0, psi_dot=0.0, r=0.0, r_dot=0.0,
             phi=0.0, phi_dot=0.0) -> "HybridState":
        return cls(Mode.S2, [theta, theta_dot, psi, psi_dot, r, r_dot, phi, phi_dot])


def pin_rolling(mode: Mode, x4: np.ndarray, p: PlantParams) -> np.ndarray:
    hoop = Hoop.OUTER if mode is Mode.S1 else Hoop.INNER
    x = np.zeros(8)
    x[:4] = x4[:4]
    x[R] = p.r_outer if mode is Mode.S1 else p.r_inner
    x[R_DOT] = 0.0
    x[PHI] = rolling_spin_angle(x4, p, hoop)
    x[PHI_DOT] = rolling_kinematics(x4, p, hoop)[1]
    return x


def guard_value(s: HybridState, p: PlantParams, which: Guard) -> float:
    which = Guard(which)
    if SOURCE[which] is not s.mode:
        raise ContractError(f"guard {which.name} is not armed in mode {s.mode.name}")
    return _guard(s.x, p, which)


def _guard(x, p: PlantParams, which: Guard) -> float:
    if which is Guard.G1:
        return -p.g * np.cos(x[PSI]) - p.r_outer * x[PSI_DOT] ** 2
    if which is Guard.G2:
        return x[R] - p.R_o + p.R_b
    if which is Guard.G3:
        return p.R_i + p.R_b - x[R]
    return p.g * np.cos(x[PSI]) + p.r_inner * x[PSI_DOT] ** 2


def _require(s: HybridState, p: PlantParams, which: Guard, tol: float = 1e-9):
    if s.mode is not SOURCE[which]:
        raise ContractError(f"reset for {which.name} needs mode {SOURCE[which].name}, got {s.mode.name}")
    if _guard(s.x, p, which) < -tol:
        raise ContractError(f"reset for {which.name} called with inactive guard")


def reset_s1_to_s2(s: HybridState, p: PlantParams, check: bool = True) -> HybridState:
    if check:
        _require(s, p, Guard.G1)
    x = np.array(s.x)
    x[R] = p.R_o - p.R_b
    x[R_DOT] = 0.0
    x[PHI] = (s.x[THETA] - s.x[PSI]) * p.R_o / p.R_b
    x[PHI_DOT] = (p.R_o + p.R_b) / p.R_b * s.x[THETA_DOT] - p.R_o / p.R_b * s.x[PSI_DOT]
    return HybridState(Mode.S2, x)


def reset_s2_to_s1(s: HybridState, p: PlantParams, check: bool = True) -> HybridState:
    if check:
        _require(s, p, Guard.G2)
    psi_dot_rot = s.x[THETA_DOT] - p.R_b / p.R_o * s.x[PHI_DOT]
    x4 = s.x[:4].copy()
    x4[3] = s.x[PSI_DOT] + psi_dot_rot
    return HybridState.rolling(Mode.S1, x4, p)


def reset_s2_to_s3(s: HybridState, p: PlantParams, check: bool = True) -> HybridState:
    if check:
        _require(s, p, Guard.G3)
    psi_dot_rot = s.x[THETA_DOT] + p.R_b / p.R_i * s.x[PHI_DOT]
    x4 = s.x[:4].copy()
    x4[3] = s.x[PSI_DOT] + psi_dot_rot
    return HybridState.rolling(Mode.S3, x4, p)


def reset_s3_to_s2(s: HybridState, p: PlantParams, check: bool = True) -> HybridState:
    if check:
        _require(s, p, Guard.G4)
    x = np.array(s.x)
    x[R] = p.R_i + p.R_b
    x[R_DOT] = 0.0
    x[PHI] = -(s.x[THETA] - s.x[PSI]) * p.R_i / p.R_b
    x[PHI_DOT] = -((p.R_i - p.R_b) / p.R_b * s.x[THETA_DOT] - p.R_i / p.R_b * s.x[PSI_DOT])
    return HybridState(Mode.S2, x)


RESETS = {
    Guard.G1: reset_s1_to_s2,
    Guard.G2: reset_s2_to_s1,
    Guard.G3: reset_s2_to_s3,
    Guard.G4: reset_s3_to_s2,
}


def apply_reset(s: HybridState, p: PlantParams, which: Guard) -> HybridState:
    return RESETS[Guard(which)](s, p)


@dataclass(frozen=True)
class SimOptions:
    step: float = 1e-3
    event_tol: float = 1e-9
    max_events: int = 50
    t_end: float = 1.0
    hoop_actuated_in_flight: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0 < self.event_tol < self.step:
            raise ValueError("need 0 < event_tol < step")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")


@dataclass
class Event:
    t: float
    guard: Guard
    pre: HybridState
    post: HybridState


@dataclass
class SimTrace:
    t: np.ndarray
    mode: np.ndarray
    x: np.ndarray
    u: np.ndarray
    events: list[Event] = field(default_factory=list)

    @property
    def final(self) -> HybridState:
        return HybridState(Mode(int(self.mode[-1])), self.x[-1])

    def guards_fired(self) -> list[Guard]:
        return [e.guard for e in self.events]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mode", *STATE_NAMES, "u"])
            for t, m, x, u in zip(self.t, self.mode, self.x, self.u):
                w.writerow([repr(float(t)), f"S{int(m)}", *(repr(float(v)) for v in x), repr(float(u))])

    def events_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "guard", "pre_mode", *(f"pre_{n}" for n in STATE_NAMES),
                        "post_mode", *(f"post_{n}" for n in STATE_NAMES)])
            for e in self.events:
                w.writerow([repr(float(e.t)), e.guard.name, e.pre.mode.name, *map(repr, map(float, e.pre.x)),
                            e.post.mode.name, *map(repr, map(float, e.post.x))])


Controller = Callable[[float, HybridState], float]


def zero_controller(t: float, s: HybridState) -> float:
    return 0.0


class _Flow:
    """One RK4 step of length ``h`` in a given mode, with a frozen input."""

    def __init__(self, p: PlantParams, hoop_actuated: bool):
        self.p = p
        self.cs = {Mode.S1: outer_coeffs(p), Mode.S3: inner_coeffs(p)}
        self.hoop_actuated = hoop_actuated

    def __call__(self, mode: Mode, x: np.ndarray, u: float, h: float) -> np.ndarray:
        if mode is Mode.S2:
            return rk4_step(lambda z: f_s2_polar(z, u, self.p, self.hoop_actuated), x, h)
        c = self.cs[mode]
        x4 = rk4_step(lambda z: f_roll(z, u, c), x[:4], h)
        return pin_rolling(mode, x4, self.p)


def _validate_initial(s: HybridState, p: PlantParams) -> HybridState:
    if s.mode is Mode.S2:
        return s
    r_pin = p.r_outer if s.mode is Mode.S1 else p.r_inner
    if abs(s.x[R] - r_pin) > 1e-9 and s.x[R] != 0.0:
        raise ContractError(f"mode {s.mode.name} requires r = {r_pin}")
    if s.x[R_DOT] != 0.0:
        raise ContractError(f"mode {s.mode.name} requires r_dot = 0")
    return HybridState.rolling(s.mode, s.x[:4], p)


def _localise(flow, mode, x, u, h, p, which, tol):
    """Smallest sub-step at which ``which`` is positive, by bisection."""
    lo, hi = 0.0, h
    x_hi = flow(mode, x, u, hi)
    for _ in range(200):
        g_hi = _guard(x_hi, p, which)
        if hi - lo <= tol and g_hi <= FIRE_EPS[which]:
            break
        if hi - lo <= 1e-15 * max(1.0, h):
            break
        mid = 0.5 * (lo + hi)
        x_mid = flow(mode, x, u, mid)
        if _guard(x_mid, p, which) > 0.0:
            hi, x_hi = mid, x_mid
        else:
            lo = mid
    return hi, x_hi


def simulate(x0: HybridState, controller: Controller | None, p: PlantParams,
             opts: SimOptions = SimOptions()) -> SimTrace:
    """Integrate the hybrid system from ``x0`` over ``[0, opts.t_end]``.

    ``controller(t, state)`` is evaluated at the start of every integration
    segment and held constant over it.
    """
    controller = controller or zero_controller
    flow = _Flow(p, opts.hoop_actuated_in_flight)
    s = _validate_initial(x0, p)
    ts, modes, xs, us = [0.0], [int(s.mode)], [np.array(s.x)], [0.0]
    events: list[Event] = []

    def partial():
        return SimTrace(np.array(ts), np.array(modes), np.array(xs), np.array(us), events)

    def fire(t, which, pre_x):
        pre = HybridState(s.mode, pre_x)
        post = apply_reset(pre, p, which)
        events.append(Event(t, which, pre, post))
        if len(events) > opts.max_events:
            raise SimulationError(f"more than {opts.max_events} events (chattering)", partial())
        return post

    def immediate(x):
        for which in ARMED[s.mode]:
            if _guard(x, p, which) > FIRE_EPS[which]:
                return which
        return None

    n_steps = int(round(opts.t_end / opts.step))
    t = 0.0
    for k in range(n_steps):
        t_next = (k + 1) * opts.step
        while t_next - t > 1e-14:
            which = immediate(s.x)
            if which is not None:
                s = fire(t, which, s.x)
                modes[-1], xs[-1] = int(s.mode), np.array(s.x)
                continue
            u = float(controller(t, s))
            us[-1] = u
            h = t_next - t
            x1 = flow(s.mode, s.x, u, h)
            if not np.all(np.isfinite(x1)):
                raise SimulationError(f"non-finite state at t={t_next:.6f}", partial())
            hits = []
            for which in ARMED[s.mode]:
                if _guard(x1, p, which) > FIRE_EPS[which]:
                    tau, x_e = _localise(flow, s.mode, s.x, u, h, p, which, opts.event_tol)
                    hits.append((tau, int(which), x_e))
            if hits:
                tau, which, x_e = min(hits, key=lambda e: (e[0], e[1]))
                t = t + tau
                s = fire(t, Guard(which), x_e)
            else:
                t = t_next
                s = HybridState(s.mode, x1)
            ts.append(t)
            modes.append(int(s.mode))
            xs.append(np.array(s.x))
            us.append(u)
    return partial()
