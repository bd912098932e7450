"""Closed-form free flight and the takeoff searches for the inner-hoop task."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..hybrid import HybridState, Mode, reset_s1_to_s2, reset_s2_to_s3
from ..model import PHI, PHI_DOT, PSI, THETA, THETA_DOT, PlantParams, cartesian_velocity, wrap_angle


@dataclass(frozen=True)
class Landing:
    state: HybridState  # free-flight state at contact, before the reset
    flight_time: float


def _parabola(s: HybridState, p: PlantParams):
    x0 = s.x[4] * np.cos(s.x[PSI])
    y0 = s.x[4] * np.sin(s.x[PSI])
    vx, vy = cartesian_velocity(s.x)

    def pos(t):
        return x0 + vx * t + 0.5 * p.g * t**2, y0 + vy * t

    def vel(t):
        return vx + p.g * t, vy + 0 * t

    return pos, vel


def _bisect(fun, lo, hi, tol):
    """Root of ``fun`` on ``[lo, hi]`` with ``fun(lo) < 0 <= fun(hi)``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fun(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def ballistic_landing_map(takeoff: HybridState, p: PlantParams, t_max: float = 2.0,
                          scan_step: float = 1e-4, tol: float = 1e-12) -> Landing | None:
    """First contact of the free-flight arc with the inner-hoop contact circle.

    Returns ``None`` when the arc reaches the outer hoop first or nothing is hit
    within ``t_max``.  The hoop coasts during flight.
    """
    if takeoff.mode is not Mode.S2:
        raise ValueError("takeoff state must be in free fall")
    pos, vel = _parabola(takeoff, p)
    ts = np.arange(1, int(np.ceil(t_max / scan_step)) + 1) * scan_step
    x, y = pos(ts)
    d = np.hypot(x, y)
    inner = np.flatnonzero(d < p.r_inner)
    outer = np.flatnonzero(d - p.r_outer > 1e-13)
    if inner.size == 0 or (outer.size and outer[0] < inner[0]):
        return None
    i = inner[0]
    lo = ts[i - 1] if i > 0 else 0.0

    def gap(t):
        xx, yy = pos(t)
        return p.r_inner - np.hypot(xx, yy)

    t_hit = _bisect(gap, lo, ts[i], tol)
    # continuous polar angle, unwrapped along the scan from the takeoff angle
    angles = np.unwrap(np.concatenate([[takeoff.x[PSI]], np.arctan2(y[:i], x[:i])]))
    xh, yh = pos(t_hit)
    psi = angles[-1] + wrap_angle(np.arctan2(yh, xh) - angles[-1])
    vx, vy = vel(t_hit)
    r = np.hypot(xh, yh)
    x_state = np.array(takeoff.x)
    x_state[THETA] = takeoff.x[THETA] + takeoff.x[THETA_DOT] * t_hit
    x_state[PSI] = psi
    x_state[3] = (xh * vy - yh * vx) / r**2
    x_state[4] = r
    x_state[5] = (xh * vx + yh * vy) / r
    x_state[PHI] = takeoff.x[PHI] + takeoff.x[PHI_DOT] * t_hit
    return Landing(HybridState(Mode.S2, x_state), float(t_hit))


def takeoff_state(psi: float, psi_dot: float, theta_dot: float, p: PlantParams, theta: float = 0.0) -> HybridState:
    """Free-flight state right after leaving the outer hoop."""
    s1 = HybridState.rolling(Mode.S1, [theta, theta_dot, psi, psi_dot], p)
    return reset_s1_to_s2(s1, p, check=False)


def post_impact_psi_dot(theta_dot: float, psi: float, psi_dot: float, p: PlantParams) -> float:
    """Rolling rate on the inner hoop right after landing, for a given hoop rate."""
    land = ballistic_landing_map(takeoff_state(psi, psi_dot, theta_dot, p), p)
    if land is None:
        raise NoHitError("takeoff never reaches the inner hoop")
    return float(reset_s2_to_s3(land.state, p, check=False).x[3])


class NoHitError(RuntimeError):
    pass


def _golden(fun, a, b, tol):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def find_thetadot_des(takeoff_psi: float, takeoff_psidot: float, p: PlantParams,
                      bracket=(-100.0, 100.0), n_scan: int = 64, tol: float = 1e-10) -> float:
    """Hoop rate at takeoff that minimises the rolling rate after landing."""
    land = ballistic_landing_map(takeoff_state(takeoff_psi, takeoff_psidot, 0.0, p), p)
    if land is None:
        raise NoHitError("takeoff never reaches the inner hoop")

    def objective(td):
        # the arc does not depend on the hoop rate; only theta and phi do
        s = takeoff_state(takeoff_psi, takeoff_psidot, td, p)
        x = np.array(land.state.x)
        x[THETA] = s.x[THETA] + td * land.flight_time
        x[THETA_DOT] = td
        x[PHI] = s.x[PHI] + s.x[PHI_DOT] * land.flight_time
        x[PHI_DOT] = s.x[PHI_DOT]
        return abs(reset_s2_to_s3(HybridState(Mode.S2, x), p, check=False).x[3])

    grid = np.linspace(bracket[0], bracket[1], n_scan)
    vals = [objective(v) for v in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)]
    best = _golden(objective, a, b, tol)
    return best if objective(best) <= vals[i] else float(grid[i])


def liftoff_rate(psi: float, p: PlantParams, direction: float = -1.0, guard: float = 0.0) -> float:
    """Rolling rate at which the lift-off guard equals ``guard`` at angle ``psi``."""
    v2 = (-p.g * np.cos(psi) - guard) / p.r_outer
    if v2 < 0:
        raise ValueError(f"no lift-off rate at psi={psi}")
    return float(np.sign(direction) * np.sqrt(v2))


@dataclass(frozen=True)
class Takeoff:
    psi: float
    psi_dot: float
    theta_dot: float
    landing: Landing
    landing_error: float  # wrapped psi_land - pi
    psi_dot_after: float


class NoTakeoffError(RuntimeError):
    pass


def landing_error(psi: float, p: PlantParams, direction: float = -1.0) -> float:
    land = ballistic_landing_map(takeoff_state(psi, liftoff_rate(psi, p, direction), 0.0, p), p)
    return np.nan if land is None else wrap_angle(land.state.x[PSI] - np.pi)


def find_takeoff(p: PlantParams, window: float = 0.3, direction: float = -1.0,
                 psi_range=None, n_scan: int = 181, bracket=(-100.0, 100.0)) -> Takeoff:
    """Search the lift-off angle whose arc lands on top of the inner hoop.

    The rolling rate is pinned to the lift-off boundary, so the angle is the
    only free parameter; the hoop rate then follows from
    :func:`find_thetadot_des`.
    """
    if psi_range is None:
        lo, hi = np.pi / 2 + 1e-3, np.pi - 1e-3
        psi_range = (-hi, -lo) if direction < 0 else (lo, hi)
    grid = np.linspace(psi_range[0], psi_range[1], n_scan)
    err = np.array([landing_error(v, p, direction) for v in grid])
    candidates = []
    for j in range(n_scan - 1):
        e0, e1 = err[j], err[j + 1]
        if np.isfinite(e0) and np.isfinite(e1) and np.sign(e0) != np.sign(e1) and abs(e0 - e1) < np.pi:
            root = optimize.brentq(landing_error, grid[j], grid[j + 1], args=(p, direction), xtol=1e-13)
            candidates.append(root)
    if not candidates and np.any(np.isfinite(err)):
        candidates.append(float(grid[np.nanargmin(np.abs(err))]))
    results = []
    for psi in candidates:
        e = landing_error(psi, p, direction)
        if not abs(e) < window:
            continue
        psi_dot = liftoff_rate(psi, p, direction)
        td = find_thetadot_des(psi, psi_dot, p, bracket)
        land = ballistic_landing_map(takeoff_state(psi, psi_dot, td, p), p)
        after = reset_s2_to_s3(land.state, p, check=False).x[3]
        results.append(Takeoff(float(psi), psi_dot, td, land, float(e), float(after)))
    if not results:
        raise NoTakeoffError(f"no lift-off angle lands within {window} rad of the inner-hoop top")
    # prefer the gentlest landing, then the shortest flight
    return min(results, key=lambda r: (abs(r.psi_dot_after) + abs(r.landing_error), r.landing.flight_time))
