"""The two tasks as collocation problems."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..model import PlantParams, outer_coeffs
from .collocation import OcpSpec, RollDynamics, StateGuard, Trajectory, transcribe
from .solver import SolveError, solve


def liftoff_guard(p: PlantParams) -> StateGuard:
    """Outer-hoop lift-off guard on the rolling 4-state."""
    r = p.r_outer

    def value(x):
        return -p.g * np.cos(x[2]) - r * x[3] ** 2

    def grad(x):
        return np.array([0.0, 0.0, p.g * np.sin(x[2]), -2.0 * r * x[3]])

    return StateGuard(value, grad)


def task1_spec(p: PlantParams, u_max=250.0, T_max=2.5, N=80, guard_margin=0.5) -> OcpSpec:
    return OcpSpec(
        x_init=np.zeros(4),
        terminal=[(1, 0.0), (2, -2.0 * np.pi), (3, 0.0)],
        u_max=u_max, T_max=T_max, N=N,
        path_guard=liftoff_guard(p), guard_margin=guard_margin,
    )


def mesh_levels(N: int, coarsest: int = 20) -> list[int]:
    """Knot counts for coarse-to-fine continuation ending at ``N``."""
    levels = [N]
    while levels[-1] // 2 >= coarsest:
        levels.append(levels[-1] // 2)
    return levels[::-1]


def _coarse_starts(spec: OcpSpec, dyn, backend, maxiter, T_fractions):
    """Local solutions on one mesh from several starts: the straight-line guess,
    then fixed-horizon solves released to a free horizon."""
    found, errors = [], []
    try:
        found.append(solve(transcribe(spec, dyn), None, backend=backend, maxiter=maxiter))
    except SolveError as e:
        errors.append(e)
    for frac in T_fractions:
        try:
            fixed = solve(transcribe(replace(spec, T_fixed=frac * spec.T_max), dyn), None,
                          backend=backend, maxiter=maxiter)
            found.append(solve(transcribe(spec, dyn), fixed, backend=backend, maxiter=maxiter))
        except SolveError as e:
            errors.append(e)
    if not found:
        best = min(errors, key=lambda e: e.violation)
        raise SolveError(f"no start converged on the coarse mesh: {best}", best.best, best.violation)
    return min(found, key=lambda tr: tr.meta["objective"])


def solve_continuation(make_spec, dyn, N, init=None, backend="slsqp", maxiter=500,
                       warm_start=True, T_fractions=()) -> Trajectory:
    """Solve on a coarse mesh first, then re-solve on finer meshes.

    The dense SLSQP subproblem scales cubically with the knot count, so
    converging most of the way on a small mesh is much cheaper.
    """
    levels = mesh_levels(N) if (warm_start and init is None) else [N]
    traj = init
    for j, n in enumerate(levels):
        if j == 0 and traj is None and T_fractions:
            traj = _coarse_starts(make_spec(n), dyn, backend, maxiter, T_fractions)
        else:
            traj = solve(transcribe(make_spec(n), dyn), traj, backend=backend, maxiter=maxiter)
    traj.meta["mesh_levels"] = levels
    return traj


T_FRACTIONS = (0.2, 0.3, 0.4, 0.6, 0.8)


def solve_task1(p: PlantParams, u_max=250.0, T_max=2.5, N=80, guard_margin=0.5,
                backend="slsqp", init: Trajectory | None = None, maxiter=500,
                warm_start=True) -> Trajectory:
    """Loop the ball once around the outer hoop and bring everything to rest."""
    traj = solve_continuation(lambda n: task1_spec(p, u_max, T_max, n, guard_margin),
                              RollDynamics(outer_coeffs(p)), N, init, backend, maxiter, warm_start)
    traj.meta["task"] = "task1"
    return traj


def task2_spec(p: PlantParams, takeoff, u_max=250.0, T_max=2.5, N=80, guard_margin=0.5) -> OcpSpec:
    """Rest to lift-off at ``(theta_dot_des, psi_des, psi_dot_des)``.

    The lift-off guard must hold with margin on every knot but the last and be
    non-negative at the last, so the ball actually leaves the hoop there.
    """
    g = liftoff_guard(p)
    return OcpSpec(
        x_init=np.zeros(4),
        terminal=[(1, takeoff.theta_dot), (2, takeoff.psi), (3, takeoff.psi_dot)],
        u_max=u_max, T_max=T_max, N=N,
        path_guard=g, guard_margin=guard_margin, guard_knots=range(N - 1),
        terminal_guard=g, terminal_guard_min=-1e-9,
    )


def solve_task2(p: PlantParams, u_max=250.0, T_max=2.5, N=80, guard_margin=0.5, window=0.3,
                takeoff=None, backend="slsqp", maxiter=500, warm_start=True):
    """Trajectory on the outer hoop ending at a lift-off that lands on the inner hoop.

    Returns ``(trajectory, takeoff, landed_state)`` where ``landed_state`` is
    the predicted rolling state on the inner hoop just after impact.
    """
    from ..hybrid import reset_s2_to_s3
    from .ballistic import ballistic_landing_map, find_takeoff, takeoff_state

    if takeoff is None:
        takeoff = find_takeoff(p, window=window)
    traj = solve_continuation(lambda n: task2_spec(p, takeoff, u_max, T_max, n, guard_margin),
                              RollDynamics(outer_coeffs(p)), N, None, backend, maxiter, warm_start,
                              T_fractions=T_FRACTIONS)
    xf = traj.states[-1]
    land = ballistic_landing_map(takeoff_state(xf[2], xf[3], xf[1], p, theta=xf[0]), p)
    if land is None:
        from .ballistic import NoHitError
        raise NoHitError("terminal knot does not reach the inner hoop")
    landed = reset_s2_to_s3(land.state, p, check=False)
    traj.meta.update(task="task2", psi_des=takeoff.psi, psi_dot_des=takeoff.psi_dot,
                     theta_dot_des=takeoff.theta_dot, flight_time=land.flight_time,
                     psi_land=float(land.state.x[2]), psi_dot_after=float(landed.x[3]))
    return traj, takeoff, landed
