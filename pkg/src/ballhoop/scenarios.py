"""End-to-end scenarios shared by the command line, scripts and tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closedloop import ClosedLoopResult, loop_outcome, run_closed_loop
from .config import ScenarioConfig
from .control import GainSchedule, StationaryLqr, riccati_backward, stationary_lqr
from .estimation import NoiseConfig
from .hybrid import Guard, HybridState, Mode, SimOptions
from .model import PlantParams, inner_coeffs, outer_coeffs, rk4_step, wrap_angle
from .trajopt.collocation import RollDynamics, Trajectory
from .trajopt.tasks import liftoff_guard, solve_task1, solve_task2

BALANCE_EQ = np.array([0.0, 0.0, np.pi, 0.0])


def rollout(traj: Trajectory, p: PlantParams, substeps: int = 20) -> np.ndarray:
    """Open-loop RK4 replay of the nominal input (linear between knots) on the rolling model.

    Returns the replayed state at every knot.
    """
    dyn = RollDynamics(outer_coeffs(p))
    out = [np.array(traj.states[0], dtype=float)]
    x = out[0].copy()
    for k in range(traj.N - 1):
        t0, t1 = traj.times[k], traj.times[k + 1]
        h = (t1 - t0) / substeps
        for j in range(substeps):
            ta = t0 + j * h
            # non-autonomous RK4: the stage inputs follow the interpolated u
            u0, um, u1 = traj.u_at(ta), traj.u_at(ta + h / 2), traj.u_at(ta + h)
            k1 = dyn.f(x, u0)
            k2 = dyn.f(x + h / 2 * k1, um)
            k3 = dyn.f(x + h / 2 * k2, um)
            k4 = dyn.f(x + h * k3, u1)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)


def task1_metrics(traj: Trajectory, p: PlantParams, u_max: float) -> dict:
    g = liftoff_guard(p)
    guards = np.array([g.value(x) for x in traj.states])
    xf = traj.states[-1]
    replay = rollout(traj, p)
    return {
        "objective": float(traj.meta.get("objective", np.nan)),
        "T_f": float(traj.T_f),
        "N": int(traj.N),
        "residual_psi": float(xf[2] + 2 * np.pi),
        "residual_psi_dot": float(xf[3]),
        "residual_theta_dot": float(xf[1]),
        "max_defect": float(traj.meta.get("max_defect", np.nan)),
        "max_guard": float(guards.max()),
        "max_abs_u": float(np.max(np.abs(traj.inputs))),
        "u_max": float(u_max),
        "rollout_mismatch": float(np.max(np.abs(replay - traj.states))),
        "rollout_psi_error": float(replay[-1, 2] - xf[2]),
    }


def design_task1(cfg: ScenarioConfig) -> tuple[Trajectory, GainSchedule]:
    o = cfg.ocp
    traj = solve_task1(cfg.plant, o.u_max, o.T_max, o.N, o.guard_margin, o.backend,
                       maxiter=o.maxiter, warm_start=o.warm_start)
    gains = riccati_backward(traj, cfg.lqr.tracking, RollDynamics(outer_coeffs(cfg.plant)))
    return traj, gains


def design_balance(cfg: ScenarioConfig) -> StationaryLqr:
    return stationary_lqr(BALANCE_EQ, cfg.lqr.balance, RollDynamics(inner_coeffs(cfg.plant)))


def tracking_run(cfg: ScenarioConfig, traj: Trajectory, gains: GainSchedule, feedback=True,
                 estimator=True, seed=None, t_end=None) -> tuple[ClosedLoopResult, dict]:
    """Perturbed plant + camera + EKF + TV-LQR along a rolling trajectory."""
    seed = cfg.seed if seed is None else seed
    res = run_closed_loop(traj, gains, cfg.true_plant, cfg.plant, cfg.noise, cfg.ocp.u_max,
                          t_end=t_end, seed=seed, feedback=feedback, estimator=estimator, sim=cfg.sim)
    out = loop_outcome(res.trace, target_psi=float(traj.states[-1, 2]))
    out["success"] = (not out["dropped"]) and abs(out["final_psi_error"]) < 0.1
    out["saturated_samples"] = int(sum(r.saturated for r in res.telemetry))
    return res, out


@dataclass
class Task2Result:
    traj: Trajectory
    takeoff: object
    landed: HybridState
    gains: GainSchedule
    balance: StationaryLqr
    run: ClosedLoopResult
    metrics: dict = field(default_factory=dict)


def task2_metrics(run: ClosedLoopResult, t_end: float) -> dict:
    tr = run.trace
    ev = tr.events
    modes = [int(tr.mode[0])]
    for e in ev:
        modes.append(int(e.post.mode))
    g1 = next((e for e in ev if e.guard is Guard.G1), None)
    g3 = next((e for e in ev if e.guard is Guard.G3), None)
    last = tr.t >= t_end - 1.0 - 1e-12
    on_inner = tr.mode[last] == Mode.S3
    hold = np.abs(wrap_angle(tr.x[last, 2] - np.pi))
    m = {
        "mode_sequence": modes,
        "liftoff_time": g1.t if g1 else None,
        "landing_time": g3.t if g3 else None,
        "sim_flight_time": (g3.t - g1.t) if (g1 and g3) else None,
        "landing_error": float(wrap_angle(g3.pre.x[2] - np.pi)) if g3 else None,
        "sim_psi_dot_after": float(g3.post.x[3]) if g3 else None,
        "final_mode": int(tr.mode[-1]),
        "final_second_max_error": float(hold.max()) if on_inner.all() else float("inf"),
    }
    m["success"] = bool(
        modes[:3] == [1, 2, 3] and m["landing_error"] is not None and abs(m["landing_error"]) <= 0.3
        and m["final_second_max_error"] < 0.05
    )
    return m


def run_task2(cfg: ScenarioConfig, t_end: float = 5.0, estimator: bool = False) -> Task2Result:
    """Takeoff search, OCP, ballistic prediction, balance design and S1 -> S2 -> S3 verification.

    The verification run feeds back the true state by default, matching a
    pure simulation study; ``estimator=True`` routes S1 feedback through the
    delayed EKF instead.
    """
    o = cfg.ocp
    traj, takeoff, landed = solve_task2(cfg.plant, o.u_max, o.T_max, o.N, o.guard_margin,
                                        o.landing_window, backend=o.backend, maxiter=o.maxiter,
                                        warm_start=o.warm_start)
    gains = riccati_backward(traj, cfg.lqr.tracking, RollDynamics(outer_coeffs(cfg.plant)))
    balance = design_balance(cfg)
    run = run_closed_loop(traj, gains, cfg.true_plant, cfg.plant, cfg.noise, o.u_max, t_end=t_end,
                          seed=cfg.seed, estimator=estimator, balance=balance, sim=cfg.sim)
    m = task2_metrics(run, t_end)
    m.update(
        objective=float(traj.meta["objective"]), T_f=float(traj.T_f),
        psi_des=takeoff.psi, psi_dot_des=takeoff.psi_dot, theta_dot_des=takeoff.theta_dot,
        flight_time=float(traj.meta["flight_time"]), psi_land=float(traj.meta["psi_land"]),
        psi_dot_after=float(traj.meta["psi_dot_after"]),
        balance_K=[float(v) for v in balance.K],
        balance_spectral_abscissa=balance.spectral_abscissa(),
    )
    return Task2Result(traj, takeoff, landed, gains, balance, run, m)


def balance_run(p: PlantParams, bal: StationaryLqr, psi0: float, t_end: float = 3.0,
                period: float | None = None, u_max: float = np.inf, step: float = 1e-3):
    """Nonlinear inner-hoop simulation under the stationary law, from rest at ``psi0``.

    ``period`` gives a zero-order hold; ``None`` updates the input every step.
    """
    from .hybrid import simulate

    def law(t, s):
        dx = s.roll - bal.x_eq
        dx[2] = wrap_angle(dx[2])
        return float(np.clip(-bal.K @ dx, -u_max, u_max))

    if period is not None:
        state = {"k": 0, "u": 0.0}

        def ctrl(t, s):
            if t + 1e-9 >= state["k"] * period:
                state["k"] += 1
                state["u"] = law(t, s)
            return state["u"]
    else:
        ctrl = law
    x0 = HybridState.rolling(Mode.S3, np.array([0.0, 0.0, psi0, 0.0]), p)
    return simulate(x0, ctrl, p, SimOptions(step=step, t_end=t_end))


__all__ = [
    "BALANCE_EQ", "rollout", "task1_metrics", "design_task1", "design_balance", "tracking_run",
    "Task2Result", "task2_metrics", "run_task2", "balance_run", "NoiseConfig", "rk4_step",
]
