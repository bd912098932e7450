"""Command-line driver: ``ballhoop {simulate,task1,task2,closedloop,gains}``.

Exit codes: 0 success, 1 ran but the run's success criteria were not met,
2 infeasible, 3 numerical failure, 4 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .closedloop import SampledController
from .config import DEFAULT_INI, ConfigError, ScenarioConfig, load_config
from .control import GainSchedule, RiccatiError, riccati_backward
from .estimation import EstimatorError
from .hybrid import ContractError, HybridState, Mode, SimOptions, SimulationError, simulate, zero_controller
from .model import outer_coeffs
from .scenarios import design_balance, design_task1, run_task2, task1_metrics, tracking_run
from .trajopt.ballistic import NoHitError, NoTakeoffError
from .trajopt.collocation import RollDynamics, Trajectory
from .trajopt.solver import SolveError

EXIT_OK, EXIT_UNMET, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2, 3, 4


@dataclass
class RunReport:
    scenario: str
    success: bool
    metrics: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    message: str = ""
    wall_clock: float = 0.0

    def write(self, path: Path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable))


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    return str(v)


def _events(trace) -> list:
    return [{"t": e.t, "guard": e.guard.name, "from": e.pre.mode.name, "to": e.post.mode.name}
            for e in trace.events]


def _out(cfg: ScenarioConfig) -> Path:
    d = Path(cfg.out_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"output directory not writable: {d} ({e})") from e
    return d


def _parse_x0(text: str | None, mode: str, cfg: ScenarioConfig) -> HybridState:
    m = Mode[mode.upper()]
    vals = np.zeros(4) if text is None else np.array([float(v) for v in text.split(",")])
    if vals.size == 4 and m is not Mode.S2:
        return HybridState.rolling(m, vals, cfg.true_plant)
    if vals.size == 8:
        return HybridState(m, vals)
    raise ConfigError("x0 needs 4 values (theta,theta_dot,psi,psi_dot) for a rolling mode or 8 values")


# commands ---------------------------------------------------------------

def cmd_simulate(cfg: ScenarioConfig, x0: HybridState | None = None, horizon: float | None = None,
                 controller: str = "zero", trajectory=None, gains=None) -> RunReport:
    """Run the hybrid simulator on the perturbed plant with the chosen controller."""
    out = _out(cfg)
    traj = Trajectory.from_csv(trajectory) if trajectory else None
    if controller != "zero" and traj is None:
        raise ConfigError(f"controller '{controller}' needs --trajectory")
    if x0 is None:
        x0 = HybridState.rolling(Mode.S1, traj.states[0] if traj is not None else np.zeros(4), cfg.true_plant)
    if horizon is None:
        horizon = traj.T_f if traj is not None else cfg.sim.t_end
    if controller == "zero":
        ctrl = zero_controller
    else:
        if controller == "feedback":
            sched = GainSchedule.from_csv(gains) if gains else riccati_backward(
                traj, cfg.lqr.tracking, RollDynamics(outer_coeffs(cfg.plant)))
        else:
            sched = None
        ctrl = SampledController(traj, sched, cfg.plant, cfg.noise, cfg.ocp.u_max, cfg.seed,
                                 feedback=controller == "feedback", estimator=False)
    trace = simulate(x0, ctrl, cfg.true_plant, replace(cfg.sim, t_end=horizon))
    trace.to_csv(out / "trace.csv")
    trace.events_to_csv(out / "events.csv")
    fin = trace.final
    metrics = {"t_end": float(trace.t[-1]), "final_mode": fin.mode.name,
               "final_state": [float(v) for v in fin.x],
               "guards_fired": [g.name for g in trace.guards_fired()]}
    if traj is not None:
        metrics["final_psi_error"] = float(fin.x[2] - traj.states[-1, 2])
    return RunReport("simulate", True, metrics, _events(trace),
                     {"trace": str(out / "trace.csv"), "events": str(out / "events.csv")})


def cmd_task1(cfg: ScenarioConfig) -> RunReport:
    out = _out(cfg)
    try:
        traj, gains = design_task1(cfg)
    except SolveError as e:
        if e.best is not None:
            e.best.to_csv(out / "task1_best_iterate.csv")
        raise
    traj.to_csv(out / "task1_trajectory.csv")
    gains.to_csv(out / "task1_gains.csv", with_S=True)
    m = task1_metrics(traj, cfg.plant, cfg.ocp.u_max)
    ok = max(abs(m["residual_psi"]), abs(m["residual_psi_dot"]), abs(m["residual_theta_dot"])) < 1e-3
    msg = ""
    if abs(m["rollout_psi_error"]) > 1e-2:
        msg = (f"collocation accuracy: open-loop RK4 replay deviates by {m['rollout_mismatch']:.3g} "
               f"from the knots (psi at T_f off by {m['rollout_psi_error']:.3g} rad)")
    return RunReport("task1", ok, m, [], {"trajectory": str(out / "task1_trajectory.csv"),
                                          "gains": str(out / "task1_gains.csv")}, msg)


def cmd_task2(cfg: ScenarioConfig, t_end: float = 5.0, estimator: bool = False) -> RunReport:
    out = _out(cfg)
    res = run_task2(cfg, t_end=t_end, estimator=estimator)
    res.traj.to_csv(out / "task2_trajectory.csv")
    res.gains.to_csv(out / "task2_gains.csv")
    bal = GainSchedule(np.array([0.0]), res.balance.S[None], res.balance.K[None])
    bal.to_csv(out / "balance_gain.csv", with_S=True)
    res.run.trace.to_csv(out / "task2_trace.csv")
    res.run.trace.events_to_csv(out / "task2_events.csv")
    res.run.write_telemetry(out / "task2_telemetry.csv")
    m = dict(res.metrics)
    ok = m.pop("success")
    return RunReport("task2", ok, m, _events(res.run.trace),
                     {k: str(out / f) for k, f in [("trajectory", "task2_trajectory.csv"),
                                                   ("gains", "task2_gains.csv"),
                                                   ("balance_gain", "balance_gain.csv"),
                                                   ("trace", "task2_trace.csv"),
                                                   ("telemetry", "task2_telemetry.csv")]})


def _load_tracking(cfg: ScenarioConfig, trajectory, gains):
    tpath = Path(trajectory) if trajectory else Path(cfg.out_dir) / "task1_trajectory.csv"
    if not tpath.exists():
        raise ConfigError(f"trajectory file not found: {tpath}")
    traj = Trajectory.from_csv(tpath)
    gpath = Path(gains) if gains else tpath.with_name(tpath.name.replace("trajectory", "gains"))
    if gpath.exists() and gpath != tpath:
        sched = GainSchedule.from_csv(gpath)
    elif gains:
        raise ConfigError(f"gains file not found: {gpath}")
    else:
        sched = riccati_backward(traj, cfg.lqr.tracking, RollDynamics(outer_coeffs(cfg.plant)))
    return traj, sched


def cmd_closedloop(cfg: ScenarioConfig, trajectory=None, gains=None, feedback: bool = True,
                   compare: bool = False) -> RunReport:
    """Perturbed plant, camera, delayed EKF and TV-LQR at the control period; A/B with ``compare``."""
    out = _out(cfg)
    traj, sched = _load_tracking(cfg, trajectory, gains)
    runs = {}
    for label, fb in ([("fb", True), ("ff", False)] if compare else [("fb" if feedback else "ff", feedback)]):
        res, o = tracking_run(cfg, traj, sched, feedback=fb)
        res.write_telemetry(out / f"telemetry_{label}.csv")
        res.trace.to_csv(out / f"trace_{label}.csv")
        res.trace.events_to_csv(out / f"events_{label}.csv")
        runs[label] = (res, o)
    main = runs["fb"] if "fb" in runs else runs["ff"]
    metrics = {label: o for label, (_, o) in runs.items()}
    ev = _events(main[0].trace)
    ok = main[1]["success"]
    if compare:
        metrics["ff_fails"] = not runs["ff"][1]["success"]
        ok = ok and metrics["ff_fails"]
    outputs = {f"telemetry_{k}": str(out / f"telemetry_{k}.csv") for k in runs}
    return RunReport("closedloop", ok, metrics, ev, outputs)


def cmd_gains(cfg: ScenarioConfig, trajectory=None, stationary: bool = False) -> RunReport:
    out = _out(cfg)
    if stationary:
        bal = design_balance(cfg)
        GainSchedule(np.array([0.0]), bal.S[None], bal.K[None]).to_csv(out / "balance_gain.csv", with_S=True)
        m = {"K": [float(v) for v in bal.K], "spectral_abscissa": bal.spectral_abscissa(),
             "closed_loop_eigs": [str(complex(v)) for v in bal.closed_loop_eigs()]}
        return RunReport("gains", bal.spectral_abscissa() < 0, m, [], {"gains": str(out / "balance_gain.csv")})
    if trajectory is None:
        raise ConfigError("gains needs --trajectory or --stationary")
    traj = Trajectory.from_csv(trajectory)
    sched = riccati_backward(traj, cfg.lqr.tracking, RollDynamics(outer_coeffs(cfg.plant)))
    path = out / "gains.csv"
    sched.to_csv(path, with_S=True)
    m = {"knots": int(len(sched.times)), "max_abs_K": float(np.abs(sched.K).max()),
         "min_eig_S": float(min(np.linalg.eigvalsh(S).min() for S in sched.S))}
    return RunReport("gains", True, m, [], {"gains": str(path)})


# argument handling ------------------------------------------------------

def _common(sp):
    sp.add_argument("--config", type=Path, help="INI file with [plant] [sim] [ocp] [lqr] [noise] [perturb] sections")
    sp.add_argument("--seed", type=int, help="seed for the measurement noise generator")
    sp.add_argument("--out-dir", type=Path, help="directory for CSV outputs and report.json")
    sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override a config entry (repeatable)")
    sp.add_argument("--mass-factor", type=float, help="shortcut for perturb.m")
    sp.add_argument("--N", type=int, help="shortcut for ocp.N")
    sp.add_argument("--u-max", type=float, help="shortcut for ocp.u_max")
    sp.add_argument("--T-max", type=float, help="shortcut for ocp.T_max")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ballhoop", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="hybrid simulation with a zero, feedforward or feedback controller")
    _common(s)
    s.add_argument("--controller", choices=["zero", "feedforward", "feedback"], default="zero")
    s.add_argument("--trajectory", type=Path)
    s.add_argument("--gains", type=Path)
    s.add_argument("--x0", help="comma separated initial continuous state")
    s.add_argument("--mode", default="S1", choices=["S1", "S2", "S3"])
    s.add_argument("--horizon", type=float)

    s = sub.add_parser("task1", help="loop the ball around the outer hoop")
    _common(s)

    s = sub.add_parser("task2", help="transfer the ball to the top of the inner hoop")
    _common(s)
    s.add_argument("--window", type=float, help="shortcut for ocp.landing_window")
    s.add_argument("--horizon", type=float, default=5.0)
    s.add_argument("--with-estimator", action="store_true", help="route S1 feedback through the EKF")

    s = sub.add_parser("closedloop", help="sampled closed loop with camera, EKF and TV-LQR")
    _common(s)
    s.add_argument("--trajectory", type=Path)
    s.add_argument("--gains", type=Path)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--ff-only", action="store_true")
    g.add_argument("--ab", action="store_true", help="run feedback and feedforward-only side by side")
    s.add_argument("--sweep", type=int, metavar="K", help="run seeds seed..seed+K-1 in parallel workers")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("gains", help="TV-LQR schedule for a trajectory or the inner-hoop balance gain")
    _common(s)
    s.add_argument("--trajectory", type=Path)
    s.add_argument("--stationary", action="store_true")

    s = sub.add_parser("init-config", help="write the default config file")
    s.add_argument("path", type=Path)
    return ap


def config_from_args(args) -> ScenarioConfig:
    overrides = list(args.set)
    for flag, key in [("mass_factor", "perturb.m"), ("N", "ocp.N"), ("u_max", "ocp.u_max"),
                      ("T_max", "ocp.T_max"), ("window", "ocp.landing_window")]:
        v = getattr(args, flag, None)
        if v is not None:
            overrides.append(f"{key}={v}")
    if args.seed is not None:
        overrides.append(f"output.seed={args.seed}")
    if args.out_dir is not None:
        overrides.append(f"output.out_dir={args.out_dir}")
    return load_config(args.config, overrides)


def _sweep_one(payload):
    cfg, seed, trajectory, gains, fb, compare = payload
    cfg = replace(cfg, seed=seed, out_dir=Path(cfg.out_dir) / f"seed_{seed}")
    rep = cmd_closedloop(cfg, trajectory, gains, fb, compare)
    rep.write(Path(cfg.out_dir) / "report.json")
    return seed, rep.success, rep.metrics


def dispatch(args) -> RunReport:
    cfg = config_from_args(args)
    if args.command == "simulate":
        x0 = _parse_x0(args.x0, args.mode, cfg) if args.x0 else None
        return cmd_simulate(cfg, x0, args.horizon, args.controller, args.trajectory, args.gains)
    if args.command == "task1":
        return cmd_task1(cfg)
    if args.command == "task2":
        return cmd_task2(cfg, args.horizon, args.with_estimator)
    if args.command == "closedloop":
        if args.sweep:
            if args.sweep < 1:
                raise ConfigError("--sweep needs a positive count")
            seeds = [cfg.seed + i for i in range(args.sweep)]
            # resolve paths once so every worker reads the same files
            tr = args.trajectory or Path(cfg.out_dir) / "task1_trajectory.csv"
            payloads = [(cfg, s, tr, args.gains, not args.ff_only, args.ab) for s in seeds]
            with ProcessPoolExecutor(max_workers=args.workers) as ex:
                results = list(ex.map(_sweep_one, payloads))
            m = {f"seed_{s}": {"success": ok, **met} for s, ok, met in results}
            m["n_success"] = sum(ok for _, ok, _ in results)
            _out(cfg)
            return RunReport("closedloop-sweep", all(ok for _, ok, _ in results), m)
        return cmd_closedloop(cfg, args.trajectory, args.gains, not args.ff_only, args.ab)
    if args.command == "gains":
        return cmd_gains(cfg, args.trajectory, args.stationary)
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "init-config":
        args.path.write_text(DEFAULT_INI)
        return EXIT_OK
    t0 = time.perf_counter()
    code, report = EXIT_OK, None
    try:
        report = dispatch(args)
        code = EXIT_OK if report.success else EXIT_UNMET
    except (ConfigError, ContractError, FileNotFoundError) as e:
        print(f"bad configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolveError, NoTakeoffError, NoHitError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        extra = {}
        if isinstance(e, SolveError):
            extra["violation"] = e.violation
        report, code = RunReport(args.command, False, extra, message=f"infeasible: {e}"), EXIT_INFEASIBLE
    except (SimulationError, RiccatiError, EstimatorError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        report, code = RunReport(args.command, False, message=f"numerical failure: {e}"), EXIT_NUMERICAL
        if isinstance(e, SimulationError) and e.trace is not None:
            report.events = _events(e.trace)
    report.wall_clock = time.perf_counter() - t0
    try:
        cfg_dir = Path(args.out_dir) if args.out_dir else None
        out = cfg_dir or load_config(args.config, args.set).out_dir
        Path(out).mkdir(parents=True, exist_ok=True)
        report.write(Path(out) / "report.json")
    except (ConfigError, OSError):
        pass
    print(json.dumps({"scenario": report.scenario, "success": report.success,
                      "exit_code": code, "message": report.message}))
    return code


if __name__ == "__main__":
    sys.exit(main())
