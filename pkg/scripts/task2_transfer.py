"""Outer-to-inner hoop transfer: takeoff search, OCP, flight and balance."""
import argparse
from pathlib import Path

from ballhoop.config import ScenarioConfig
from ballhoop.scenarios import run_task2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=5.0)
    ap.add_argument("--out", type=Path, default=Path("out/task2"))
    args = ap.parse_args()

    res = run_task2(ScenarioConfig(), t_end=args.horizon)
    args.out.mkdir(parents=True, exist_ok=True)
    res.traj.to_csv(args.out / "trajectory.csv")
    res.run.trace.to_csv(args.out / "trace.csv")
    res.run.trace.events_to_csv(args.out / "events.csv")
    m = res.metrics
    print(f"takeoff: psi={m['psi_des']:.5f} rad, psi_dot={m['psi_dot_des']:.5f} rad/s, "
          f"theta_dot={m['theta_dot_des']:.5f} rad/s")
    print(f"predicted flight {m['flight_time']:.5f} s, simulated {m['sim_flight_time']:.5f} s")
    print(f"landing {m['landing_error']:+.4f} rad from the top, psi_dot after impact {m['sim_psi_dot_after']:+.4f}")
    print(f"modes {m['mode_sequence']}, last-second max |psi-pi| = {m['final_second_max_error']:.2e} rad")


if __name__ == "__main__":
    main()
