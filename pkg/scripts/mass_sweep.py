"""Success rate of the feedback loop over mass factors and noise seeds.

Each (mass, seed) run is independent, so they are spread over worker
processes.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from ballhoop.config import ScenarioConfig
from ballhoop.scenarios import design_task1, tracking_run


def _one(job):
    cfg, traj, gains, mass, seed, fb = job
    cfg = replace(cfg, perturb=replace(cfg.perturb, m=mass))
    _, o = tracking_run(cfg, traj, gains, feedback=fb, seed=seed)
    return mass, fb, o["success"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--masses", type=float, nargs="+", default=[0.9, 0.95, 1.0, 1.05, 1.1])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    cfg = ScenarioConfig()
    traj, gains = design_task1(cfg)
    jobs = [(cfg, traj, gains, m, s, fb) for m in args.masses for s in range(args.seeds) for fb in (False, True)]
    with ProcessPoolExecutor(max_workers=args.workers) as ex:
        results = list(ex.map(_one, jobs))
    print("mass   FF ok   FB ok")
    for m in args.masses:
        ff = np.mean([ok for mm, fb, ok in results if mm == m and not fb])
        fb = np.mean([ok for mm, fb, ok in results if mm == m and fb])
        print(f"{m:4.2f}  {ff:6.0%}  {fb:6.0%}")


if __name__ == "__main__":
    main()
