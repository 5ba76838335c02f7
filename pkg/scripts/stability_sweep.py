"""Sweep a barrier shift and compare the observed change of k with the Lipschitz bound C_h * shift."""
import argparse

import numpy as np

from meanreflect.grid_paths import BarrierPair, GridPath, TimeGrid
from meanreflect.mean_map import concave, identity, soft, time_tilt
from meanreflect.mean_sp import MeanSkorokhodProblem, PathEnsemble, stability_report


CHOICES = {
    "identity": identity(),
    "soft": soft(0.5),
    "concave": concave(0.3),
    "time_tilt": time_tilt(0.5, 1.0),
}


def ensemble(seed, n, N):
    g = TimeGrid.uniform(n, 1.0)
    rng = np.random.default_rng(seed)
    steps = rng.normal(scale=np.sqrt(1 / n), size=(n, N)) + 1.5 / n
    return PathEnsemble(g, np.vstack([np.zeros(N), np.cumsum(steps, axis=0)]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", nargs="+", choices=sorted(CHOICES), default=list(CHOICES))
    ap.add_argument("--shifts", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.2, 0.4])
    ap.add_argument("--particles", type=int, default=500)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    Y = ensemble(args.seed, args.steps, args.particles)
    g = Y.grid
    print(f"{'h':>16} {'shift':>6} {'|dk|':>10} {'bound':>10} {'C_h':>5} {'ok':>3}")
    for name in args.h:
        h = CHOICES[name]
        base = BarrierPair(GridPath.constant(g, -0.5), GridPath.constant(g, 0.5))
        for d in args.shifts:
            moved = BarrierPair(GridPath.constant(g, -0.5 + d), GridPath.constant(g, 0.5 + d))
            rep = stability_report(MeanSkorokhodProblem(Y, h, base), MeanSkorokhodProblem(Y, h, moved))
            print(f"{h.name:>16} {d:6.2f} {rep.lhs_k:10.4f} {rep.rhs_k:10.4f} {rep.C_h:5.2f} {'yes' if rep.ok else 'NO':>3}")


if __name__ == "__main__":
    main()
