"""Grid-refinement table for a simulation scenario, using increments aggregated from the finest grid."""
import argparse

from meanreflect.config import SCHEMA, build_simulation, load_yaml, parse_config, scenario_path
from meanreflect.sde import convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="smooth_brownian")
    ap.add_argument("--n", type=int, nargs="+", default=[50, 100, 200, 400, 800])
    ap.add_argument("--reference", type=int, default=3200)
    ap.add_argument("--particles", type=int)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    data = {k: v for k, v in load_yaml(scenario_path(args.scenario)).items() if k in SCHEMA["converge"]}
    data["command"] = "converge"
    cfg = parse_config(data, {"particles": args.particles, "seed": args.seed})
    tab = convergence_study(build_simulation(cfg), args.n, args.reference)
    print(f"{'n':>6} {'err_k':>12} {'err_X':>12}")
    for r in tab.rows:
        print(f"{r.n:6d} {r.err_k:12.4e} {r.err_X:12.4e}")
    print(f"reference n={args.reference}; monotone k: {tab.monotone}, monotone X: {tab.monotone_X}")


if __name__ == "__main__":
    main()
