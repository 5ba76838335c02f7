"""Run every shipped scenario through the CLI pipeline and report exit codes and wall time."""
import argparse
import tempfile
import time

from meanreflect.cli import run
from meanreflect.config import list_scenarios, load_yaml, parse_config, scenario_path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", help="artifact directory (default: a temporary one)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("names", nargs="*", help="subset of scenarios (default: all)")
    args = ap.parse_args()
    out = args.out or tempfile.mkdtemp(prefix="meanreflect-")
    failed = 0
    for name in args.names or list_scenarios():
        data = load_yaml(scenario_path(name))
        cfg = parse_config(data, {"out": out, "workers": args.workers})
        t0 = time.perf_counter()
        code, run_dir = run(cfg)
        dt = time.perf_counter() - t0
        budget = data["meta"]["budget_seconds"]
        ok = code == 0 and dt <= budget
        failed += not ok
        print(f"{name:16s} {cfg.command:9s} exit={code} {dt:7.2f}s / {budget:>4}s  {run_dir}")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
