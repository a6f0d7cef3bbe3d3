"""Run every parametric-surface experiment and write a JSON report.

    python3 scripts/run_lab_suite.py --grid 128 --out lab_report.json
"""
import argparse
import json
import time

from spectv.lab import EXPERIMENTS, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--only", nargs="*", choices=EXPERIMENTS, help="subset of experiments")
    ap.add_argument("--out", help="JSON report path")
    args = ap.parse_args()

    report, ok = [], True
    for name in args.only or EXPERIMENTS:
        t0 = time.perf_counter()
        reps = run_experiment(name, args.grid)
        secs = time.perf_counter() - t0
        for r in reps:
            for line in r.lines():
                print(line)
            ok &= r.passed
            report.append(r.as_dict() | {"seconds": secs})
        print(f"  ({name}: {secs:.1f} s)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"grid": args.grid, "passed": ok, "reports": report}, fh, indent=2)
    print("ALL PASS" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
