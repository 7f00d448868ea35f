"""Compare the compiled kernels against the pure numpy twins.

Run:  python3 benchmarks/backend_bench.py [--points N] [--repeats K] [--report out.json]

The same comparison is reachable through `volvid bench --kernels`.
"""

import argparse
import json

from volvid import available_backends, backend_name
from volvid.appsvc.cli import bench_backends


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--report", default=None)
    args = ap.parse_args()

    print(f"active backend: {backend_name()}, available: {available_backends()}")
    out = bench_backends(n_points=args.points, repeats=args.repeats)
    for kname, row in out["kernels"].items():
        line = ", ".join(f"{b}: {v:8.2f} ms" for b, v in row.items() if b != "speedup")
        sp = f"  ({row['speedup']:.1f}x)" if "speedup" in row else ""
        print(f"{kname:>16}  {line}{sp}")
    if args.report:
        with open(args.report, "w") as f:
            json.dump(out, f, indent=1, sort_keys=True)
            f.write("\n")
        print(f"wrote {args.report}")


if __name__ == "__main__":
    main()
