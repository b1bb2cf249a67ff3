"""Compare the compiled and pure-python kernel backends on the search hot path.

The backend is fixed at import time by the FPRIVACY_JIT environment variable,
so a fair comparison needs one process per backend.  Run without arguments to
spawn both and print a side-by-side table:

    python3 benchmarks/bench_backends.py

or time a single backend in-process:

    FPRIVACY_JIT=0 python3 benchmarks/bench_backends.py --backend self
"""
import argparse
import json
import os
import subprocess
import sys
import time


def build_instances(sizes, m, seed):
    """Synthetic tables at the requested record counts, heaviest last."""
    from fprivacy.core import histogram, linear_privacy_spec
    from fprivacy.metrics import gen_synthetic

    out = []
    for n in sizes:
        table = gen_synthetic(n, m, 0.9, [8, 8], seed=seed)
        h = histogram(table)
        spec = linear_privacy_spec(h, theta=2.0, intercept=0.04)
        out.append((n, h, spec))
    return out


def time_backend(sizes, m, seed, repeats):
    from fprivacy import _accel
    from fprivacy.optimize import SearchConfig, two_size_bucketing

    instances = build_instances(sizes, m, seed)
    # first search pays any compilation cost; keep it out of the numbers
    warm_h, warm_spec = instances[0][1], instances[0][2]
    two_size_bucketing(warm_h, warm_spec, SearchConfig.for_spec(warm_spec, max_size=50))

    rows = []
    for n, h, spec in instances:
        cfg = SearchConfig.for_spec(spec, max_size=50)
        best = None
        loss = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            found = two_size_bucketing(h, spec, cfg, pruning="full")
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
            loss = found.loss if found is not None else None
        rows.append({"n": n, "ms": best * 1e3, "loss": loss})
    return {"jit": _accel.JIT_ENABLED, "rows": rows}


def run_child(flag, args):
    env = dict(os.environ, FPRIVACY_JIT=flag)
    cmd = [sys.executable, os.path.abspath(__file__), "--backend", "self",
           "--sizes", ",".join(str(s) for s in args.sizes),
           "--m", str(args.m), "--seed", str(args.seed),
           "--repeats", str(args.repeats)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"backend FPRIVACY_JIT={flag} failed")
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--backend", choices=("both", "self"), default="both",
                        help="'both' spawns one child per backend; 'self' times "
                             "the already-imported backend and emits JSON")
    parser.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")],
                        default=[50_000, 200_000, 500_000],
                        help="comma-separated record counts")
    parser.add_argument("--m", type=int, default=50, help="SA domain size")
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=3,
                        help="searches per instance; best time wins")
    args = parser.parse_args(argv)

    if args.backend == "self":
        print(json.dumps(time_backend(args.sizes, args.m, args.seed, args.repeats)))
        return 0

    compiled = run_child("1", args)
    if not compiled["jit"]:
        raise SystemExit("numba backend did not activate")
    plain = run_child("0", args)

    print(f"two-size search, m={args.m}, thresholds 2f+0.04, best of "
          f"{args.repeats}")
    print(f"{'records':>10} {'compiled ms':>12} {'python ms':>12} {'speedup':>8}")
    for fast, slow in zip(compiled["rows"], plain["rows"]):
        assert fast["n"] == slow["n"] and fast["loss"] == slow["loss"]
        ratio = slow["ms"] / fast["ms"] if fast["ms"] else float("inf")
        print(f"{fast['n']:>10} {fast['ms']:>12.2f} {slow['ms']:>12.2f} "
              f"{ratio:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
