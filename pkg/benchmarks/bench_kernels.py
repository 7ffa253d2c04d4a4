"""Timing comparison of the compiled and pure-numpy shrinkage kernels.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--sizes 1e4,1e5,1e6] [--repeat 20]

The pure backend is loaded in a subprocess with THINBINGHAM_PURE_PYTHON=1 so
both implementations are exercised exactly as the solver would pick them up.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

_CHILD = """\
import json, sys, time
import numpy as np
from thinbingham import kernels

sizes = json.loads(sys.argv[1])
repeat = int(sys.argv[2])
rng = np.random.default_rng(0)
out = {"backend": kernels.BACKEND, "rows": []}
for n in sizes:
    s = rng.standard_normal((4, n))
    kernels.shrink(s, 0.5, 3.0)                     # warm up
    best = min(_time_one(kernels, s) for _ in range(repeat))
    out["rows"].append({"n": n, "seconds": best})
print(json.dumps(out))
"""

_TIMER = """\
def _time_one(kernels, s):
    t0 = time.perf_counter()
    kernels.group_magnitude(s)
    kernels.shrink(s, 0.5, 3.0)
    return time.perf_counter() - t0
"""


def run_backend(pure: bool, sizes, repeat):
    env = dict(os.environ)
    if pure:
        env["THINBINGHAM_PURE_PYTHON"] = "1"
    else:
        env.pop("THINBINGHAM_PURE_PYTHON", None)
    code = _TIMER + _CHILD
    r = subprocess.run([sys.executable, "-c", code,
                        json.dumps(sizes), str(repeat)],
                       capture_output=True, text=True, env=env, check=True)
    return json.loads(r.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="1e4,1e5,1e6")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    sizes = [int(float(s)) for s in args.sizes.split(",")]

    results = [run_backend(pure, sizes, args.repeat)
               for pure in (False, True)]
    a, b = results
    print(f"{'n':>10} {'compiled [ms]':>14} {'python [ms]':>12} {'speedup':>8}")
    for ra, rb in zip(a["rows"], b["rows"]):
        speed = rb["seconds"] / ra["seconds"] if ra["seconds"] > 0 else np.inf
        print(f"{ra['n']:>10d} {1e3 * ra['seconds']:>14.4f} "
              f"{1e3 * rb['seconds']:>12.4f} {speed:>8.2f}")
    if a["backend"] == b["backend"]:
        print("note: compiled backend unavailable; both runs used "
              f"{a['backend']!r}")


if __name__ == "__main__":
    main()
