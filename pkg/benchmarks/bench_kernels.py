"""Compare the compiled kernels against the numpy fallback.

Each backend runs in a fresh interpreter (selection happens at import
time) over the same seeded workloads; results print as a small table.

    python3 benchmarks/bench_kernels.py [--sizes 128,256,512] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from histocube import _kernels
from histocube.grid import Grid, Image, ValueSpace
from histocube.localhist import FilterPlan, local_histogram, local_histogram_level, noncyclic_local_histogram
from histocube.windows import box_window, center_weighted_window

sizes = json.loads(sys.argv[1])
repeat = int(sys.argv[2])
out = {"backend": _kernels.BACKEND, "rows": []}

def best_of(fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

for n in sizes:
    g = Grid(n, n)
    img = Image(g, ValueSpace((16,)),
                np.random.default_rng(7).integers(0, 16, g.shape))
    w = center_weighted_window(g, 3)  # 29 taps
    plan = FilterPlan(mode="direct")
    out["rows"].append({
        "size": n,
        "direct_cube": best_of(lambda: local_histogram(img, w, plan)),
        "direct_level": best_of(lambda: local_histogram_level(img, w, 3, plan)),
        "noncyclic_cube": best_of(lambda: noncyclic_local_histogram(img, w)),
    })
print(json.dumps(out))
"""


def run_backend(backend: str, sizes, repeat: int) -> dict:
    env = dict(os.environ)
    env["HISTOCUBE_KERNELS"] = backend
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, json.dumps(sizes), str(repeat)],
        env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"{backend} worker failed:\n{proc.stderr}")
    return json.loads(proc.stdout)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="128,256,512")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    numpy_res = run_backend("numpy", sizes, args.repeat)
    compiled_res = run_backend("compiled", sizes, args.repeat)
    if compiled_res["backend"] != "compiled":
        print("compiled extension unavailable; showing numpy only")
        compiled_res = None

    workloads = ["direct_cube", "direct_level", "noncyclic_cube"]
    print(f"{'workload':<16}{'size':>6}{'numpy':>12}{'compiled':>12}{'speedup':>10}")
    for i, n in enumerate(sizes):
        for wname in workloads:
            a = numpy_res["rows"][i][wname]
            line = f"{wname:<16}{n:>6}{a * 1e3:>10.2f}ms"
            if compiled_res:
                b = compiled_res["rows"][i][wname]
                line += f"{b * 1e3:>10.2f}ms{a / b:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
