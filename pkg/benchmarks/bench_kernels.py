"""Time the hot kernels under numba and under the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each backend runs in its own interpreter because the backend is fixed at
import time (``TRINOMIAL_PDE_NO_NUMBA=1`` selects numpy).
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKER = textwrap.dedent("""
    import json, sys, time
    import numpy as np
    from trinomial_pde import _accel
    from trinomial_pde.generator import get_problem
    from trinomial_pde.lattice import solve_tree

    repeat = int(sys.argv[1])
    rng = np.random.default_rng(0)
    block = rng.normal(size=(161, 163, 161))
    mats = rng.normal(size=(20000, 6, 6))
    mats = mats + mats.transpose(0, 2, 1)
    paths = np.arange(1_000_000)
    cases = {
        "ternary_codes 1e6x12": lambda: _accel.ternary_codes(1, paths, 0, 12, 1 / 3),
        "stencil3 161^3": lambda: _accel.stencil3(block, 0.2, 0.6, 0.2),
        "jacobi 20000x6x6": lambda: _accel.jacobi_eigvalsh(mats),
        "solve_tree ex6.1 n=40": lambda: solve_tree(get_problem("ex6.1"), None, None, 40),
    }
    out = {"backend": _accel.BACKEND}
    for name, fn in cases.items():
        fn()  # warm-up (jit compile or cache load)
        best = float("inf")
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t)
        out[name] = best
    print(json.dumps(out))
""")


def run(backend: str, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("TRINOMIAL_PDE_NO_NUMBA", None)
    if backend == "numpy":
        env["TRINOMIAL_PDE_NO_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    fast = run("numba", args.repeat)
    slow = run("numpy", args.repeat)
    if fast["backend"] != "numba":
        print("numba is not available; both columns use numpy")
    print(f"{'kernel':<26}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name in (k for k in fast if k != "backend"):
        print(f"{name:<26}{fast[name]:>10.4f}{slow[name]:>10.4f}{slow[name] / fast[name]:>8.1f}x")


if __name__ == "__main__":
    main()
