"""Compare the compiled and numpy Jacobi kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 5 13 29 45]

Times ``jacobi_eigh`` (cold and warm-started) and ``project_psd`` on random
symmetric matrices, then a full NPA solve (CHSH level 2 and the
ext_bell_ac monogamy functional at level 2) with each backend swapped in.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from latent_layers import _kernels_py, kernels
from latent_layers.dist import named_functional
from latent_layers.npa import bound

try:
    from latent_layers import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    print(f"{'n':>4} {'op':<14}" + "".join(f"{b:>12}" for b in BACKENDS) + f"{'speedup':>10}")
    for n in sizes:
        M = rng.normal(size=(n, n))
        M = M + M.T
        _, V = np.linalg.eigh(M)
        M2 = M + 1e-3 * np.diag(rng.normal(size=n))
        ops = {
            "eigh cold": lambda mod: mod.jacobi_eigh(M),
            "eigh warm": lambda mod: mod.jacobi_eigh(M2, V0=V),
            "project_psd": lambda mod: mod.project_psd(M),
        }
        for name, op in ops.items():
            t = {b: best_of(lambda: op(mod), repeat) for b, mod in BACKENDS.items()}
            sp = f"{t['python'] / t['cython']:.1f}x" if "cython" in t else "-"
            print(f"{n:>4} {name:<14}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in BACKENDS) + f"{sp:>10}")


def bench_solves():
    cases = [("bell", "chsh", 2), ("ext_bell_ac", "monogamy_bc00", 2)]
    print()
    print(f"{'solve':<32}{'backend':>8}{'value':>12}{'iters':>8}{'time':>10}")
    saved = (kernels.jacobi_eigh, kernels.project_psd)
    try:
        for sid, fid, level in cases:
            for b, mod in BACKENDS.items():
                kernels.jacobi_eigh, kernels.project_psd = mod.jacobi_eigh, mod.project_psd
                t0 = time.perf_counter()
                res = bound(sid, named_functional(fid), level)
                dt = time.perf_counter() - t0
                iters = res.solution.iterations
                print(f"{sid + ' ' + fid + ' L' + str(level):<32}{b:>8}{res.value:>12.7f}{iters!s:>8}{dt:>9.2f}s")
    finally:
        kernels.jacobi_eigh, kernels.project_psd = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 13, 29, 45])
    ap.add_argument("--no-solve", action="store_true", help="skip the full SDP solves")
    args = ap.parse_args(argv)
    print(f"backends: {', '.join(BACKENDS)} (selected at import: {kernels.BACKEND})")
    bench_kernels(args.sizes, args.repeat)
    if not args.no_solve:
        bench_solves()


if __name__ == "__main__":
    main()
