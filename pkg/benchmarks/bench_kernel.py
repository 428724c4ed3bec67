#!/usr/bin/env python3
"""Compare the compiled and numpy statevector kernels on random 2x2 windows.

    python benchmarks/bench_kernel.py --windows 1000000 --repeat 3

One MNIST split is 60000 x 196 = 11.76M windows.
"""

import argparse
import statistics
import sys
import time

import numpy as np

from qpf import _pykernel, simkernel
from qpf.simkernel import CircuitSpec

try:
    from qpf import _ckernel
except ImportError:
    _ckernel = None


def bench(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--windows", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--reference", type=int, default=2000, help="windows for the per-window reference path")
    ap.add_argument("--arrangement", default="0 3 1 2")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    spec = CircuitSpec.from_label(args.arrangement)
    windows = np.random.default_rng(args.seed).random((args.windows, 4))
    kernels = [("python (numpy)", _pykernel)]
    if _ckernel is None:
        print("compiled kernel not built; only the numpy fallback is timed", file=sys.stderr)
    else:
        kernels.insert(0, ("cython", _ckernel))

    print(f"import-time backend: {simkernel.BACKEND}")
    print(f"circuit: Ry encoding + CNOTs [{spec.label}], {args.windows} windows, best of {args.repeat}")
    print(f"{'kernel':<22}{'best s':>10}{'median s':>10}{'Mwin/s':>10}")
    outputs = {}
    for name, kernel in kernels:
        best, med, out = bench(lambda: simkernel.run_circuit_batch(windows, spec, kernel=kernel), args.repeat)
        outputs[name] = out
        print(f"{name:<22}{best:>10.3f}{med:>10.3f}{args.windows / best / 1e6:>10.2f}")

    sub = windows[: args.reference]
    best, med, ref = bench(lambda: np.array([simkernel.run_circuit(w, spec) for w in sub]), 1)
    print(f"{'reference (per window)':<22}{best:>10.3f}{med:>10.3f}{len(sub) / best / 1e6:>10.4f}  ({len(sub)} windows)")

    for name, out in outputs.items():
        err = float(np.abs(out[: len(sub)] - ref).max())
        print(f"max |{name} - reference| = {err:.2e}")
    if len(outputs) == 2:
        a, b = outputs.values()
        print(f"max |cython - python| = {float(np.abs(a - b).max()):.2e}")


if __name__ == "__main__":
    main()
