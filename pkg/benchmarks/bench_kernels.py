"""Benchmark: native radius kernel vs the vectorized numpy fallback.

Times the dominant workload (max root modulus over a stability-scan
batch) at the sizes the table reproduction uses, and a full optimal-rate
cell through each backend.

Run:  python benchmarks/bench_kernels.py
"""

import os
import time

import numpy as np


def _batch(tau, size, seed=0):
    from proxflow.multistep import bdf_coefficients
    from proxflow.spectral import CompanionSpec, _coeff_rows, _lambda_grid

    xi = tuple(bdf_coefficients(tau)[0])
    lams = _lambda_grid(1.0, 10.0)
    alphas = np.linspace(1e-3, 0.18, max(1, size // lams.size))
    rows = np.vstack(
        [_coeff_rows(lams, CompanionSpec(tau, xi, a, 1.0, 4)) for a in alphas]
    )
    return rows


def time_backend(rows, backend, repeats=3):
    from proxflow import _kernels

    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = _kernels.max_root_modulus_batch(rows, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    from proxflow import _kernels
    from proxflow.multistep import bdf_coefficients
    from proxflow.spectral import optimal_rate

    print(f"selected backend: {_kernels.backend_name()}")
    print(f"native available: {_kernels.HAVE_NATIVE}")
    print()
    print(f"{'tau':>4} {'rows':>9} {'fallback':>12} {'native':>12} {'speedup':>9}")
    for tau in (1, 2, 3, 4):
        rows = _batch(tau, 1 << 20)
        t_fb, out_fb = time_backend(rows, "fallback")
        line = f"{tau:>4} {rows.shape[0]:>9} {t_fb:>11.3f}s"
        if _kernels.HAVE_NATIVE:
            t_nat, out_nat = time_backend(rows, "native")
            err = float(np.abs(out_fb - out_nat).max())
            line += f" {t_nat:>11.3f}s {t_fb / t_nat:>8.1f}x  (max diff {err:.1e})"
        else:
            line += f" {'n/a':>12} {'n/a':>9}"
        print(line)

    print()
    xi3 = tuple(bdf_coefficients(3)[0])
    for backend in ("fallback", "native") if _kernels.HAVE_NATIVE else ("fallback",):
        os.environ["PROXFLOW_FORCE_FALLBACK"] = "1" if backend == "fallback" else "0"
        import importlib

        import proxflow._kernels as k

        importlib.reload(k)
        t0 = time.perf_counter()
        best = optimal_rate(1.0, 10.0, 10.0, 4, 3, xi3)
        dt = time.perf_counter() - t0
        print(f"optimal_rate cell (BDF3, m=4, beta=10, L=10) via {backend}: "
              f"rho={best.rho:.4f} in {dt:.2f}s")
    os.environ.pop("PROXFLOW_FORCE_FALLBACK", None)


if __name__ == "__main__":
    main()
