"""Time each hot kernel with numba and with the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from fqcouple import _accel, _kernels
from fqcouple.distance import _project_plain, spc_enumerator
from fqcouple.ensembles import coupled_spec
from fqcouple.gf import build_field


def cases():
    rng = np.random.default_rng(0)
    lc = spc_enumerator(4, 6).log_coefficients()
    e = np.linspace(0.01, 5.9, 2000)
    yield "inner_solve (2000 points)", _kernels.inner_solve, (lc, e)

    spec = coupled_spec(4, 3, 6, 3, 6, "improved")
    T, p = spec.profile.type_matrix(), spec.profile.p_array()
    R = 2 * spec.L
    A0 = np.array([_project_plain(rng.random((R, len(p))) * p, p, R * 0.03) for _ in range(8)])
    args = (A0, T, p, lc, np.log(4), 3, 6, spec.L, spec.w, R * 0.03, 300, 1e-11, 1e-10)
    yield "growth_ascent (8 starts, L=6)", _kernels.growth_ascent, args

    t = build_field(8)
    X, Y = rng.dirichlet(np.ones(8), 200_000), rng.dirichlet(np.ones(8), 200_000)
    yield "chk_pair (q=8, 2e5 rows)", _kernels.chk_pair, (X, Y, t.add)

    stack = rng.dirichlet(np.ones(4), (6, 200_000))
    yield "var_product (q=4, 6 x 2e5)", _kernels.var_product, (stack, 0.0)


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    repeat = ap.parse_args().repeat
    if not _accel.USE_NUMBA:
        print("numba disabled via FQCOUPLE_PURE_NUMPY; timing numpy only")
    print(f"{'kernel':34s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, fn, args in cases():
        tn = best_of(fn, args, repeat) if _accel.USE_NUMBA else float("nan")
        prev = _accel.USE_NUMBA
        _accel.USE_NUMBA = False
        tp = best_of(fn, args, repeat)
        _accel.USE_NUMBA = prev
        print(f"{name:34s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}")


if __name__ == "__main__":
    main()
