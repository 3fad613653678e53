"""Time the compiled and pure-Python reversible-jump kernels on one chain.

Usage: python3 benchmarks/bench_kernels.py [--n 500] [--iters 20000]

Both backends consume the same pre-generated randomness, so the traces must
agree; the script checks that before reporting timings.
"""
import argparse
import time

import numpy as np

from robpcr import available_backends
from robpcr.lptn import lptn_params
from robpcr.normal_posterior import Dataset, nested_space
from robpcr.rj_sampler import ParameterState, SamplerInputs, run_chain


def _problem(n, d, seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    y = Z @ np.linspace(0.5, 0.0, d) + rng.standard_normal(n)
    data = Dataset(y, np.column_stack([np.ones(n), Z]))
    space = nested_space(range(1, d + 1))
    K = len(space)
    inputs = SamplerInputs(
        vartheta=0.6,
        ell=np.full(K, 0.5 / np.sqrt(n)),
        shift=tuple(np.zeros(space[k - 1].d + 1) if k else np.zeros(1) for k in range(K)),
        birth_loc=np.zeros(K),
        birth_scale=np.full(K, 1.0 / np.sqrt(n)),
        p=lptn_params(0.95),
    )
    return space, data, inputs


def _time(space, data, inputs, iters, backend, repeats):
    best, trace = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = run_chain(space, data, inputs, iters, iters // 10, seed=1, init=ParameterState(0, 1.0, [0.0]),
                          backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500, help="observations")
    ap.add_argument("--d", type=int, default=3, help="candidate PCs")
    ap.add_argument("--iters", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    space, data, inputs = _problem(args.n, args.d, 0)
    backends = available_backends()
    results = {b: _time(space, data, inputs, args.iters, b, args.repeats) for b in backends}
    if len(results) == 2:
        a, b = results["cython"][1], results["python"][1]
        if not (np.array_equal(a.k, b.k) and np.allclose(a.sigma, b.sigma, rtol=1e-12, atol=0)):
            raise SystemExit("backends disagree")
    print(f"n={args.n} d={args.d} iters={args.iters} (best of {args.repeats})")
    for name, (sec, _) in results.items():
        ns = 1e9 * sec / (args.iters * args.n)
        print(f"{name:>7}: {sec:8.3f} s  {ns:7.2f} ns per observation-iteration")
    if len(results) == 2:
        print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x")
    else:
        print("compiled kernel unavailable; only the fallback was timed")


if __name__ == "__main__":
    main()
