"""Compare the compiled Metropolis kernel against the pure-Python fallback.

Usage:  python3 benchmarks/bench_sampler.py [n_sites] [n_basis]

Both backends consume the same proposal stream, so the check at the end
verifies they walk identical trajectories while timing them.
"""

import sys
import time

import numpy as np

from tnqg._kernels import build_pack, run_chain_compiled, run_chain_python
from tnqg.ansatz import FourierCoefficients, GalerkinState, initial_galerkin_state
from tnqg.lattice import build_lattice


def make_pack(n, m, seed=0):
    rng = np.random.default_rng(seed)
    lat = build_lattice("chain", [n], True)
    st = initial_galerkin_state(lat, m, 4, omega=np.linspace(-2, 2, 4), rng=rng,
                               sigma=0.3)
    gamma = 0.3 * (rng.standard_normal((m, 4)) + 1j * rng.standard_normal((m, 4)))
    st = GalerkinState(phi0=st.phi0, basis=st.basis,
                       coeffs=FourierCoefficients(gamma=gamma,
                                                  omega=st.coeffs.omega))
    return build_pack([st.flat_rbm_terms(0.6)], n)


def run(kernel, pack, n, n_samples, seed=1):
    rng = np.random.default_rng(seed)
    spins0 = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
    n_props = (100 + n_samples) * n
    sites = rng.integers(0, n, size=n_props, dtype=np.int32)
    uniforms = rng.random(n_props)
    t0 = time.perf_counter()
    samples, accepted = kernel(pack, spins0, 100, n_samples, 1, sites, uniforms)
    dt = time.perf_counter() - t0
    return samples, accepted, dt


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 12
    m = int(sys.argv[2]) if len(sys.argv) > 2 else 4
    pack = make_pack(n, m)
    n_samples = 2000
    print(f"N={n} sites, {pack.n_terms} RBM terms, "
          f"{n_samples} samples ({(100 + n_samples) * n} proposals)")
    print(f"{'backend':<10} {'time':>10} {'proposals/s':>14}")
    results = {}
    for name, kernel in [("python", run_chain_python),
                         ("cython", run_chain_compiled)]:
        if kernel is None:
            print(f"{name:<10} {'not built':>10}")
            continue
        samples, accepted, dt = run(kernel, pack, n, n_samples)
        results[name] = samples
        rate = (100 + n_samples) * n / dt
        print(f"{name:<10} {dt:>9.3f}s {rate:>14.0f}")
    if len(results) == 2:
        same = np.array_equal(results["python"], results["cython"])
        print(f"identical sample trajectories: {same}")


if __name__ == "__main__":
    main()
