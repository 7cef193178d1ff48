"""Metropolis sampling from |Psi(sigma,t)|^2 and from the basis mixture
Pi(sigma) = sum_i |phi_i(sigma)|^2, plus exact Born weights for small N.

Chains use single-spin-flip proposals (the transverse-field model conserves
nothing that flips would break, so they are ergodic).  Each chain owns a
private RNG stream derived from (seed, stream tag, point index, chain
index); runs are reproducible regardless of how chains are scheduled.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ansatz import _flat_terms_of
from .lattice import (
    ENUMERATION_CAP,
    bits_to_spin_matrix,
    enumerate_configs,
    spin_matrix_to_bits,
)
from .numerics import complex_logsumexp

BORN_STREAM = 0
MIXTURE_STREAM = 1


@dataclass(frozen=True)
class ChainConfig:
    """n_samples per time point, split over n_chains independent walkers."""

    n_samples: int
    n_chains: int = 8
    burn_in: int = 100     # sweeps discarded per chain
    thin: int = 1          # sweeps between recorded samples
    seed: int = 0

    def __post_init__(self):
        if self.n_samples % self.n_chains:
            raise ValueError("n_samples must be divisible by n_chains")
        if self.thin < 1 or self.burn_in < 0:
            raise ValueError("invalid chain schedule")


def _born_groups(state, t):
    return [state.flat_rbm_terms(t)]


def _mixture_groups(state):
    """One density group per basis state: phi_0 (possibly a frozen linear
    combination) and each RBM."""
    groups = [_flat_terms_of(state.phi0)]
    groups.extend([(1.0 + 0.0j, rbm)] for rbm in state.basis)
    return groups


def _run_chains(pack, cfg, stream, point_index, return_stats):
    n = pack.n_sites
    per_chain = cfg.n_samples // cfg.n_chains
    all_samples = []
    accepted = 0
    proposed = 0
    for chain in range(cfg.n_chains):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(cfg.seed, stream, point_index, chain)))
        spins0 = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
        for _ in range(1000):
            if np.isfinite(_kernels.pack_log_density(pack, spins0[None, :])[0]):
                break
            spins0 = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
        else:
            raise RuntimeError("could not find a configuration with nonzero weight")
        n_props = (cfg.burn_in + per_chain * cfg.thin) * n
        sites = rng.integers(0, n, size=n_props, dtype=np.int32)
        uniforms = rng.random(n_props)
        samples, acc = _kernels.run_chain(pack, spins0, cfg.burn_in, per_chain,
                                          cfg.thin, sites, uniforms)
        all_samples.append(samples)
        accepted += acc
        proposed += n_props
    bits = spin_matrix_to_bits(np.concatenate(all_samples, axis=0))
    if return_stats:
        return bits, {"acceptance": accepted / proposed, "backend": _kernels.KERNEL_BACKEND}
    return bits


def sample_born(state, t, cfg, point_index=0, return_stats=False):
    """Samples from |Psi(sigma, t)|^2; returns (n_samples,) bit words."""
    pack = _kernels.build_pack(_born_groups(state, t), state.n_sites)
    return _run_chains(pack, cfg, BORN_STREAM, point_index, return_stats)


def sample_mixture(state, cfg, point_index=0, return_stats=False):
    """Samples from Pi(sigma) = sum_i |phi_i(sigma)|^2 over the basis states
    (the matrix-element estimation distribution)."""
    return sample_mixture_from_groups(_mixture_groups(state), state.n_sites,
                                      cfg, point_index, return_stats)


def sample_mixture_from_groups(groups, n_sites, cfg, point_index=0,
                               return_stats=False):
    """Mixture sampling for an explicit list of density groups (each a list
    of weighted RBM terms); used for matrix estimation over arbitrary bases."""
    pack = _kernels.build_pack(groups, n_sites)
    return _run_chains(pack, cfg, MIXTURE_STREAM, point_index, return_stats)


def born_log_weights(state, t, cap=ENUMERATION_CAP):
    """log |Psi(sigma,t)|^2 over the full enumeration (unnormalized)."""
    spins = bits_to_spin_matrix(enumerate_configs(state.n_sites, cap), state.n_sites)
    return 2.0 * state.log_amplitude_batch(spins, t).real


def full_summation_weights(state, t, cap=ENUMERATION_CAP):
    """Exact normalized Born distribution over all 2^N configurations."""
    logw = born_log_weights(state, t, cap)
    return normalized_probabilities(logw)


def mixture_weights(state, cap=ENUMERATION_CAP):
    """Exact normalized mixture distribution Pi/sum(Pi) (testing oracle)."""
    spins = bits_to_spin_matrix(enumerate_configs(state.n_sites, cap), state.n_sites)
    cols = state.basis_log_columns(spins)
    logw = complex_logsumexp(2.0 * cols.real + 0j,
                             np.ones(cols.shape[1])).real
    return normalized_probabilities(logw)


def normalized_probabilities(log_weights):
    """exp-normalize log weights into probabilities; -inf entries get 0."""
    m = np.max(log_weights)
    if not np.isfinite(m):
        raise ValueError("state has identically zero weight")
    p = np.exp(log_weights - m)
    return p / p.sum()
