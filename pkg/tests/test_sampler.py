import numpy as np
import pytest

from tnqg.ansatz import (
    FourierCoefficients,
    GalerkinState,
    PlusProductState,
    RbmParameters,
    initial_galerkin_state,
)
from tnqg.lattice import build_lattice, enumerate_configs
from tnqg.sampler import (
    ChainConfig,
    full_summation_weights,
    mixture_weights,
    sample_born,
    sample_mixture,
)


def random_state(n, m, seed, sigma=0.4, gamma_scale=0.4, n_modes=3):
    rng = np.random.default_rng(seed)
    lat = build_lattice("chain", [n], n >= 3)
    st = initial_galerkin_state(lat, m, n_modes, omega=np.linspace(-2, 2, n_modes),
                               rng=rng, sigma=sigma)
    gamma = gamma_scale * (rng.standard_normal((m, n_modes))
                           + 1j * rng.standard_normal((m, n_modes)))
    return GalerkinState(phi0=st.phi0, basis=st.basis,
                         coeffs=FourierCoefficients(gamma=gamma,
                                                    omega=st.coeffs.omega))


def tv_distance(bits, exact_probs, n):
    counts = np.bincount(bits.astype(np.int64), minlength=2 ** n)
    emp = counts / counts.sum()
    return 0.5 * np.abs(emp - exact_probs).sum()


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(n_samples=100, n_chains=3)
    with pytest.raises(ValueError):
        ChainConfig(n_samples=8, n_chains=2, thin=0)


def test_uniform_state_accepts_everything():
    lat = build_lattice("chain", [5], True)
    st = initial_galerkin_state(lat, 0, 2, omega=[0.0, 1.0])
    cfg = ChainConfig(n_samples=64, n_chains=4, burn_in=5, seed=3)
    bits, stats = sample_born(st, 0.0, cfg, return_stats=True)
    assert stats["acceptance"] == 1.0
    assert len(bits) == 64


def test_seed_determinism_single_chain():
    st = random_state(5, 2, seed=0)
    cfg = ChainConfig(n_samples=200, n_chains=1, burn_in=20, seed=11)
    a = sample_born(st, 0.4, cfg)
    b = sample_born(st, 0.4, cfg)
    np.testing.assert_array_equal(a, b)
    c = sample_born(st, 0.4, ChainConfig(n_samples=200, n_chains=1, burn_in=20,
                                         seed=12))
    assert not np.array_equal(a, c)


def test_born_sampling_tv_distance():
    st = random_state(6, 3, seed=4)
    t = 0.6
    exact = full_summation_weights(st, t)
    cfg = ChainConfig(n_samples=20000, n_chains=10, burn_in=50, seed=5)
    bits = sample_born(st, t, cfg)
    assert tv_distance(bits, exact, 6) <= 0.05


def test_mixture_single_state_reduces_to_born():
    # one basis state, gamma forced so Psi = phi_0: both densities coincide
    lat = build_lattice("chain", [4], True)
    st = initial_galerkin_state(lat, 0, 2, omega=[0.0, 1.0])
    exact_born = full_summation_weights(st, 0.0)
    exact_mix = mixture_weights(st)
    np.testing.assert_allclose(exact_born, exact_mix, atol=1e-14)
    cfg = ChainConfig(n_samples=4000, n_chains=4, burn_in=30, seed=6)
    bits = sample_mixture(st, cfg)
    assert tv_distance(bits, exact_mix, 4) <= 0.05


def test_mixture_two_orthogonal_peaks_balanced():
    # two sharply peaked basis states: the mixture visits both basins evenly
    n, kappa = 5, 1.5
    lat = build_lattice("chain", [n], True)
    up = np.full(n, kappa)
    down = -up
    mk = lambda a: RbmParameters(a=a.astype(complex), b=np.zeros(0),
                                 W=np.zeros((0, n)))
    st = GalerkinState(
        phi0=PlusProductState(n), basis=(mk(up), mk(down)),
        coeffs=FourierCoefficients(gamma=np.zeros((2, 2), dtype=complex),
                                   omega=np.array([0.0, 1.0])))
    # drop phi0 from the mixture by sampling a two-group state directly
    from tnqg.sampler import sample_mixture_from_groups

    groups = [[(1.0 + 0j, mk(up))], [(1.0 + 0j, mk(down))]]
    n_chains = 200
    cfg = ChainConfig(n_samples=n_chains, n_chains=n_chains, burn_in=40, seed=7)
    bits = sample_mixture_from_groups(groups, n, cfg)
    majority_up = np.array([bin(int(b)).count("1") > n / 2 for b in bits])
    k = majority_up.sum()
    # binomial(200, 1/2): 3 sigma ~ 21
    assert abs(k - n_chains / 2) <= 3 * np.sqrt(n_chains / 4)


def test_mixture_tv_distance_random_basis():
    st = random_state(6, 3, seed=8)
    exact = mixture_weights(st)
    cfg = ChainConfig(n_samples=20000, n_chains=10, burn_in=50, seed=9)
    bits = sample_mixture(st, cfg)
    assert tv_distance(bits, exact, 6) <= 0.05


def test_full_summation_weights_uniform():
    lat = build_lattice("chain", [4], True)
    st = initial_galerkin_state(lat, 0, 2, omega=[0.0, 1.0])
    p = full_summation_weights(st, 0.3)
    np.testing.assert_allclose(p, 1 / 16, atol=1e-15)
    assert p.sum() == pytest.approx(1.0, abs=1e-14)


def test_full_summation_weights_peaked():
    n = 4
    target = np.array([1, -1, 1, 1], dtype=float)
    rbm = RbmParameters(a=8.0 * target, b=np.zeros(0), W=np.zeros((0, n)))
    # dominate phi0 by a giant coefficient
    st = GalerkinState(
        phi0=PlusProductState(n), basis=(rbm,),
        coeffs=FourierCoefficients(gamma=np.array([[1e6 + 0j]]),
                                   omega=np.array([1.0])))
    p = full_summation_weights(st, 1.0)
    peak = int(sum(1 << i for i, s in enumerate(target) if s > 0))
    assert p[peak] > 0.999


def test_full_summation_matches_direct_normalization():
    st = random_state(5, 2, seed=10)
    t = 0.9
    from tnqg.lattice import bits_to_spin_matrix

    spins = bits_to_spin_matrix(enumerate_configs(5), 5)
    amps = np.exp(st.log_amplitude_batch(spins, t))
    direct = np.abs(amps) ** 2
    direct /= direct.sum()
    np.testing.assert_allclose(full_summation_weights(st, t), direct, rtol=1e-11)
