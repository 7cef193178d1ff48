import json

import numpy as np
import pytest

from tnqg.ansatz import (
    FourierCoefficients,
    FrozenGalerkinState,
    GalerkinState,
    PlusProductState,
    RbmParameters,
    combine_log_columns,
    galerkin_log_amplitude,
    init_frequencies,
    initial_galerkin_state,
    load_state,
    log_param_derivatives,
    log_time_derivative,
    random_rbm,
    rbm_log_amplitude,
    rbm_log_derivatives,
    save_state,
)
from tnqg.lattice import bits_to_spin_matrix, build_lattice, enumerate_configs


def rng_state(n, m, n_modes, seed, sigma=0.05, gamma_scale=0.1, t_omega=True):
    """Random state with nonzero gamma for derivative tests."""
    rng = np.random.default_rng(seed)
    lat = build_lattice("chain", [n], n >= 3)
    st = initial_galerkin_state(lat, m, n_modes,
                               omega=np.linspace(-2.0, 2.0, n_modes),
                               rng=rng, sigma=sigma, train_omega=t_omega)
    gamma = gamma_scale * (rng.standard_normal((m, n_modes))
                           + 1j * rng.standard_normal((m, n_modes)))
    return GalerkinState(phi0=st.phi0, basis=st.basis,
                         coeffs=FourierCoefficients(gamma=gamma, omega=st.coeffs.omega),
                         train_omega=t_omega)


def all_spins(n):
    return bits_to_spin_matrix(enumerate_configs(n), n)


# ---------------------------------------------------------------------------
# RBM amplitude


def test_zero_parameters_log_amplitude():
    n = 4
    rbm = RbmParameters(a=np.zeros(n), b=np.zeros(n), W=np.zeros((n, n)))
    vals = rbm_log_amplitude(rbm, all_spins(n))
    np.testing.assert_allclose(vals, n * np.log(2.0), rtol=1e-15)


def test_visible_bias_only():
    n = 3
    a = np.full(n, 0.5j * np.pi)
    rbm = RbmParameters(a=a, b=np.zeros(2 * n), W=np.zeros((2 * n, n)))
    spins = all_spins(n)
    expected = 0.5j * np.pi * spins.sum(axis=1) + 2 * n * np.log(2.0)
    np.testing.assert_allclose(rbm_log_amplitude(rbm, spins), expected, atol=1e-13)


def test_log_amplitude_matches_direct_product():
    rng = np.random.default_rng(0)
    n = 6
    rbm = random_rbm(rng, n, alpha=2, sigma=0.7)
    spins = all_spins(n)
    # direct evaluation without log space
    theta = spins @ rbm.W.T + rbm.b
    direct = np.exp(spins @ rbm.a) * np.prod(2.0 * np.cosh(theta), axis=1)
    np.testing.assert_allclose(np.exp(rbm_log_amplitude(rbm, spins)), direct,
                               rtol=1e-12)


def test_log_amplitude_stable_at_large_arguments():
    n = 2
    rbm = RbmParameters(a=np.zeros(n), b=np.array([650.0 + 0.3j, -650.0]),
                        W=np.zeros((2, n)))
    vals = rbm_log_amplitude(rbm, all_spins(n))
    assert np.all(np.isfinite(vals.real))
    np.testing.assert_allclose(vals.real, 1300.0, rtol=1e-12)


def test_nan_parameters_rejected():
    with pytest.raises(ValueError, match="NaN"):
        RbmParameters(a=np.array([np.nan]), b=np.zeros(1), W=np.zeros((1, 1)))


# ---------------------------------------------------------------------------
# RBM derivatives vs finite differences


def test_zero_parameter_derivatives():
    n = 3
    rbm = RbmParameters(a=np.zeros(n), b=np.zeros(n), W=np.zeros((n, n)))
    spins = all_spins(n)
    d = rbm_log_derivatives(rbm, spins)
    np.testing.assert_allclose(d[:, :n], spins, atol=1e-15)       # d/da = sigma
    np.testing.assert_allclose(d[:, n:2 * n], 0.0, atol=1e-15)    # tanh(0)

def test_rbm_derivatives_match_finite_differences():
    rng = np.random.default_rng(7)
    n = 4
    rbm = random_rbm(rng, n, alpha=1, sigma=0.4)
    spins = all_spins(n)[5:6]
    d = rbm_log_derivatives(rbm, spins)[0]
    h = 1e-6
    flat = rbm.flatten()
    for k in range(flat.size):
        for direction in (1.0, 1j):
            bump = np.zeros_like(flat)
            bump[k] = h * direction
            fp = rbm_log_amplitude(RbmParameters.unflatten(flat + bump, n, n), spins)[0]
            fm = rbm_log_amplitude(RbmParameters.unflatten(flat - bump, n, n), spins)[0]
            fd = (fp - fm) / (2 * h * direction)
            assert abs(fd - d[k]) <= 1e-7 * max(1.0, abs(d[k]))


# ---------------------------------------------------------------------------
# Coefficients


def test_coefficients_initial_condition():
    rng = np.random.default_rng(1)
    fc = FourierCoefficients(gamma=rng.standard_normal((3, 5)) * (1 + 1j),
                             omega=rng.standard_normal(5))
    c, c_dot = fc.coefficients(0.0)
    assert c[0] == 1.0 and c_dot[0] == 0.0
    np.testing.assert_array_equal(c[1:], 0.0)


def test_single_mode_arithmetic():
    fc = FourierCoefficients(gamma=np.array([[1.0 + 0j]]), omega=np.array([np.pi]))
    c, c_dot = fc.coefficients(1.0)
    assert c[1] == pytest.approx(-2.0, abs=1e-14)
    assert c_dot[1] == pytest.approx(1j * np.pi * np.exp(1j * np.pi), abs=1e-14)


def test_init_frequencies():
    np.testing.assert_allclose(init_frequencies(-1, 1, 3), [-1, 0, 1])
    np.testing.assert_allclose(init_frequencies(0, 10, 2), [0, 10])
    with pytest.raises(ValueError):
        init_frequencies(1, 1, 4)


def test_frequency_grid_spans_dense_spectrum():
    from tnqg.hamiltonian import tfi_hamiltonian
    lat = build_lattice("chain", [10], True)
    ev = np.linalg.eigvalsh(tfi_hamiltonian(lat, J=1, h=2).dense_matrix())
    w = init_frequencies(ev[0], ev[-1], 64)
    assert w[0] == pytest.approx(ev[0]) and w[-1] == pytest.approx(ev[-1])
    np.testing.assert_allclose(np.diff(w), np.diff(w)[0])


# ---------------------------------------------------------------------------
# Galerkin amplitude


def test_amplitude_at_t0_is_phi0():
    st = rng_state(5, 3, 4, seed=2)
    spins = all_spins(5)
    np.testing.assert_allclose(st.log_amplitude_batch(spins, 0.0), 0.0, atol=1e-14)


def test_m0_state_equals_phi0_at_all_times():
    lat = build_lattice("chain", [4], True)
    st = initial_galerkin_state(lat, 0, 4, omega=np.linspace(-1, 1, 4))
    spins = all_spins(4)
    for t in (0.0, 0.3, 2.7):
        np.testing.assert_array_equal(st.log_amplitude_batch(spins, t), 0.0)
        np.testing.assert_array_equal(st.log_time_derivative_batch(spins, t), 0.0)


def test_amplitude_matches_direct_summation():
    st = rng_state(6, 3, 4, seed=3, sigma=0.5, gamma_scale=0.5)
    spins = all_spins(6)
    t = 0.8
    c, _ = st.coeffs.coefficients(t)
    cols = np.exp(st.basis_log_columns(spins))
    direct = cols @ c
    np.testing.assert_allclose(np.exp(galerkin_log_amplitude(st, spins, t)),
                               direct, rtol=1e-11)


def test_exact_zero_amplitude_is_minus_inf():
    # exactly canceling terms must come out as -inf, never NaN
    cols = np.zeros((8, 2), dtype=complex)
    vals = combine_log_columns(cols, np.array([1.0, -1.0]))
    assert np.all(np.isneginf(vals.real))
    assert not np.any(np.isnan(vals))
    # all-zero weights behave the same way
    vals2 = combine_log_columns(cols, np.array([0.0, 0.0]))
    assert np.all(np.isneginf(vals2.real))
    # and near-cancellation stays finite with a very negative real part
    fc = FourierCoefficients(gamma=np.array([[(1 + 1j) / 2]]),
                             omega=np.array([np.pi / 2]))
    rbm = RbmParameters(a=np.zeros(3), b=np.zeros(0), W=np.zeros((0, 3)))
    st = GalerkinState(phi0=PlusProductState(3), basis=(rbm,), coeffs=fc)
    near = st.log_amplitude_batch(all_spins(3), 1.0)
    assert np.all(near.real < -30) and not np.any(np.isnan(near))


def test_logsumexp_shift_invariance():
    rng = np.random.default_rng(4)
    cols = rng.standard_normal((32, 4)) + 1j * rng.standard_normal((32, 4))
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    base = combine_log_columns(cols, c)
    shifted = combine_log_columns(cols + 50.0, c * np.exp(-50.0))
    np.testing.assert_allclose(shifted, base, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# Time and parameter derivatives vs finite differences


def test_time_derivative_matches_fd():
    st = rng_state(5, 2, 3, seed=5, sigma=0.3, gamma_scale=0.4)
    spins = all_spins(5)
    t, h = 0.7, 1e-6
    o_t = log_time_derivative(st, spins, t)
    fd = (galerkin_log_amplitude(st, spins, t + h)
          - galerkin_log_amplitude(st, spins, t - h)) / (2 * h)
    np.testing.assert_allclose(o_t, fd, rtol=2e-7, atol=1e-9)


def test_time_derivative_dominant_basis_limit():
    # one basis state with a huge constant amplitude swamps phi_0:
    # O_t -> cdot_1/c_1 = i w e^{iwt} / (e^{iwt} - 1)
    n, w = 3, 1.3
    rbm = RbmParameters(a=np.zeros(n), b=np.full(1, 40.0), W=np.zeros((1, n)))
    fc = FourierCoefficients(gamma=np.array([[1.0 + 0j]]), omega=np.array([w]))
    st = GalerkinState(phi0=PlusProductState(n), basis=(rbm,), coeffs=fc)
    t = 0.9
    o_t = st.log_time_derivative_batch(all_spins(n), t)
    expected = 1j * w * np.exp(1j * w * t) / (np.exp(1j * w * t) - 1.0)
    np.testing.assert_allclose(o_t, expected, rtol=1e-10)


def test_param_derivatives_zero_gamma_rbm_block():
    st = rng_state(4, 2, 3, seed=6, gamma_scale=0.0)
    spins = all_spins(4)
    o, _ = log_param_derivatives(st, spins, 0.5)
    n_rbm = sum(r.n_params for r in st.basis)
    np.testing.assert_array_equal(o[:, :n_rbm], 0.0)


@pytest.mark.parametrize("train_omega", [True, False])
def test_param_derivatives_match_fd(train_omega):
    st = rng_state(4, 2, 3, seed=8, sigma=0.3, gamma_scale=0.3, t_omega=train_omega)
    spins = all_spins(4)[3:4]
    t, h = 0.6, 1e-6
    o, _ = log_param_derivatives(st, spins, t)
    o = o[0]
    real = st.pack_real()
    n_c = st.n_complex_params
    assert o.size == n_c + (st.coeffs.n_modes if train_omega else 0)

    def amp(vec):
        return st.unpack_real(vec).log_amplitude_batch(spins, t)[0]

    for k in range(n_c):
        for comp, expect in ((2 * k, o[k]), (2 * k + 1, 1j * o[k])):
            bump = np.zeros_like(real)
            bump[comp] = h
            fd = (amp(real + bump) - amp(real - bump)) / (2 * h)
            assert abs(fd - expect) <= 1e-7 * max(1.0, abs(expect))
    if train_omega:
        for k in range(st.coeffs.n_modes):
            bump = np.zeros_like(real)
            bump[2 * n_c + k] = h
            fd = (amp(real + bump) - amp(real - bump)) / (2 * h)
            assert abs(fd - o[n_c + k]) <= 1e-7 * max(1.0, abs(o[n_c + k]))


def test_param_derivative_time_derivative_matches_fd():
    st = rng_state(4, 2, 3, seed=9, sigma=0.3, gamma_scale=0.3)
    spins = all_spins(4)[::3]
    t, h = 0.45, 1e-6
    _, o_dot = log_param_derivatives(st, spins, t)
    op, _ = log_param_derivatives(st, spins, t + h)
    om, _ = log_param_derivatives(st, spins, t - h)
    fd = (op - om) / (2 * h)
    scale = np.maximum(1.0, np.abs(o_dot))
    assert np.max(np.abs(fd - o_dot) / scale) <= 1e-6


# ---------------------------------------------------------------------------
# Frozen windows, packing, serialization


def test_frozen_state_flattening_consistency():
    st = rng_state(4, 2, 3, seed=10, sigma=0.4, gamma_scale=0.5)
    frozen = FrozenGalerkinState(inner=st, t_star=0.7)
    nxt = rng_state(4, 2, 3, seed=11, sigma=0.4, gamma_scale=0.5)
    chained = GalerkinState(phi0=frozen, basis=nxt.basis, coeffs=nxt.coeffs)
    spins = all_spins(4)
    # boundary continuity: at local t=0 the chained state equals the frozen one
    np.testing.assert_allclose(chained.log_amplitude_batch(spins, 0.0),
                               st.log_amplitude_batch(spins, 0.7), atol=1e-13)
    # flat expansion reproduces the nested evaluation at a later local time
    t = 0.4
    terms = chained.flat_rbm_terms(t)
    acc = np.zeros(16, dtype=complex)
    for w, rbm in terms:
        if rbm is None:
            acc += w
        else:
            acc += w * np.exp(rbm_log_amplitude(rbm, spins))
    np.testing.assert_allclose(np.exp(chained.log_amplitude_batch(spins, t)),
                               acc, rtol=1e-11)


def test_pack_unpack_roundtrip():
    st = rng_state(5, 2, 4, seed=12, gamma_scale=0.3)
    vec = st.pack_real()
    assert vec.size == st.n_real_params == 2 * st.n_complex_params + 4
    st2 = st.unpack_real(vec)
    np.testing.assert_array_equal(st2.pack_real(), vec)
    for r1, r2 in zip(st.basis, st2.basis):
        np.testing.assert_array_equal(r1.W, r2.W)
    np.testing.assert_array_equal(st2.coeffs.gamma, st.coeffs.gamma)


def test_checkpoint_roundtrip(tmp_path):
    st = rng_state(4, 2, 3, seed=13, gamma_scale=0.2)
    frozen = FrozenGalerkinState(inner=st, t_star=0.25)
    nxt = rng_state(4, 1, 3, seed=14)
    chained = GalerkinState(phi0=frozen, basis=nxt.basis, coeffs=nxt.coeffs)
    path = tmp_path / "ckpt.json"
    save_state(chained, path)
    loaded = load_state(path)
    spins = all_spins(4)
    np.testing.assert_array_equal(loaded.log_amplitude_batch(spins, 0.33),
                                  chained.log_amplitude_batch(spins, 0.33))
    doc = json.loads(path.read_text())
    assert doc["format"] == "tnqg-params-1"
