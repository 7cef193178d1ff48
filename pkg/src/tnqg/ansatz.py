"""Variational state: complex RBM basis states combined with time-dependent
coefficients expanded over truncated Fourier modes.

The state is Psi(sigma, t) = sum_{i=0}^{M} c_i(t) phi_i(sigma) with
c_0(t) = 1 and c_i(0) = 0 for i >= 1, so Psi(., 0) = phi_0 exactly.
phi_0 is either the fully polarized product state |+>^N (constant amplitude
1 in the z basis) or a previous optimization window frozen at its final
time; the remaining phi_i are complex RBMs.

Trainable parameter order (version tag "tnqg-params-1"):
    for each basis state j = 1..M: a (N), b (alpha*N), W row-major,
    then gamma row-major (i major, mode minor), then omega if trainable.
Complex parameters map to real components as (Re, Im) pairs in that order;
the omega block is appended as plain reals.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .numerics import complex_logsumexp, log2cosh

PARAM_ORDER_VERSION = "tnqg-params-1"


# ---------------------------------------------------------------------------
# RBM basis states


@dataclass(frozen=True)
class RbmParameters:
    """One complex RBM: log phi(sigma) = a.sigma + sum_j log 2cosh(b_j + W_j.sigma)."""

    a: np.ndarray
    b: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.complex128)
        b = np.asarray(self.b, dtype=np.complex128)
        W = np.asarray(self.W, dtype=np.complex128)
        if W.ndim != 2 or W.shape != (b.size, a.size):
            raise ValueError(f"W must be ({b.size}, {a.size}), got {W.shape}")
        for name, arr in (("a", a), ("b", b), ("W", W)):
            if np.any(np.isnan(arr.view(np.float64))):
                raise ValueError(f"NaN in RBM parameter {name}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "W", W)

    @property
    def n_sites(self):
        return self.a.size

    @property
    def n_hidden(self):
        return self.b.size

    @property
    def n_params(self):
        return self.a.size + self.b.size + self.W.size

    def flatten(self):
        return np.concatenate([self.a, self.b, self.W.ravel()])

    @staticmethod
    def unflatten(vec, n_sites, n_hidden):
        vec = np.asarray(vec, dtype=np.complex128)
        a = vec[:n_sites]
        b = vec[n_sites:n_sites + n_hidden]
        W = vec[n_sites + n_hidden:].reshape(n_hidden, n_sites)
        return RbmParameters(a=a, b=b, W=W)


def random_rbm(rng, n_sites, alpha=1, sigma=0.01):
    """Small random init: a = 0, complex-Gaussian b and W of std sigma.
    Near-zero weights keep the state close to constant, i.e. close to the
    polarized initial state of a paramagnetic quench."""
    n_h = alpha * n_sites
    scale = sigma / np.sqrt(2.0)

    def cgauss(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return RbmParameters(a=np.zeros(n_sites, dtype=np.complex128),
                         b=cgauss(n_h), W=cgauss(n_h, n_sites))


def rbm_log_amplitude(params, spins):
    """log phi(sigma) for a batch of configurations; (n,) complex."""
    spins = np.asarray(spins, dtype=np.float64)
    theta = spins @ params.W.T + params.b
    return spins @ params.a + log2cosh(theta).sum(axis=-1)


def rbm_hidden_activations(params, spins):
    """tanh(b + W.sigma), the hidden-unit responses; (n, alpha*N)."""
    spins = np.asarray(spins, dtype=np.float64)
    return np.tanh(spins @ params.W.T + params.b)


def rbm_log_derivatives(params, spins):
    """d log phi / d theta_k for the flattening order (a, b, W row-major).

    Returns an (n, n_params) complex matrix: columns are sigma_i, tanh(theta_j),
    sigma_i tanh(theta_j).
    """
    spins = np.asarray(spins, dtype=np.float64)
    t = rbm_hidden_activations(params, spins)
    n = spins.shape[0]
    d_w = (t[:, :, None] * spins[:, None, :]).reshape(n, -1)
    return np.concatenate([spins.astype(np.complex128), t, d_w], axis=1)


# ---------------------------------------------------------------------------
# Time-dependent coefficients


@dataclass(frozen=True)
class FourierCoefficients:
    """c_i(t) = sum_k gamma_ik (e^{i omega_k t} - 1) for i >= 1; c_0 = 1."""

    gamma: np.ndarray    # (M, N_b) complex
    omega: np.ndarray    # (N_b,) real

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.complex128)
        omega = np.asarray(self.omega, dtype=np.float64)
        if gamma.ndim != 2:
            raise ValueError("gamma must be a (M, N_b) matrix")
        if omega.ndim != 1 or omega.size != gamma.shape[1]:
            raise ValueError("omega length must match gamma columns")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "omega", omega)

    @property
    def n_states(self):
        return self.gamma.shape[0]

    @property
    def n_modes(self):
        return self.gamma.shape[1]

    def coefficients(self, t):
        """(c, c_dot), each (M+1,) complex, at time t >= 0."""
        phase = np.exp(1j * self.omega * t)
        c = np.concatenate([[1.0], self.gamma @ (phase - 1.0)])
        c_dot = np.concatenate([[0.0], self.gamma @ (1j * self.omega * phase)])
        return c, c_dot

    def coefficients_batch(self, ts):
        """Vectorized coefficients: (c, c_dot) of shape (len(ts), M+1)."""
        ts = np.asarray(ts, dtype=float)
        phase = np.exp(1j * np.outer(ts, self.omega))
        c = np.empty((ts.size, self.n_states + 1), dtype=np.complex128)
        c_dot = np.empty_like(c)
        c[:, 0] = 1.0
        c_dot[:, 0] = 0.0
        c[:, 1:] = (phase - 1.0) @ self.gamma.T
        c_dot[:, 1:] = (1j * self.omega * phase) @ self.gamma.T
        return c, c_dot


def init_frequencies(e_min, e_max, n_modes):
    """Mode frequencies evenly spaced over the spectral range of H."""
    if n_modes < 2:
        raise ValueError("need at least 2 modes")
    if not e_max > e_min:
        raise ValueError(f"degenerate frequency interval [{e_min}, {e_max}]")
    return np.linspace(e_min, e_max, n_modes)


# ---------------------------------------------------------------------------
# Galerkin state and frozen initial states


@dataclass(frozen=True)
class PlusProductState:
    """|+>^N: constant amplitude 1 over every z-basis configuration."""

    n_sites: int

    def log_amplitude_batch(self, spins):
        return np.zeros(np.asarray(spins).shape[0], dtype=np.complex128)


@dataclass(frozen=True)
class FrozenGalerkinState:
    """A completed window's state pinned at its final local time."""

    inner: "GalerkinState"
    t_star: float

    @property
    def n_sites(self):
        return self.inner.n_sites

    def log_amplitude_batch(self, spins):
        return self.inner.log_amplitude_batch(spins, self.t_star)


@dataclass(frozen=True)
class GalerkinState:
    phi0: object                      # PlusProductState | FrozenGalerkinState
    basis: tuple                      # M RbmParameters
    coeffs: FourierCoefficients
    train_omega: bool = True

    def __post_init__(self):
        if self.coeffs.n_states != len(self.basis):
            raise ValueError("gamma rows must match the number of basis states")
        for r in self.basis:
            if r.n_sites != self.phi0.n_sites:
                raise ValueError("basis state size mismatch")
        object.__setattr__(self, "basis", tuple(self.basis))

    @property
    def n_sites(self):
        return self.phi0.n_sites

    @property
    def n_basis(self):
        return len(self.basis)

    # -- evaluation ---------------------------------------------------------

    def basis_log_columns(self, spins):
        """(n, M+1) table of log phi_i(sigma); column 0 is phi_0."""
        spins = np.asarray(spins)
        cols = np.empty((spins.shape[0], self.n_basis + 1), dtype=np.complex128)
        cols[:, 0] = self.phi0.log_amplitude_batch(spins)
        for j, rbm in enumerate(self.basis):
            cols[:, j + 1] = rbm_log_amplitude(rbm, spins)
        return cols

    def log_amplitude_batch(self, spins, t):
        c, _ = self.coeffs.coefficients(t)
        return combine_log_columns(self.basis_log_columns(spins), c)

    def log_time_derivative_batch(self, spins, t):
        """O_t = d/dt log Psi = (sum_i cdot_i phi_i) / (sum_i c_i phi_i)."""
        cols = self.basis_log_columns(spins)
        c, c_dot = self.coeffs.coefficients(t)
        log_psi = combine_log_columns(cols, c)
        u = basis_fractions(cols, log_psi)
        return u @ c_dot

    def flat_rbm_terms(self, t):
        """Unroll the (possibly nested) state at fixed t into a flat linear
        combination of RBMs: a list of (weight, RbmParameters|None), where
        None stands for the constant-amplitude product state."""
        c, _ = self.coeffs.coefficients(t)
        terms = [(c[0] * w, r) for w, r in _flat_terms_of(self.phi0)]
        terms.extend((c[j + 1], rbm) for j, rbm in enumerate(self.basis))
        return terms

    # -- trainable parameter packing ----------------------------------------

    @property
    def n_complex_params(self):
        return sum(r.n_params for r in self.basis) + self.coeffs.gamma.size

    @property
    def n_real_params(self):
        if self.n_basis == 0:
            return 0
        n = 2 * self.n_complex_params
        if self.train_omega:
            n += self.coeffs.n_modes
        return n

    def pack_complex(self):
        """Trainable complex parameters in the documented order (omega excluded)."""
        parts = [r.flatten() for r in self.basis]
        parts.append(self.coeffs.gamma.ravel())
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.complex128)

    def pack_real(self):
        """Interleaved (Re, Im) of the complex block, then omega if trainable."""
        if self.n_basis == 0:
            return np.zeros(0)
        z = self.pack_complex()
        out = np.empty(self.n_real_params)
        out[0:2 * z.size:2] = z.real
        out[1:2 * z.size:2] = z.imag
        if self.train_omega:
            out[2 * z.size:] = self.coeffs.omega
        return out

    def unpack_real(self, vec):
        """Rebuild the state from a real parameter vector (pack_real order)."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_real_params:
            raise ValueError(f"expected {self.n_real_params} components, got {vec.size}")
        if self.n_basis == 0:
            return self
        n_c = self.n_complex_params
        z = vec[0:2 * n_c:2] + 1j * vec[1:2 * n_c:2]
        basis = []
        pos = 0
        for r in self.basis:
            basis.append(RbmParameters.unflatten(z[pos:pos + r.n_params],
                                                 r.n_sites, r.n_hidden))
            pos += r.n_params
        gamma = z[pos:pos + self.coeffs.gamma.size].reshape(self.coeffs.gamma.shape)
        omega = vec[2 * n_c:] if self.train_omega else self.coeffs.omega
        return replace(self, basis=tuple(basis),
                       coeffs=FourierCoefficients(gamma=gamma, omega=omega))

    def real_gradient_from_holomorphic(self, g_complex, g_omega=None):
        """Map holomorphic derivatives dL/dtheta to real-component gradients:
        dL/dRe = 2 Re(dL/dtheta), dL/dIm = -2 Im(dL/dtheta); omega entries
        are real parameters of a holomorphic family, dL/domega = 2 Re(.)."""
        if self.n_basis == 0:
            return np.zeros(0)
        out = np.empty(self.n_real_params)
        n_c = self.n_complex_params
        out[0:2 * n_c:2] = 2.0 * g_complex.real
        out[1:2 * n_c:2] = -2.0 * g_complex.imag
        if self.train_omega:
            out[2 * n_c:] = 2.0 * g_omega.real
        return out


def _flat_terms_of(phi0):
    if isinstance(phi0, PlusProductState):
        return [(1.0 + 0.0j, None)]
    if isinstance(phi0, FrozenGalerkinState):
        return phi0.inner.flat_rbm_terms(phi0.t_star)
    raise TypeError(f"unsupported initial-state component {type(phi0)!r}")


def combine_log_columns(cols, c):
    """log(sum_i c_i exp(cols[:, i])), the stabilized amplitude combination.

    Exact zero total amplitude comes out with real part -inf (never NaN);
    a single unit-weight column passes through bit-exactly.
    """
    if cols.shape[1] == 1 and c[0] == 1.0:
        return cols[:, 0].copy()
    return complex_logsumexp(cols, c)


def basis_fractions(cols, log_psi):
    """u_i(sigma) = phi_i(sigma) / Psi(sigma) from log tables; rows where
    Psi = 0 are zeroed (callers mask them via their probability weights)."""
    with np.errstate(invalid="ignore", over="ignore"):
        u = np.exp(cols - log_psi[:, None])
    dead = ~np.isfinite(log_psi.real)
    if np.any(dead):
        u[dead] = 0.0
    return u


def initial_galerkin_state(lat, n_basis, n_modes, omega, alpha=1, sigma=0.01,
                           rng=None, train_omega=True, phi0=None):
    """Fresh window state: phi_0 = |+>^N unless an explicit frozen state is
    supplied, small random RBMs, gamma = 0 (so Psi(t) = phi_0 initially)."""
    rng = rng if rng is not None else np.random.default_rng()
    basis = tuple(random_rbm(rng, lat.n_sites, alpha=alpha, sigma=sigma)
                  for _ in range(n_basis))
    gamma = np.zeros((n_basis, n_modes), dtype=np.complex128)
    return GalerkinState(
        phi0=phi0 if phi0 is not None else PlusProductState(lat.n_sites),
        basis=basis,
        coeffs=FourierCoefficients(gamma=gamma, omega=np.asarray(omega, dtype=float)),
        train_omega=train_omega,
    )


# ---------------------------------------------------------------------------
# Spec-level derivative operations (reference implementations; the loss
# module uses fused table-based versions of the same formulas)


def galerkin_log_amplitude(state, spins, t):
    return state.log_amplitude_batch(spins, t)


def log_time_derivative(state, spins, t):
    return state.log_time_derivative_batch(spins, t)


def log_param_derivatives(state, spins, t):
    """O_k = d log Psi / d theta_k and dO_k/dt for every trainable parameter.

    Returns (O, O_dot), each (n, P) complex with P = n_complex_params plus
    n_modes when omega is trainable (omega columns hold the holomorphic
    derivative of the complexified frequency).
    """
    spins = np.asarray(spins)
    n = spins.shape[0]
    cols = state.basis_log_columns(spins)
    c, c_dot = state.coeffs.coefficients(t)
    log_psi = combine_log_columns(cols, c)
    u = basis_fractions(cols, log_psi)          # (n, M+1)
    o_t = u @ c_dot
    u_dot = -u * o_t[:, None]                   # d/dt (phi_i / Psi)

    omega = state.coeffs.omega
    gamma = state.coeffs.gamma
    phase = np.exp(1j * omega * t)
    e_m1 = phase - 1.0

    blocks = []
    blocks_dot = []
    for j, rbm in enumerate(state.basis):
        d = rbm_log_derivatives(rbm, spins)     # (n, P_j), time-independent
        cu = c[j + 1] * u[:, j + 1]
        cu_dot = c_dot[j + 1] * u[:, j + 1] + c[j + 1] * u_dot[:, j + 1]
        blocks.append(cu[:, None] * d)
        blocks_dot.append(cu_dot[:, None] * d)

    m = state.n_basis
    if m:
        og = u[:, 1:, None] * e_m1[None, None, :]
        og_dot = (u[:, 1:, None] * (1j * omega * phase)[None, None, :]
                  + u_dot[:, 1:, None] * e_m1[None, None, :])
        blocks.append(og.reshape(n, -1))
        blocks_dot.append(og_dot.reshape(n, -1))

    if state.train_omega and m:
        gu = u[:, 1:] @ gamma                    # (n, N_b): sum_i gamma_ik u_i
        gu_dot = u_dot[:, 1:] @ gamma
        o_w = gu * (1j * t * phase)
        o_w_dot = gu * (1j * phase * (1.0 + 1j * omega * t)) + gu_dot * (1j * t * phase)
        blocks.append(o_w)
        blocks_dot.append(o_w_dot)

    if not blocks:
        return (np.zeros((n, 0), dtype=np.complex128),
                np.zeros((n, 0), dtype=np.complex128))
    return np.concatenate(blocks, axis=1), np.concatenate(blocks_dot, axis=1)


# ---------------------------------------------------------------------------
# Checkpoint serialization (explicit arrays, complex entries as [re, im])


def _carray(arr):
    arr = np.asarray(arr, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _from_carray(data):
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        return np.zeros(0, dtype=np.complex128)
    return arr[..., 0] + 1j * arr[..., 1]


def _state_to_dict(state):
    if isinstance(state, PlusProductState):
        return {"kind": "plus_product", "n_sites": state.n_sites}
    if isinstance(state, FrozenGalerkinState):
        return {"kind": "frozen", "t_star": state.t_star,
                "inner": _state_to_dict(state.inner)}
    return {
        "kind": "galerkin",
        "phi0": _state_to_dict(state.phi0),
        "basis": [{"a": _carray(r.a), "b": _carray(r.b), "W": _carray(r.W)}
                  for r in state.basis],
        "gamma": _carray(state.coeffs.gamma),
        "omega": state.coeffs.omega.tolist(),
        "train_omega": state.train_omega,
    }


def _state_from_dict(d):
    kind = d["kind"]
    if kind == "plus_product":
        return PlusProductState(n_sites=int(d["n_sites"]))
    if kind == "frozen":
        return FrozenGalerkinState(inner=_state_from_dict(d["inner"]),
                                   t_star=float(d["t_star"]))
    if kind == "galerkin":
        basis = tuple(RbmParameters(a=_from_carray(r["a"]), b=_from_carray(r["b"]),
                                    W=_from_carray(r["W"])) for r in d["basis"])
        gamma = _from_carray(d["gamma"])
        if gamma.size == 0:
            gamma = gamma.reshape(len(basis), len(d["omega"]))
        return GalerkinState(
            phi0=_state_from_dict(d["phi0"]),
            basis=basis,
            coeffs=FourierCoefficients(gamma=gamma,
                                       omega=np.asarray(d["omega"], dtype=float)),
            train_omega=bool(d["train_omega"]),
        )
    raise ValueError(f"unknown checkpoint node kind {kind!r}")


def save_state(state, path):
    doc = {"format": PARAM_ORDER_VERSION, "state": _state_to_dict(state)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_state(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != PARAM_ORDER_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    return _state_from_dict(doc["state"])
