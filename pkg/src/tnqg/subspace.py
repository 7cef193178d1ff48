"""Projected dynamics in the span of the basis states.

All subspace matrices (Gram S, reduced H, H^2, observables) are known only
up to one shared positive constant: the basis states are unnormalized and
Monte Carlo estimation fixes the scale to the mixture normalization.  Every
quantity computed here is a ratio in which that constant cancels.

The refined coefficient trajectories solve the projected Schrodinger
equation c(t) = exp(-i t S^{-1} H) c(0) through the regularized Hermitian
pencil H v = lambda S v; the same eigenpairs give the mode decomposition
c_i(t) = sum_k gtilde_ik e^{-i lambda_k t} used for infinite-time averages.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ansatz import _flat_terms_of, basis_fractions, combine_log_columns
from .exact_oracle import DEGENERACY_RTOL
from .hamiltonian import EnumeratedAction
from .lattice import ENUMERATION_CAP, bits_to_spin_matrix, enumerate_configs
from .numerics import cumulative_simpson_integral, group_close_values
from .sampler import sample_mixture_from_groups

REG_SCALE = 1e-10


@dataclass
class SubspaceMatrices:
    s: np.ndarray
    h: np.ndarray
    h2: np.ndarray
    observables: dict
    mode: str
    n_samples: int = 0
    stderr: dict = None

    @property
    def n_states(self):
        return self.s.shape[0]

    def rescaled(self, factor):
        """All entries share one unknown constant; rescaling must not change
        any derived quantity (tested)."""
        return SubspaceMatrices(
            s=self.s * factor, h=self.h * factor, h2=self.h2 * factor,
            observables={k: v * factor for k, v in self.observables.items()},
            mode=self.mode, n_samples=self.n_samples, stderr=self.stderr)


def basis_of_state(state):
    """The M+1 amplitude providers of a window: phi_0 then the RBMs."""
    return [state.phi0, *state.basis]


def _provider_columns(providers, spins):
    from .ansatz import RbmParameters, rbm_log_amplitude

    cols = np.empty((spins.shape[0], len(providers)), dtype=np.complex128)
    for i, prov in enumerate(providers):
        if isinstance(prov, RbmParameters):
            cols[:, i] = rbm_log_amplitude(prov, spins)
        else:
            cols[:, i] = prov.log_amplitude_batch(spins)
    return cols


def _provider_flat_groups(providers):
    from .ansatz import RbmParameters

    groups = []
    for prov in providers:
        if isinstance(prov, RbmParameters):
            groups.append([(1.0 + 0.0j, prov)])
        else:
            groups.append(_flat_terms_of(prov))
    return groups


def estimate_matrices(providers, ham, operators=None, mode="exact",
                      chain_cfg=None, cap=ENUMERATION_CAP, point_index=0):
    """S, H, H^2 and observable matrices over the given basis states.

    exact mode sums over the enumerated Hilbert space; mc mode samples the
    mixture Pi(sigma) = sum_i |phi_i(sigma)|^2 and uses the symmetrized
    estimators, returning per-entry standard errors as well.
    """
    operators = operators or {}
    n_sites = providers[0].n_sites if hasattr(providers[0], "n_sites") \
        else providers[0].a.size
    if mode == "exact":
        spins = bits_to_spin_matrix(enumerate_configs(n_sites, cap), n_sites)
        cols = _provider_columns(providers, spins)
        finite = np.isfinite(cols.real)
        s_ref = cols.real[finite].max()
        phi = np.exp(cols - s_ref)
        phi[~finite] = 0.0
        h_action = EnumeratedAction(ham, n_sites)
        hphi = h_action.apply(phi)
        mats = {
            "s": phi.conj().T @ phi,
            "h": phi.conj().T @ hphi,
            "h2": hphi.conj().T @ hphi,
        }
        obs = {}
        for name, op in operators.items():
            obs[name] = phi.conj().T @ EnumeratedAction(op, n_sites).apply(phi)
        return SubspaceMatrices(s=mats["s"], h=mats["h"], h2=mats["h2"],
                                observables=obs, mode="exact")

    if chain_cfg is None:
        raise ValueError("mc mode needs a ChainConfig")
    bits = sample_mixture_from_groups(_provider_flat_groups(providers), n_sites,
                                      chain_cfg, point_index)
    n_s = len(bits)
    spins = bits_to_spin_matrix(bits, n_sites)
    amps = ham.group_amplitudes(spins)
    cols = _provider_columns(providers, spins)
    m_loc = cols.real.max(axis=1)
    phi = np.exp(cols - m_loc[:, None])                  # (n_s, M+1)
    pi = (np.abs(phi) ** 2).sum(axis=1)                  # mixture, same scale
    hphi = np.zeros_like(phi)
    flip_cols = {}
    for mask, amp in amps:
        flipped = bits_to_spin_matrix(bits ^ np.uint64(mask), n_sites)
        fc = _provider_columns(providers, flipped)
        flip_cols[mask] = fc
        hphi += amp[:, None] * np.exp(fc - m_loc[:, None])

    def mean_and_err(values):
        est = values.mean(axis=0)
        err = values.std(axis=0) / np.sqrt(n_s)
        return est, np.abs(err)

    s_vals = phi.conj()[:, :, None] * phi[:, None, :] / pi[:, None, None]
    h_vals = 0.5 * (phi.conj()[:, :, None] * hphi[:, None, :]
                    + hphi.conj()[:, :, None] * phi[:, None, :]) / pi[:, None, None]
    h2_vals = hphi.conj()[:, :, None] * hphi[:, None, :] / pi[:, None, None]
    s_mat, s_err = mean_and_err(s_vals)
    h_mat, h_err = mean_and_err(h_vals)
    h2_mat, h2_err = mean_and_err(h2_vals)
    obs, obs_err = {}, {}
    for name, op in operators.items():
        ophi = np.zeros_like(phi)
        for mask, amp in op.group_amplitudes(spins):
            fc = flip_cols.get(mask)
            if fc is None:
                fc = _provider_columns(
                    providers, bits_to_spin_matrix(bits ^ np.uint64(mask), n_sites))
            ophi += amp[:, None] * np.exp(fc - m_loc[:, None])
        vals = 0.5 * (phi.conj()[:, :, None] * ophi[:, None, :]
                      + ophi.conj()[:, :, None] * phi[:, None, :]) / pi[:, None, None]
        obs[name], obs_err[name] = mean_and_err(vals)
    return SubspaceMatrices(
        s=s_mat, h=h_mat, h2=h2_mat, observables=obs, mode="mc", n_samples=n_s,
        stderr={"s": s_err, "h": h_err, "h2": h2_err, **{f"obs:{k}": v
                                                         for k, v in obs_err.items()}})


# ---------------------------------------------------------------------------
# Regularized pencil


def _hermitize(a):
    return 0.5 * (a + a.conj().T)


@dataclass
class Pencil:
    lambdas: np.ndarray     # generalized eigenvalues, ascending
    vectors: np.ndarray     # columns, S-orthonormal: V^dag S_reg V = 1
    s_reg: np.ndarray
    s_herm: np.ndarray
    h_herm: np.ndarray
    epsilon: float


def solve_pencil(matrices, reg_scale=REG_SCALE):
    """Hermitize S and H, clip S eigenvalues at the regularization floor,
    solve H v = lambda S v."""
    s_h = _hermitize(matrices.s)
    h_h = _hermitize(matrices.h)
    eps = reg_scale * np.trace(s_h).real / s_h.shape[0]
    evals, evecs = np.linalg.eigh(s_h)
    clipped = np.maximum(evals, eps)
    s_reg = (evecs * clipped) @ evecs.conj().T
    try:
        lam, vec = scipy.linalg.eigh(h_h, s_reg)
    except scipy.linalg.LinAlgError as exc:
        cond = clipped.max() / clipped.min()
        raise np.linalg.LinAlgError(
            f"generalized eigenproblem failed; cond(S_reg) = {cond:.3e}") from exc
    return Pencil(lambdas=lam, vectors=vec, s_reg=s_reg, s_herm=s_h,
                  h_herm=h_h, epsilon=eps)


def linear_variational_coefficients(matrices, t_grid, reg_scale=REG_SCALE,
                                    pencil=None):
    """Optimal projected trajectories c(t) = exp(-i t S^{-1} H) c(0) with
    c(0) = (1, 0, ..., 0); returns (len(t), M+1)."""
    pencil = pencil or solve_pencil(matrices, reg_scale)
    c0 = np.zeros(matrices.n_states, dtype=np.complex128)
    c0[0] = 1.0
    beta = pencil.vectors.conj().T @ (pencil.s_reg @ c0)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    phases = np.exp(-1j * np.outer(t_grid, pencil.lambdas))
    return (phases * beta) @ pencil.vectors.T


@dataclass
class ModeDecomposition:
    """c_i(t) = sum_k gamma_tilde[i, k] e^{-i lambdas[k] t}; groups collect
    modes with equal frequency (within the shared degeneracy tolerance)."""

    lambdas: np.ndarray
    gamma_tilde: np.ndarray
    groups: list

    def coefficients(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phases = np.exp(-1j * np.outer(t, self.lambdas))
        return phases @ self.gamma_tilde.T


def mode_decomposition(matrices, reg_scale=REG_SCALE, pencil=None,
                       rtol=DEGENERACY_RTOL):
    pencil = pencil or solve_pencil(matrices, reg_scale)
    c0 = np.zeros(matrices.n_states, dtype=np.complex128)
    c0[0] = 1.0
    beta = pencil.vectors.conj().T @ (pencil.s_reg @ c0)
    gamma_tilde = pencil.vectors * beta[None, :]
    groups = group_close_values(pencil.lambdas, rtol)
    return ModeDecomposition(lambdas=pencil.lambdas, gamma_tilde=gamma_tilde,
                             groups=groups)


def fourier_mode_decomposition(state, rtol=DEGENERACY_RTOL):
    """Alternative mode table read off the raw coefficient parametrization:
    c_i(t) = sum_k gamma_ik e^{i omega_k t} + (delta_i0 - sum_k gamma_ik),
    i.e. modes at -omega_k (in the e^{-i lambda t} convention) plus one at 0."""
    gamma = state.coeffs.gamma
    omega = state.coeffs.omega
    m = gamma.shape[0]
    lambdas = np.concatenate([[0.0], -omega])
    gt = np.zeros((m + 1, omega.size + 1), dtype=np.complex128)
    gt[0, 0] = 1.0
    gt[1:, 0] = -gamma.sum(axis=1)
    gt[1:, 1:] = gamma
    return ModeDecomposition(lambdas=lambdas, gamma_tilde=gt,
                             groups=group_close_values(lambdas, rtol))


# ---------------------------------------------------------------------------
# Subspace loss and infinite-time quantities


def residual_matrix(matrices, reg_scale=REG_SCALE, pencil=None):
    """Sigma = H2 - H S^{-1} H (Hermitized, regularized S inverse)."""
    pencil = pencil or solve_pencil(matrices, reg_scale)
    h2 = _hermitize(matrices.h2)
    sinv_h = np.linalg.solve(pencil.s_reg, pencil.h_herm)
    return _hermitize(h2 - pencil.h_herm @ sinv_h)


def subspace_loss(matrices, c, reg_scale=REG_SCALE, sigma=None):
    """L = (c^dag Sigma c) / (c^dag S c): the time-local loss of the refined
    trajectory in closed form.  Normalizing by c^dag S c makes the unknown
    shared constant and the state norm drop out."""
    sigma = residual_matrix(matrices, reg_scale) if sigma is None else sigma
    c = np.asarray(c, dtype=np.complex128)
    s_h = _hermitize(matrices.s)
    den = np.vdot(c, s_h @ c).real
    if den <= 0:
        raise ValueError("c^dag S c is not positive; basis collapsed")
    num = np.vdot(c, sigma @ c).real
    if num < -1e-8 * abs(den):
        raise ValueError(f"residual quadratic form came out negative ({num:.3e})")
    return max(num, 0.0) / den


def _grouped_ratio(modes, numerator_mat, denominator_mat):
    num = 0.0 + 0.0j
    den = 0.0 + 0.0j
    for grp in modes.groups:
        g = modes.gamma_tilde[:, grp].sum(axis=1)
        num += np.vdot(g, numerator_mat @ g)
        den += np.vdot(g, denominator_mat @ g)
    if abs(den) == 0:
        raise ValueError("vanishing denominator in infinite-time average")
    return num / den


def infinite_time_expectation(matrices, modes, observable):
    """t -> infinity limit of <O>(t): oscillating cross terms discarded,
    equal-frequency blocks kept."""
    o_mat = (matrices.observables[observable]
             if isinstance(observable, str) else observable)
    return _grouped_ratio(modes, o_mat, _hermitize(matrices.s))


def infinite_time_loss(matrices, modes, reg_scale=REG_SCALE, sigma=None):
    sigma = residual_matrix(matrices, reg_scale) if sigma is None else sigma
    val = _grouped_ratio(modes, sigma, _hermitize(matrices.s)).real
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# Error bounds from the integrated loss


def error_bounds(per_point_losses, points, op_norm=1.0):
    """(state bound, observable bound) at every grid time.

    state: ||psi_exact - psi_theta|| <= t sqrt(L_[0,t]),
    observable: |dO| <= ||O||_2 (2 t sqrt(L_[0,t]) + t^2 L_[0,t]),
    with L_[0,t] the running mean of the loss, integrated cumulatively.
    """
    per_point_losses = np.asarray(per_point_losses, dtype=float)
    if np.any(per_point_losses < -1e-12):
        raise ValueError("negative loss values in bound computation")
    integral = cumulative_simpson_integral(np.maximum(per_point_losses, 0.0),
                                           points)
    t_int = np.asarray(points) - points[0]
    t_l = t_int * integral                      # t^2 * L_[0,t]
    state_bound = np.sqrt(np.maximum(t_l, 0.0))
    obs_bound = op_norm * (2.0 * state_bound + t_l)
    return state_bound, obs_bound


# ---------------------------------------------------------------------------
# Refined-state evaluation (duck-typed like GalerkinState for the generic
# estimators)


class RefinedState:
    """Fixed basis states carrying pencil-mode coefficient trajectories."""

    def __init__(self, providers, modes):
        self.providers = providers
        self.modes = modes
        self.n_sites = (providers[0].n_sites if hasattr(providers[0], "n_sites")
                        else providers[0].a.size)

    def coefficients(self, t):
        phases = np.exp(-1j * self.modes.lambdas * t)
        c = self.modes.gamma_tilde @ phases
        c_dot = self.modes.gamma_tilde @ (-1j * self.modes.lambdas * phases)
        return c, c_dot

    def basis_log_columns(self, spins):
        return _provider_columns(self.providers, spins)

    def log_amplitude_batch(self, spins, t):
        c, _ = self.coefficients(t)
        return combine_log_columns(self.basis_log_columns(spins), c)

    def log_time_derivative_batch(self, spins, t):
        cols = self.basis_log_columns(spins)
        c, c_dot = self.coefficients(t)
        log_psi = combine_log_columns(cols, c)
        return basis_fractions(cols, log_psi) @ c_dot


def matrix_expectation_trajectory(matrices, observable, c_traj):
    """<O>(t) = (c^dag O c)/(c^dag S c) along a coefficient trajectory."""
    o_mat = (matrices.observables[observable]
             if isinstance(observable, str) else observable)
    s_h = _hermitize(matrices.s)
    num = np.einsum("ti,ij,tj->t", c_traj.conj(), o_mat, c_traj)
    den = np.einsum("ti,ij,tj->t", c_traj.conj(), s_h, c_traj).real
    return num / den


# ---------------------------------------------------------------------------
# Export


def save_matrices(matrices, path):
    def carr(m):
        return np.stack([m.real, m.imag], axis=-1).tolist()

    doc = {
        "note": "entries share one unknown positive scale constant",
        "estimator_mode": matrices.mode,
        "n_samples": matrices.n_samples,
        "s": carr(matrices.s),
        "h": carr(matrices.h),
        "h2": carr(matrices.h2),
        "observables": {k: carr(v) for k, v in matrices.observables.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_matrices(path):
    with open(path) as fh:
        doc = json.load(fh)

    def uncarr(d):
        arr = np.asarray(d, dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]

    return SubspaceMatrices(
        s=uncarr(doc["s"]), h=uncarr(doc["h"]), h2=uncarr(doc["h2"]),
        observables={k: uncarr(v) for k, v in doc["observables"].items()},
        mode=doc["estimator_mode"], n_samples=doc.get("n_samples", 0))
