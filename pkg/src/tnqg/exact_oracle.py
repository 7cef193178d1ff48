"""Exact state-vector dynamics and ensemble references for desk-scale
verification: dense eigendecomposition up to N=14, a Lanczos exponential
propagator beyond, thermal and diagonal ensembles, and the coarse-grained
basis construction used for basis-count scaling studies."""

import warnings
from dataclasses import dataclass

import numpy as np

from .hamiltonian import EnumeratedAction
from .numerics import group_close_values

DENSE_CAP = 14
ITERATIVE_CAP = 20
DEGENERACY_RTOL = 1e-8


@dataclass
class DenseSpectrum:
    evals: np.ndarray
    evecs: np.ndarray     # columns are eigenvectors

    @classmethod
    def compute(cls, ham):
        if ham.n_sites > DENSE_CAP:
            raise ValueError(f"dense spectrum capped at N<={DENSE_CAP}")
        mat = ham.dense_matrix()
        evals, evecs = np.linalg.eigh(mat)
        return cls(evals=evals, evecs=evecs)

    @property
    def dim(self):
        return self.evals.size

    def reconstruction_residual(self, ham):
        mat = ham.dense_matrix()
        res = mat @ self.evecs - self.evecs * self.evals
        return np.abs(res).max() / max(np.abs(mat).max(), 1e-300)


def spectral_range(ham):
    """(E_min, E_max): dense diagonalization, Lanczos extremes, or (beyond
    the iterative cap) the rigorous triangle-inequality bound sum|w_t|."""
    if ham.n_sites <= DENSE_CAP:
        ev = np.linalg.eigvalsh(ham.dense_matrix())
        return float(ev[0]), float(ev[-1])
    if ham.n_sites <= ITERATIVE_CAP:
        from scipy.sparse.linalg import LinearOperator, eigsh

        action = EnumeratedAction(ham)
        dim = 1 << ham.n_sites
        opr = LinearOperator((dim, dim), matvec=action.apply, dtype=np.complex128)
        lo = eigsh(opr, k=1, which="SA", return_eigenvectors=False)[0]
        hi = eigsh(opr, k=1, which="LA", return_eigenvectors=False)[0]
        return float(lo), float(hi)
    bound = ham.two_norm_bound
    return -bound, bound


# ---------------------------------------------------------------------------
# Time evolution


def evolve_exact(ham, psi0, t_list, method="auto", spectrum=None, tol=1e-10):
    """psi(t) = exp(-iHt) psi0 at the requested times; (len(t), dim)."""
    psi0 = np.asarray(psi0, dtype=np.complex128)
    t_list = np.asarray(t_list, dtype=float)
    if method == "auto":
        method = "dense" if ham.n_sites <= DENSE_CAP else "lanczos"
    if method == "dense":
        spec = spectrum or DenseSpectrum.compute(ham)
        coeffs = spec.evecs.conj().T @ psi0
        phases = np.exp(-1j * np.outer(t_list, spec.evals))
        return (phases * coeffs) @ spec.evecs.T
    if method == "lanczos":
        if ham.n_sites > ITERATIVE_CAP:
            raise ValueError(f"iterative propagator capped at N<={ITERATIVE_CAP}")
        action = EnumeratedAction(ham)
        return _lanczos_evolve(action.apply, psi0, t_list, tol=tol)
    raise ValueError(f"unknown method {method!r}")


def _lanczos_expm(matvec, psi, dt, m_max=40, tol=1e-10):
    """One exp(-i dt H) application via a Lanczos subspace; returns
    (result, converged)."""
    from scipy.linalg import expm

    norm0 = np.linalg.norm(psi)
    if norm0 == 0.0:
        return psi, True
    v = psi / norm0
    vs = [v]
    alphas, betas = [], []
    prev = None
    w = matvec(v)
    for m in range(1, m_max + 1):
        alpha = np.vdot(vs[-1], w).real
        alphas.append(alpha)
        w = w - alpha * vs[-1]
        if len(vs) > 1:
            w = w - betas[-1] * vs[-2]
        # full reorthogonalization: cheap at desk scale, keeps the basis clean
        for u in vs:
            w = w - np.vdot(u, w) * u
        beta = np.linalg.norm(w)
        t_mat = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        y = expm(-1j * dt * t_mat)[:, 0]
        if prev is not None:
            diff = np.linalg.norm(y[:len(prev)] - prev) + abs(y[-1])
            if diff <= tol or beta < 1e-14:
                return norm0 * (np.column_stack(vs) @ y), True
        prev = y
        if beta < 1e-14:
            return norm0 * (np.column_stack(vs) @ y), True
        v = w / beta
        betas.append(beta)
        vs.append(v)
        w = matvec(v)
    return norm0 * (np.column_stack(vs[:len(y)]) @ y), False


def _lanczos_evolve(matvec, psi0, t_list, tol=1e-10, dt_max=0.25):
    order = np.argsort(t_list)
    out = np.empty((len(t_list), psi0.size), dtype=np.complex128)
    psi = psi0.copy()
    t_now = 0.0
    for idx in order:
        target = t_list[idx]
        while abs(target - t_now) > 1e-14:
            dt = np.clip(target - t_now, -dt_max, dt_max)
            step = dt
            for _ in range(40):
                res, ok = _lanczos_expm(matvec, psi, step, tol=tol)
                if ok:
                    break
                step /= 2
            else:
                raise RuntimeError("Lanczos propagator failed to converge")
            psi = res
            t_now += step
        out[idx] = psi
    return out


def expectation(psi, op, action=None):
    """<psi|O|psi>/<psi|psi> through the operator's connected elements."""
    psi = np.asarray(psi, dtype=np.complex128)
    action = action or EnumeratedAction(op)
    return complex(np.vdot(psi, action.apply(psi)) / np.vdot(psi, psi))


# ---------------------------------------------------------------------------
# Thermal and diagonal ensembles


def thermal_mean_energy(spectrum, beta):
    logw = -beta * (spectrum.evals - spectrum.evals.min())
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return float(w @ spectrum.evals)


def effective_beta(spectrum, e0, beta_range=(0.0, 200.0), tol_scale=1e-8):
    """Solve <H>_beta = e0 by bisection on the monotone thermal energy.

    The attainable range is (E_min, <H>_{beta_min}); e0 at or below the
    energy reachable at beta_max returns beta_max with a warning.
    """
    beta_lo, beta_hi = beta_range
    norm = max(abs(spectrum.evals[0]), abs(spectrum.evals[-1]))
    tol = tol_scale * norm
    e_lo = thermal_mean_energy(spectrum, beta_lo)
    if e0 > e_lo + tol:
        raise ValueError(f"target energy {e0} above the beta={beta_lo} mean {e_lo}")
    if e0 <= spectrum.evals[0]:
        raise ValueError(f"target energy {e0} at or below the ground energy")
    if abs(e_lo - e0) <= tol:
        return beta_lo
    if e0 <= thermal_mean_energy(spectrum, beta_hi):
        warnings.warn("effective beta capped at the upper bracket", RuntimeWarning)
        return beta_hi
    for _ in range(200):
        mid = 0.5 * (beta_lo + beta_hi)
        e_mid = thermal_mean_energy(spectrum, mid)
        if abs(e_mid - e0) <= tol:
            return mid
        if e_mid > e0:
            beta_lo = mid
        else:
            beta_hi = mid
    return 0.5 * (beta_lo + beta_hi)


def thermal_expectation(spectrum, op, beta, action=None):
    """Tr[e^{-beta H} O] / Tr[e^{-beta H}] in the eigenbasis."""
    action = action or EnumeratedAction(op)
    logw = -beta * (spectrum.evals - spectrum.evals.min())
    w = np.exp(logw - logw.max())
    w /= w.sum()
    ov = action.apply(spectrum.evecs)
    diag = np.einsum("ij,ij->j", spectrum.evecs.conj(), ov)
    return float((w @ diag).real)


def diagonal_ensemble_expectation(spectrum, psi0, op, action=None,
                                  rtol=DEGENERACY_RTOL):
    """Infinite-time average of <O>(t): oscillating cross terms between
    non-degenerate energies drop out, degenerate blocks survive."""
    action = action or EnumeratedAction(op)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    amp = spectrum.evecs.conj().T @ psi0
    norm2 = np.vdot(psi0, psi0).real
    total = 0.0
    for members in group_close_values(spectrum.evals, rtol):
        block = spectrum.evecs[:, members] @ amp[members]
        total += np.vdot(block, action.apply(block)).real
    return total / norm2


# ---------------------------------------------------------------------------
# Coarse-grained basis


@dataclass
class CgBasis:
    """Spectrally localized decomposition of psi0: w_i = W_i psi0 with
    weights (H - mu_i)^{-2} normalized across the mu grid.  Everything is
    held in the eigenbasis of H."""

    mu: np.ndarray
    w_eig: np.ndarray        # (M, dim) basis states, eigenbasis components
    lambdas: np.ndarray      # Rayleigh quotients
    psi0_eig: np.ndarray
    evals: np.ndarray

    def cg_state(self, t):
        phases = np.exp(-1j * np.outer(np.atleast_1d(t), self.lambdas))
        return phases @ self.w_eig

    def exact_state(self, t):
        return np.exp(-1j * np.outer(np.atleast_1d(t), self.evals)) * self.psi0_eig

    def delta(self, t):
        """|| exact(t) - cg(t) || for scalar or vector t."""
        d = np.linalg.norm(self.exact_state(t) - self.cg_state(t), axis=-1)
        return float(d[0]) if np.isscalar(t) else d


def cg_basis(spectrum, psi0, n_states, mu_grid=None):
    evals = spectrum.evals
    width = evals[-1] - evals[0]
    mu = (np.linspace(evals[0], evals[-1], n_states) if mu_grid is None
          else np.asarray(mu_grid, dtype=float).copy())
    if not (mu[0] <= evals[0] and mu[-1] >= evals[-1]):
        raise ValueError("mu grid must cover the spectrum")
    # a mu exactly on an eigenvalue makes the weight singular: nudge it
    shift = 1e-12 * max(width, 1.0)
    for i in range(len(mu)):
        if np.min(np.abs(evals - mu[i])) < shift:
            if i == 0:
                mu[i] -= shift
            else:
                mu[i] += shift
    psi0_eig = spectrum.evecs.conj().T @ np.asarray(psi0, dtype=np.complex128)
    inv2 = 1.0 / (evals[None, :] - mu[:, None]) ** 2       # (M, dim)
    weights = inv2 / inv2.sum(axis=0)
    w_eig = weights * psi0_eig[None, :]
    norms = (np.abs(w_eig) ** 2).sum(axis=1)
    lambdas = np.where(norms > 0,
                       (np.abs(w_eig) ** 2 @ evals) / np.maximum(norms, 1e-300),
                       mu)
    return CgBasis(mu=mu, w_eig=w_eig, lambdas=lambdas, psi0_eig=psi0_eig,
                   evals=evals)
