"""The time-local residual loss, its Simpson-integrated global version, and
the analytic gradient, in full-summation and Monte Carlo estimator modes.

The time-local loss is the variance of L_loc(sigma,t) = O_t(sigma,t)
+ i E_loc(sigma,t) under the Born distribution: zero exactly when the state
solves the Schrodinger equation (up to time-dependent norm and phase, to
which the variance is blind).

The gradient uses the holomorphic (Wirtinger) derivative of the variance,

    dL/dtheta_k = < |D|^2 (O_k - <O_k>) > + < conj(D) * D_k >,

with D = L_loc - <L_loc>, O_k the parameter log-derivatives and D_k =
dO_k/dt + i[(H O_k)_loc - E_loc O_k].  Real components follow as
dL/dRe = 2 Re(.), dL/dIm = -2 Im(.).

In full-summation mode all expectations run over the enumerated Hilbert
space.  Because the basis states are time independent, every per-parameter
quantity factorizes into (time-dependent scalar) x (time-independent table),
so the quadrature loop accumulates only O(2^N (M+1)) scalars per point and
the parameter-space contractions happen once per gradient evaluation.
"""

from dataclasses import dataclass

import numpy as np

from .ansatz import rbm_hidden_activations
from .hamiltonian import EnumeratedAction
from .lattice import ENUMERATION_CAP, bits_to_spin_matrix, enumerate_configs
from .numerics import simpson_weights
from .sampler import sample_born

EXACT = "exact"
MC = "mc"


@dataclass(frozen=True)
class QuadratureGrid:
    """Equally spaced Simpson 1/3 grid on [t_start, t_end], odd point count."""

    t_start: float
    t_end: float
    n_points: int
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def make(cls, t_start, t_end, n_points):
        w = simpson_weights(n_points, t_start, t_end)
        return cls(t_start=float(t_start), t_end=float(t_end),
                   n_points=int(n_points),
                   points=np.linspace(t_start, t_end, n_points), weights=w)

    @property
    def span(self):
        return self.t_end - self.t_start


@dataclass
class LossReport:
    grid: QuadratureGrid
    per_point: np.ndarray          # L(t_j)
    integrated: float              # (1/T) sum_j w_j L(t_j)
    n_sites: int
    gradient: np.ndarray = None    # real components, pack_real order
    discarded: int = 0

    @property
    def per_site(self):
        return self.integrated / self.n_sites

    @property
    def grad_norm(self):
        return 0.0 if self.gradient is None else float(np.linalg.norm(self.gradient))


# ---------------------------------------------------------------------------
# Generic estimators (any state exposing log_amplitude_batch /
# log_time_derivative_batch); these are the reference implementations and
# the entry points for gauge and refinement cross-checks.


class ExactContext:
    """Enumerated configurations plus the cached Hamiltonian action."""

    def __init__(self, ham, n_sites, cap=ENUMERATION_CAP):
        self.ham = ham
        self.n_sites = n_sites
        self.bits = enumerate_configs(n_sites, cap)
        self.spins = bits_to_spin_matrix(self.bits, n_sites)
        self.action = EnumeratedAction(ham, n_sites)


def _born_probs(log_psi):
    logw = 2.0 * log_psi.real
    m = logw.max()
    if not np.isfinite(m):
        raise ValueError("state amplitude vanishes identically")
    p = np.exp(logw - m)
    return p / p.sum(), m


def exact_local_loss_values(state, ctx, t):
    """(L_loc over all configs, Born probabilities).  Dead configurations
    (zero amplitude) carry probability zero and a zeroed estimator."""
    log_psi = state.log_amplitude_batch(ctx.spins, t)
    o_t = state.log_time_derivative_batch(ctx.spins, t)
    p, _ = _born_probs(log_psi)
    alive = np.isfinite(log_psi.real)
    m = log_psi.real[alive].max()
    psi = np.where(alive, np.exp(log_psi - m), 0.0)
    hpsi = ctx.action.apply(psi)
    with np.errstate(invalid="ignore", divide="ignore"):
        e_loc = np.where(alive, hpsi / psi, 0.0)
    lloc = np.where(alive, o_t, 0.0) + 1j * e_loc
    return lloc, p


def local_loss_estimator(state, ham, bits, t):
    """L_loc = O_t + i E_loc at explicit configurations (spec-level op)."""
    bits = np.asarray(bits, dtype=np.uint64)
    spins = bits_to_spin_matrix(bits, state.n_sites)
    log_psi = state.log_amplitude_batch(spins, t)
    if np.any(~np.isfinite(log_psi.real)):
        raise ValueError("zero amplitude at a requested configuration")
    o_t = state.log_time_derivative_batch(spins, t)
    e_loc = np.zeros(len(bits), dtype=np.complex128)
    for mask, amp in ham.group_amplitudes(spins):
        flipped = bits_to_spin_matrix(bits ^ np.uint64(mask), state.n_sites)
        log_ratio = state.log_amplitude_batch(flipped, t) - log_psi
        e_loc += amp * np.exp(log_ratio)
    return o_t + 1j * e_loc


def time_local_loss(state, ham, t, mode=EXACT, ctx=None, chain_cfg=None,
                    point_index=0, seed_offset=0):
    """Variance of L_loc at one time; nonnegative by construction."""
    if mode == EXACT:
        ctx = ctx or ExactContext(ham, state.n_sites)
        lloc, p = exact_local_loss_values(state, ctx, t)
        mean = p @ lloc
        return float(p @ np.abs(lloc - mean) ** 2)
    evals = _mc_point_estimates(state, ham, t, chain_cfg, point_index, seed_offset)
    return evals["loss"]


def expectation_value(state, op, t, mode=EXACT, op_action=None, chain_cfg=None,
                      point_index=0, seed_offset=0):
    """<Psi|O|Psi>/<Psi|Psi> at time t (complex; real part is the physical
    value for Hermitian O).  op_action: optional cached EnumeratedAction
    for exact mode."""
    if mode == EXACT:
        action = op_action or EnumeratedAction(op, state.n_sites)
        spins = bits_to_spin_matrix(enumerate_configs(state.n_sites), state.n_sites)
        log_psi = state.log_amplitude_batch(spins, t)
        m = log_psi.real[np.isfinite(log_psi.real)].max()
        psi = np.exp(log_psi - m)
        psi[~np.isfinite(log_psi.real)] = 0.0
        num = np.vdot(psi, action.apply(psi))
        den = np.vdot(psi, psi)
        return complex(num / den)
    bits = sample_born(state, t, _reseeded(chain_cfg, seed_offset), point_index)
    spins = bits_to_spin_matrix(bits, state.n_sites)
    log_psi = state.log_amplitude_batch(spins, t)
    alive = np.isfinite(log_psi.real)
    o_loc = np.zeros(len(bits), dtype=np.complex128)
    for mask, amp in op.group_amplitudes(spins):
        flipped = bits_to_spin_matrix(bits ^ np.uint64(mask), state.n_sites)
        ratio = np.exp(state.log_amplitude_batch(flipped, t) - log_psi)
        o_loc += amp * ratio
    return complex(o_loc[alive].mean())


def dense_state_vector(state, t, cap=ENUMERATION_CAP):
    """Normalized state vector over the enumerated basis (oracle support)."""
    spins = bits_to_spin_matrix(enumerate_configs(state.n_sites, cap), state.n_sites)
    log_psi = state.log_amplitude_batch(spins, t)
    m = log_psi.real[np.isfinite(log_psi.real)].max()
    psi = np.exp(log_psi - m)
    psi[~np.isfinite(log_psi.real)] = 0.0
    return psi / np.linalg.norm(psi)


# ---------------------------------------------------------------------------
# Global loss and gradient, full-summation fast path


class ExactWindowEvaluator:
    """Per-iteration tables for one GalerkinState over the enumeration.

    All value tables are held relative to a single window reference scale
    s_ref = max over columns and configs of Re log phi_i, so that
    phi_rel[:, i] = phi_i * e^{-s_ref} never overflows; Psi and 1/Psi only
    appear through psi_rel = Psi * e^{-s_ref} and the scale cancels in every
    estimator.

    phi0_column may be supplied by the optimization driver: the frozen
    initial state does not change within a window, so its (possibly nested)
    column is computed once per window rather than once per iteration.
    """

    def __init__(self, state, ctx, phi0_column=None):
        self.state = state
        self.ctx = ctx
        spins = ctx.spins
        n = spins.shape[0]
        m = state.n_basis
        cols = np.empty((n, m + 1), dtype=np.complex128)
        cols[:, 0] = (state.phi0.log_amplitude_batch(spins)
                      if phi0_column is None else phi0_column)
        from .ansatz import rbm_log_amplitude

        for j, rbm in enumerate(state.basis):
            cols[:, j + 1] = rbm_log_amplitude(rbm, spins)
        self.cols = cols
        finite = np.isfinite(cols.real)
        self.s_ref = cols.real[finite].max()
        with np.errstate(invalid="ignore"):
            phi_rel = np.exp(cols - self.s_ref)
        phi_rel[~finite] = 0.0
        self.phi_rel = phi_rel                    # phi_i(sigma) e^{-s_ref}
        self.hphi_rel = ctx.action.apply(phi_rel)  # (H phi_i)(sigma) e^{-s_ref}

    def point_quantities(self, t):
        """Per-config scalars at one quadrature point."""
        b = self.batch_quantities(np.array([t]))
        return {k: (v[0] if isinstance(v, np.ndarray) else v) for k, v in b.items()}

    def batch_quantities(self, ts):
        """Per-config scalars for a batch of quadrature points; leading axis
        is time."""
        c, c_dot = self.state.coeffs.coefficients_batch(ts)
        psi_rel = c @ self.phi_rel.T              # (T, n): Psi e^{-s_ref}
        alive = psi_rel != 0
        if not np.all(np.any(alive, axis=1)):
            raise ValueError("state amplitude vanishes identically (or lies "
                             "far below the basis amplitude scale)")
        with np.errstate(invalid="ignore", divide="ignore"):
            inv_psi = np.where(alive, 1.0 / psi_rel, 0.0)
        u = self.phi_rel[None, :, :] * inv_psi[:, :, None]    # phi_i / Psi
        q = self.hphi_rel[None, :, :] * inv_psi[:, :, None]   # (H phi_i) / Psi
        o_t = np.einsum("tnm,tm->tn", u, c_dot)
        e_loc = np.einsum("tnm,tm->tn", q, c)
        with np.errstate(divide="ignore"):
            logw = 2.0 * np.log(np.abs(psi_rel))
        mw = np.where(alive, logw, -np.inf).max(axis=1)
        p = np.where(alive, np.exp(logw - mw[:, None]), 0.0)
        p /= p.sum(axis=1)[:, None]
        lloc = o_t + 1j * e_loc
        mean = np.einsum("tn,tn->t", p, lloc)
        delta = lloc - mean[:, None]
        var = np.einsum("tn,tn->t", p, np.abs(delta) ** 2).real
        return {
            "c": c, "c_dot": c_dot, "u": u, "q": q, "o_t": o_t, "e_loc": e_loc,
            "p": p, "delta": delta, "var": var,
            "y_scatter": p * np.conj(delta) * inv_psi,  # p conj(D)/Psi x e^{s_ref}
        }


_CHUNK = 16


def global_loss(state, ham, grid, mode=EXACT, ctx=None, chain_cfg=None,
                seed_offset=0, phi0_column=None):
    """Simpson-integrated loss over the window; per-point values retained."""
    per_point = np.empty(grid.n_points)
    discarded = 0
    if mode == EXACT:
        ctx = ctx or ExactContext(ham, state.n_sites)
        ev = ExactWindowEvaluator(state, ctx, phi0_column)
        for lo in range(0, grid.n_points, _CHUNK):
            ts = grid.points[lo:lo + _CHUNK]
            per_point[lo:lo + _CHUNK] = ev.batch_quantities(ts)["var"]
    else:
        for j, t in enumerate(grid.points):
            est = _mc_point_estimates(state, ham, t, chain_cfg, j, seed_offset)
            per_point[j] = est["loss"]
            discarded += est["discarded"]
    integrated = float(grid.weights @ per_point / grid.span)
    return LossReport(grid=grid, per_point=per_point, integrated=integrated,
                      n_sites=state.n_sites, discarded=discarded)


def global_loss_gradient(state, ham, grid, mode=EXACT, ctx=None,
                         chain_cfg=None, seed_offset=0, phi0_column=None):
    """LossReport including the real-component gradient (pack_real order)."""
    if mode == EXACT:
        return _exact_gradient(state, ham, grid, ctx, phi0_column)
    return _mc_gradient(state, ham, grid, chain_cfg, seed_offset)


def _exact_gradient(state, ham, grid, ctx, phi0_column):
    ctx = ctx or ExactContext(ham, state.n_sites)
    ev = ExactWindowEvaluator(state, ctx, phi0_column)
    n = ctx.spins.shape[0]
    m = state.n_basis
    n_modes = state.coeffs.n_modes
    omega = state.coeffs.omega
    gamma = state.coeffs.gamma
    span = grid.span

    per_point = np.empty(grid.n_points)
    wa = np.zeros((m, n), dtype=np.complex128)       # d_p contraction weights
    wh = np.zeros((m, n), dtype=np.complex128)       # (H phi_j d_p) weights
    g_gamma = np.zeros((m, n_modes), dtype=np.complex128)
    g_omega = np.zeros(n_modes, dtype=np.complex128)

    for lo in range(0, grid.n_points, _CHUNK):
        ts = grid.points[lo:lo + _CHUNK]
        pq = ev.batch_quantities(ts)
        per_point[lo:lo + _CHUNK] = pq["var"]
        if m == 0:
            continue
        wt = grid.weights[lo:lo + _CHUNK] / span
        p, delta, var = pq["p"], pq["delta"], pq["var"]
        u, q, o_t, e_loc = pq["u"], pq["q"], pq["o_t"], pq["e_loc"]
        c, c_dot = pq["c"], pq["c_dot"]
        pd = p * np.conj(delta)
        p_excess = p * (np.abs(delta) ** 2 - var[:, None])

        # gamma / omega blocks via the (T, M+1) reduction vectors
        a_vec = (np.einsum("tn,tnm->tm", p_excess - pd * o_t, u)
                 + 1j * np.einsum("tn,tnm->tm", pd, q)
                 - 1j * np.einsum("tn,tnm->tm", pd * e_loc, u))
        b_vec = np.einsum("tn,tnm->tm", pd, u)
        phase = np.exp(1j * np.outer(ts, omega))          # (T, N_b)
        e_m1 = phase - 1.0
        g_gamma += (np.einsum("t,ti,tk->ik", wt, a_vec[:, 1:], e_m1)
                    + np.einsum("t,ti,tk->ik", wt, b_vec[:, 1:],
                                1j * omega * phase))
        if state.train_omega:
            ga = a_vec[:, 1:] @ gamma                      # (T, N_b)
            gb = b_vec[:, 1:] @ gamma
            g_omega += np.einsum("t,tk->k", wt,
                                 ga * (1j * ts[:, None] * phase)
                                 + gb * (1j * phase
                                         * (1.0 + 1j * omega * ts[:, None])))

        # RBM blocks: accumulate per-config weights only
        base = (p_excess[:, None, :] * c[:, 1:, None]
                + pd[:, None, :] * (c_dot[:, 1:, None]
                                    - c[:, 1:, None]
                                    * (o_t + 1j * e_loc)[:, None, :]))
        wa += np.einsum("t,tjn,tnj->jn", wt, base, u[:, :, 1:])
        y = ctx.action.apply_transpose(pq["y_scatter"].T)  # (n, T)
        wh += 1j * np.einsum("t,tj,nt->jn", wt, c[:, 1:], y)

    gradient = None
    if m:
        g_rbm = []
        for jb, rbm in enumerate(state.basis):
            vec = wa[jb] + wh[jb] * ev.phi_rel[:, jb + 1]
            tanh_t = rbm_hidden_activations(rbm, ctx.spins)
            spins_f = ctx.spins.astype(np.float64)
            g_a = vec @ spins_f
            g_b = vec @ tanh_t
            g_w = tanh_t.T @ (vec[:, None] * spins_f)
            g_rbm.append(np.concatenate([g_a, g_b, g_w.ravel()]))
        g_complex = np.concatenate(g_rbm + [g_gamma.ravel()])
        gradient = state.real_gradient_from_holomorphic(
            g_complex, g_omega if state.train_omega else None)

    integrated = float(grid.weights @ per_point / span)
    return LossReport(grid=grid, per_point=per_point, integrated=integrated,
                      n_sites=state.n_sites, gradient=gradient)


# ---------------------------------------------------------------------------
# Monte Carlo estimator mode


def _reseeded(chain_cfg, seed_offset):
    if chain_cfg is None:
        raise ValueError("Monte Carlo mode needs a ChainConfig")
    if seed_offset == 0:
        return chain_cfg
    from dataclasses import replace

    mix = np.random.SeedSequence(entropy=(chain_cfg.seed, int(seed_offset)))
    return replace(chain_cfg, seed=int(mix.generate_state(1)[0]))


def _mc_point_estimates(state, ham, t, chain_cfg, point_index, seed_offset,
                        with_tables=False):
    """Sample-based per-point quantities; zero-amplitude samples are dropped
    and counted (they cannot occur under exact Born sampling, only through
    stale chains)."""
    cfg = _reseeded(chain_cfg, seed_offset)
    bits = sample_born(state, t, cfg, point_index)
    n_s = len(bits)
    spins = bits_to_spin_matrix(bits, state.n_sites)
    amps = ham.group_amplitudes(spins)
    # stacked rows: samples then each flip block
    stacked = [spins] + [bits_to_spin_matrix(bits ^ np.uint64(mk), state.n_sites)
                         for mk, _ in amps]
    all_spins = np.concatenate(stacked, axis=0)
    cols = state.basis_log_columns(all_spins)
    c, c_dot = state.coeffs.coefficients(t)
    from .ansatz import basis_fractions, combine_log_columns

    log_psi_all = combine_log_columns(cols, c)
    log_psi = log_psi_all[:n_s]
    alive = np.isfinite(log_psi.real)
    n_alive = int(alive.sum())
    if n_alive == 0:
        raise ValueError("all Monte Carlo samples discarded (zero amplitude)")
    u_all = basis_fractions(cols, np.tile(log_psi, 1 + len(amps)))
    u = u_all[:n_s]
    q = np.zeros_like(u)
    for blk, (mask, amp) in enumerate(amps):
        block = u_all[(blk + 1) * n_s:(blk + 2) * n_s]
        q += amp[:, None] * block
    o_t = u @ c_dot
    e_loc = q @ c
    lloc = np.where(alive, o_t + 1j * e_loc, 0.0)
    mean = lloc[alive].mean()
    delta = np.where(alive, lloc - mean, 0.0)
    loss = float(np.mean(np.abs(delta[alive]) ** 2))
    out = {"loss": loss, "discarded": n_s - n_alive}
    if with_tables:
        out.update(bits=bits, spins=spins, all_spins=all_spins, cols=cols,
                   amps=amps, u=u, q=q, o_t=o_t, e_loc=e_loc, delta=delta,
                   alive=alive, c=c, c_dot=c_dot, log_psi=log_psi,
                   log_psi_all=log_psi_all, n_s=n_s)
    return out


def _mc_gradient(state, ham, grid, chain_cfg, seed_offset):
    m = state.n_basis
    n_modes = state.coeffs.n_modes
    omega = state.coeffs.omega
    gamma = state.coeffs.gamma
    span = grid.span
    per_point = np.empty(grid.n_points)
    discarded = 0
    g_gamma = np.zeros((m, n_modes), dtype=np.complex128)
    g_omega = np.zeros(n_modes, dtype=np.complex128)
    g_rbm = [np.zeros(r.n_params, dtype=np.complex128) for r in state.basis]

    for jpt, t in enumerate(grid.points):
        est = _mc_point_estimates(state, ham, t, chain_cfg, jpt, seed_offset,
                                  with_tables=m > 0)
        per_point[jpt] = est["loss"]
        discarded += est["discarded"]
        if m == 0:
            continue
        wt = grid.weights[jpt] / span
        n_s = est["n_s"]
        alive = est["alive"]
        n_alive = int(alive.sum())
        p = np.where(alive, 1.0 / n_alive, 0.0)
        delta, var = est["delta"], est["loss"]
        u, q, o_t, e_loc = est["u"], est["q"], est["o_t"], est["e_loc"]
        c, c_dot = est["c"], est["c_dot"]
        pd = p * np.conj(delta)
        p_excess = p * (np.abs(delta) ** 2 - var)

        a_vec = (p_excess - pd * o_t) @ u + 1j * (pd @ q) - 1j * ((pd * e_loc) @ u)
        b_vec = pd @ u
        phase = np.exp(1j * omega * t)
        e_m1 = phase - 1.0
        g_gamma += wt * (np.outer(a_vec[1:], e_m1)
                         + np.outer(b_vec[1:], 1j * omega * phase))
        if state.train_omega:
            ga = a_vec[1:] @ gamma
            gb = b_vec[1:] @ gamma
            g_omega += wt * (ga * (1j * t * phase)
                             + gb * (1j * phase * (1.0 + 1j * omega * t)))

        # RBM blocks: weights on sample rows plus weights on flip rows
        base = p_excess[None, :] * c[1:, None] + pd[None, :] * (
            c_dot[1:, None] - c[1:, None] * (o_t + 1j * e_loc)[None, :])
        w_sample = base * u[:, 1:].T                       # (m, n_s)
        with np.errstate(invalid="ignore", over="ignore"):
            inv_psi = np.where(alive, np.exp(-est["log_psi"]), 0.0)
        y = pd * inv_psi                                    # p conj(delta) / Psi
        cols = est["cols"]
        all_spins = est["all_spins"]
        for jb, rbm in enumerate(state.basis):
            w_rows = np.zeros(all_spins.shape[0], dtype=np.complex128)
            w_rows[:n_s] = wt * w_sample[jb]
            for blk, (mask, amp) in enumerate(est["amps"]):
                sl = slice((blk + 1) * n_s, (blk + 2) * n_s)
                with np.errstate(invalid="ignore", over="ignore"):
                    phi_flip = np.exp(cols[sl, jb + 1])
                phi_flip[~np.isfinite(cols[sl, jb + 1].real)] = 0.0
                w_rows[sl] = (wt * 1j * c[jb + 1]) * y * amp * phi_flip
            tanh_t = rbm_hidden_activations(rbm, all_spins)
            spins_f = all_spins.astype(np.float64)
            g_a = w_rows @ spins_f
            g_b = w_rows @ tanh_t
            g_w = tanh_t.T @ (w_rows[:, None] * spins_f)
            g_rbm[jb] += np.concatenate([g_a, g_b, g_w.ravel()])

    gradient = None
    if m:
        g_complex = np.concatenate(g_rbm + [g_gamma.ravel()])
        gradient = state.real_gradient_from_holomorphic(
            g_complex, g_omega if state.train_omega else None)
    integrated = float(grid.weights @ per_point / span)
    return LossReport(grid=grid, per_point=per_point, integrated=integrated,
                      n_sites=state.n_sites, gradient=gradient,
                      discarded=discarded)
