"""Adam optimization of the global loss and the window-concatenation driver.

Each window optimizes the integrated loss on [0, dT] with the initial
condition built into the ansatz; the next window freezes the result at its
final local time and uses it as phi_0.  Best-loss parameters are retained
rather than the last iterate (under Monte Carlo noise the final step is not
the most reliable one).
"""

import time
from dataclasses import dataclass

import numpy as np

from .ansatz import FrozenGalerkinState, GalerkinState, initial_galerkin_state
from .loss import EXACT, ExactContext, QuadratureGrid, global_loss, global_loss_gradient


class OptimizationDiverged(RuntimeError):
    def __init__(self, message, window_index=None):
        super().__init__(message)
        self.window_index = window_index


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    config: AdamConfig

    @classmethod
    def init(cls, n_params, config=None):
        return cls(step=0, m=np.zeros(n_params), v=np.zeros(n_params),
                   config=config or AdamConfig())


def adam_step(adam, params, gradient):
    """One bias-corrected Adam update over real components (in place on the
    AdamState, functional on the parameter vector)."""
    if gradient.shape != params.shape or adam.m.shape != params.shape:
        raise ValueError("parameter/gradient/moment dimension mismatch")
    if np.any(np.isnan(gradient)):
        raise OptimizationDiverged("NaN gradient encountered")
    cfg = adam.config
    adam.step += 1
    adam.m = cfg.beta1 * adam.m + (1 - cfg.beta1) * gradient
    adam.v = cfg.beta2 * adam.v + (1 - cfg.beta2) * gradient ** 2
    m_hat = adam.m / (1 - cfg.beta1 ** adam.step)
    v_hat = adam.v / (1 - cfg.beta2 ** adam.step)
    return params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass
class WindowSchedule:
    """windows * delta_t = total simulated time."""

    delta_t: float
    n_windows: int
    n_points: int = 129
    iterations: int = 1000
    warm_start: bool = True

    @property
    def total_time(self):
        return self.delta_t * self.n_windows

    def grid(self):
        return QuadratureGrid.make(0.0, self.delta_t, self.n_points)


@dataclass
class WindowResult:
    index: int
    state: GalerkinState
    best_loss: float
    history: list                 # dicts: iter, loss, loss_per_site, ...
    final_report: object          # LossReport of the retained state


def optimize_window(state, ham, grid, budget, mode=EXACT, adam_cfg=None,
                    chain_cfg=None, ctx=None, log_every=0, window_index=None,
                    progress=None):
    """Minimize the integrated loss; returns a WindowResult with the
    best-loss iterate and the full per-iteration history."""
    if mode == EXACT and ctx is None:
        ctx = ExactContext(ham, state.n_sites)
    phi0_column = (state.phi0.log_amplitude_batch(ctx.spins)
                   if mode == EXACT else None)

    def evaluate(st, it, need_grad):
        fn = global_loss_gradient if need_grad else global_loss
        return fn(st, ham, grid, mode=mode, ctx=ctx, chain_cfg=chain_cfg,
                  seed_offset=it, phi0_column=phi0_column)

    trainable = state.n_real_params > 0
    params = state.pack_real()
    adam = AdamState.init(params.size, adam_cfg)
    best_state, best_loss, best_report = state, np.inf, None
    initial_loss = None
    history = []

    for it in range(max(1, budget)):
        t0 = time.perf_counter()
        report = evaluate(state, it, trainable)
        wall_ms = (time.perf_counter() - t0) * 1e3
        loss = report.integrated
        if initial_loss is None:
            initial_loss = loss
        if np.isnan(loss) or (initial_loss > 0 and loss > 1e6 * initial_loss):
            raise OptimizationDiverged(
                f"loss diverged at iteration {it}: {loss:.3e} "
                f"(initial {initial_loss:.3e})", window_index=window_index)
        if loss < best_loss:
            best_state, best_loss, best_report = state, loss, report
        history.append({
            "iter": it,
            "loss": loss,
            "loss_per_site": report.per_site,
            "grad_norm": report.grad_norm,
            "discarded_samples": report.discarded,
            "wall_ms": wall_ms,
        })
        if progress and log_every and it % log_every == 0:
            progress(window_index, it, loss)
        if trainable and it + 1 < max(1, budget):
            params = adam_step(adam, params, report.gradient)
            state = state.unpack_real(params)

    return WindowResult(index=window_index or 0, state=best_state,
                        best_loss=best_loss, history=history,
                        final_report=best_report)


def run_concatenated(lat, ham, schedule, n_basis, n_modes, omega0, alpha=1,
                     init_sigma=0.01, train_omega=True, mode=EXACT,
                     adam_cfg=None, chain_cfg=None, seed=0, phi0=None,
                     progress=None, log_every=0):
    """Optimize the windows sequentially; window i+1 takes as initial state
    the previous optimized window frozen at local time delta_t."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 777)))
    grid = schedule.grid()
    ctx = ExactContext(ham, lat.n_sites) if mode == EXACT else None
    results = []
    prev = None
    state = None
    for w in range(schedule.n_windows):
        if w == 0:
            state = initial_galerkin_state(
                lat, n_basis, n_modes, omega0, alpha=alpha, sigma=init_sigma,
                rng=rng, train_omega=train_omega, phi0=phi0)
        else:
            frozen = FrozenGalerkinState(inner=prev.state, t_star=schedule.delta_t)
            if schedule.warm_start:
                state = GalerkinState(phi0=frozen, basis=prev.state.basis,
                                      coeffs=prev.state.coeffs,
                                      train_omega=train_omega)
            else:
                state = initial_galerkin_state(
                    lat, n_basis, n_modes, omega0, alpha=alpha,
                    sigma=init_sigma, rng=rng, train_omega=train_omega,
                    phi0=frozen)
        try:
            result = optimize_window(
                state, ham, grid, schedule.iterations, mode=mode,
                adam_cfg=adam_cfg, chain_cfg=chain_cfg, ctx=ctx,
                window_index=w, progress=progress, log_every=log_every)
        except OptimizationDiverged as exc:
            exc.window_index = w
            raise
        results.append(result)
        prev = result
    return ConcatenatedTrajectory(results, schedule)


class ConcatenatedTrajectory:
    """Piecewise trajectory assembled from per-window optimized states.

    Global times map to (window, local time); queries past the trained span
    extrapolate the last window's coefficients beyond its local interval.
    """

    def __init__(self, windows, schedule):
        self.windows = list(windows)
        self.schedule = schedule

    def locate(self, t):
        dt = self.schedule.delta_t
        w = min(int(np.floor(t / dt + 1e-12)), len(self.windows) - 1)
        return w, t - w * dt

    def state_at(self, t):
        w, local = self.locate(t)
        return self.windows[w].state, local, w

    def log_amplitude(self, spins, t):
        state, local, _ = self.state_at(t)
        return state.log_amplitude_batch(spins, local)
