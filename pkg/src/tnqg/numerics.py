"""Shared numerical helpers: stable log-cosh and complex log-sum-exp."""

import numpy as np

LOG_ZERO = -np.inf


def log2cosh(z):
    """log(2 cosh z) for complex z, stable for |Re z| up to ~700.

    Uses 2 cosh z = e^s (1 + e^{-2s}) with s = z * sign(Re z), so the
    exponential never overflows.
    """
    z = np.asarray(z)
    s = np.where(z.real >= 0, z, -z)
    return s + np.log1p(np.exp(-2.0 * s))


def complex_logsumexp(logs, weights):
    """log(sum_k w_k exp(logs[..., k])) with complex logs and weights.

    Terms with w_k == 0 are skipped exactly (their log value may be +/-inf
    without contaminating the result).  A sum that cancels to exactly zero
    yields real part -inf rather than NaN.

    logs: (..., K) complex, weights: (K,) or (..., K) complex.
    """
    logs = np.asarray(logs, dtype=np.complex128)
    weights = np.asarray(weights, dtype=np.complex128)
    w = np.broadcast_to(weights, logs.shape)
    active = w != 0
    re = np.where(active, logs.real, -np.inf)
    m = np.max(re, axis=-1)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = np.where(active, w * np.exp(logs - m_safe[..., None]), 0.0)
    total = scaled.sum(axis=-1)
    with np.errstate(divide="ignore"):
        out = m_safe + np.log(total)
    out = np.where(np.isfinite(m), out, LOG_ZERO + 0.0j)
    return out


def simpson_weights(n_points, t_start, t_end):
    """Composite Simpson 1/3 weights h/3 * (1, 4, 2, ..., 4, 1).

    Requires an odd number of equally spaced points >= 3.
    """
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError(f"Simpson rule needs an odd point count >= 3, got {n_points}")
    if not t_end > t_start:
        raise ValueError("empty integration interval")
    h = (t_end - t_start) / (n_points - 1)
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def group_close_values(values, rtol):
    """Group sorted-ish real values whose gaps are below rtol * spread.

    Returns a list of index arrays; used for degenerate-frequency and
    degenerate-eigenvalue bookkeeping (same rule in both places so that
    diagonal-ensemble comparisons are consistent).
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values)
    spread = values.max() - values.min()
    tol = rtol * max(spread, 1e-300)
    groups = []
    current = [order[0]]
    for idx in order[1:]:
        if values[idx] - values[current[-1]] < tol:
            current.append(idx)
        else:
            groups.append(np.array(current))
            current = [idx]
    groups.append(np.array(current))
    return groups


def cumulative_simpson_integral(values, points):
    """Cumulative integral of sampled values on an equally spaced grid.

    Returns an array I with I[j] ~ int_{points[0]}^{points[j]} of the
    integrand; I[0] = 0.  Simpson-based (scipy), 4th order on even
    prefixes, one trapezoid correction on odd ones.
    """
    from scipy.integrate import cumulative_simpson

    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    out[0] = 0.0
    out[1:] = cumulative_simpson(values, x=np.asarray(points, dtype=float))
    return out
