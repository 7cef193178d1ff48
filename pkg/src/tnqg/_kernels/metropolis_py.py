"""Pure-Python Metropolis sweep kernel (fallback when the compiled extension
is unavailable).  Consumes pre-drawn proposal sites and uniforms so that it
is step-for-step interchangeable with the compiled kernel."""

import numpy as np


def _padded_views(pack):
    k = pack.n_terms
    h_max = int(pack.n_hidden.max()) if k else 0
    b = np.zeros((k, h_max), dtype=np.complex128)
    w = np.zeros((k, h_max, pack.n_sites), dtype=np.complex128)
    mask = np.zeros((k, h_max), dtype=bool)
    for t in range(k):
        lo, hi = pack.offsets[t], pack.offsets[t + 1]
        nh = hi - lo
        if nh:
            b[t, :nh] = pack.b_flat[lo:hi]
            w[t, :nh, :] = pack.w_flat[lo * pack.n_sites:hi * pack.n_sites]\
                .reshape(nh, pack.n_sites)
            mask[t, :nh] = True
    return b, w, mask


def _masked_log2cosh_sum(theta, mask):
    s = np.where(theta.real >= 0, theta, -theta)
    vals = s + np.log1p(np.exp(-2.0 * s))
    return np.where(mask, vals, 0.0).sum(axis=1)


def run_chain(pack, spins0, n_burn_sweeps, n_record, record_every, prop_sites,
              uniforms):
    """Single-flip Metropolis walk; returns (samples (n_record, N) int8,
    n_accepted).  Proposal sites and acceptance uniforms are supplied by the
    caller, one per elementary flip."""
    n = pack.n_sites
    sigma = np.array(spins0, dtype=np.float64)
    b, w, mask = _padded_views(pack)

    theta = b + w @ sigma
    adot = pack.a @ sigma
    logphi = adot + _masked_log2cosh_sum(theta, mask)

    group_onehot = np.zeros((pack.n_groups, pack.n_terms))
    group_onehot[pack.group_ids, np.arange(pack.n_terms)] = 1.0

    def log_density(logphi_vec):
        m = (logphi_vec.real + pack.log_w_abs).max()
        z = pack.weights * np.exp(logphi_vec - m)
        dens = (np.abs(group_onehot @ z) ** 2).sum()
        if dens == 0.0:
            return -np.inf
        return 2.0 * m + np.log(dens)

    logdens = log_density(logphi)
    samples = np.empty((n_record, n), dtype=np.int8)
    n_total_sweeps = n_burn_sweeps + n_record * record_every
    assert len(prop_sites) == n_total_sweeps * n and len(uniforms) == len(prop_sites)

    accepted = 0
    p = 0
    rec = 0
    for sweep in range(n_total_sweeps):
        for _ in range(n):
            s = prop_sites[p]
            u = uniforms[p]
            p += 1
            theta_new = theta[:, :] - 2.0 * sigma[s] * w[:, :, s]
            adot_new = adot - 2.0 * sigma[s] * pack.a[:, s]
            logphi_new = adot_new + _masked_log2cosh_sum(theta_new, mask)
            logdens_new = log_density(logphi_new)
            if np.log(u) < logdens_new - logdens:
                sigma[s] = -sigma[s]
                theta = theta_new
                adot = adot_new
                logphi = logphi_new
                logdens = logdens_new
                accepted += 1
        if sweep >= n_burn_sweeps and (sweep - n_burn_sweeps + 1) % record_every == 0:
            samples[rec] = sigma.astype(np.int8)
            rec += 1
    assert rec == n_record
    return samples, accepted
