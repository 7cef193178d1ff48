"""Flat, contiguous layout of a linear combination of RBMs for the sweep
kernels.

A state to sample from is described as groups of weighted RBM terms; the
sampling density at sigma is sum_g |sum_{k in g} w_k phi_k(sigma)|^2.  Born
sampling uses a single group; the mixture distribution over basis states
uses one group per basis state.  Constant-amplitude terms (the polarized
product state) are RBMs with zero hidden units and a = 0.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class FlatTermPack:
    n_sites: int
    weights: np.ndarray       # (K,) complex, all nonzero
    log_w_abs: np.ndarray     # (K,) float
    group_ids: np.ndarray     # (K,) int32
    n_groups: int
    a: np.ndarray             # (K, N) complex
    n_hidden: np.ndarray      # (K,) int32
    b_flat: np.ndarray        # concatenated hidden biases
    w_flat: np.ndarray        # concatenated weight rows (hidden-major per term)
    offsets: np.ndarray       # (K+1,) int64 into b_flat / hidden dimension

    @property
    def n_terms(self):
        return len(self.weights)


def build_pack(groups, n_sites):
    """groups: list over density groups, each a list of (weight, rbm|None)."""
    weights, gids, a_rows, hidden, b_parts, w_parts = [], [], [], [], [], []
    for gid, terms in enumerate(groups):
        for w, rbm in terms:
            w = complex(w)
            if w == 0:
                continue
            weights.append(w)
            gids.append(gid)
            if rbm is None:
                a_rows.append(np.zeros(n_sites, dtype=np.complex128))
                hidden.append(0)
            else:
                if rbm.n_sites != n_sites:
                    raise ValueError("RBM size mismatch in term pack")
                a_rows.append(rbm.a)
                hidden.append(rbm.n_hidden)
                b_parts.append(rbm.b)
                w_parts.append(rbm.W.ravel())
    if not weights:
        raise ValueError("state has no nonzero terms to sample from")
    k = len(weights)
    offsets = np.zeros(k + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(hidden)
    return FlatTermPack(
        n_sites=n_sites,
        weights=np.array(weights, dtype=np.complex128),
        log_w_abs=np.log(np.abs(np.array(weights))),
        group_ids=np.array(gids, dtype=np.int32),
        n_groups=len(groups),
        a=np.array(a_rows, dtype=np.complex128),
        n_hidden=np.array(hidden, dtype=np.int32),
        b_flat=(np.concatenate(b_parts) if b_parts
                else np.zeros(0, dtype=np.complex128)),
        w_flat=(np.concatenate(w_parts) if w_parts
                else np.zeros(0, dtype=np.complex128)),
        offsets=offsets,
    )


def pack_log_density(pack, spins):
    """Reference density evaluation for a batch of configurations:
    log sum_g |sum_{k in g} w_k phi_k|^2, stabilized.  Used for start-config
    screening and for testing the kernels."""
    spins = np.asarray(spins, dtype=np.float64)
    n = spins.shape[0]
    logphi = np.empty((n, pack.n_terms), dtype=np.complex128)
    for k in range(pack.n_terms):
        lo, hi = pack.offsets[k], pack.offsets[k + 1]
        theta = spins @ pack.w_flat[lo * pack.n_sites:hi * pack.n_sites]\
            .reshape(hi - lo, pack.n_sites).T + pack.b_flat[lo:hi]
        s = np.where(theta.real >= 0, theta, -theta)
        logphi[:, k] = spins @ pack.a[k] + (s + np.log1p(np.exp(-2 * s))).sum(axis=1)
    m = (logphi.real + pack.log_w_abs).max(axis=1)
    z = pack.weights * np.exp(logphi - m[:, None])
    dens = np.zeros(n)
    for g in range(pack.n_groups):
        zg = z[:, pack.group_ids == g].sum(axis=1)
        dens += np.abs(zg) ** 2
    with np.errstate(divide="ignore"):
        return 2.0 * m + np.log(dens)
