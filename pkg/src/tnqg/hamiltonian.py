"""Pauli-sum operators with connected-element enumeration.

Operators are stored as weighted Pauli strings and additionally grouped by
"flip mask" (the set of X/Y sites of a string).  All strings sharing a mask
connect sigma to the single configuration sigma ^ mask, so local estimators
touch at most one configuration per mask.

Matrix-element convention, with s_i(sigma) = +/-1 the spin at site i:

    <sigma| P |sigma^mask> = w * prod_{z in Z} s_z(sigma) * prod_{y in Y} (-i s_y(sigma))
"""

from dataclasses import dataclass

import numpy as np

from .lattice import bits_to_spin_matrix

DENSE_CAP = 14

_PAULIS = ("X", "Y", "Z")


@dataclass(frozen=True)
class _FlipGroup:
    mask: int
    weights: np.ndarray      # effective weights, includes the (-i)^|Y| factor
    site_lists: tuple        # per term: sites whose spin values multiply the weight


class SparsePauliOperator:
    """Sum of Pauli strings sum_t w_t P_t on n_sites spins."""

    def __init__(self, n_sites, terms):
        self.n_sites = int(n_sites)
        merged = {}
        for weight, ops in terms:
            key = tuple(sorted((int(s), p) for s, p in ops))
            for site, p in key:
                if not 0 <= site < self.n_sites:
                    raise ValueError(f"site {site} outside [0, {self.n_sites})")
                if p not in _PAULIS:
                    raise ValueError(f"unknown Pauli {p!r}")
            if len({s for s, _ in key}) != len(key):
                raise ValueError(f"repeated site in Pauli string {key}")
            merged[key] = merged.get(key, 0.0) + complex(weight)
        self.terms = tuple((w, key) for key, w in merged.items() if w != 0)
        self.is_hermitian = all(w.imag == 0.0 for w, _ in self.terms)
        self._groups = self._build_groups()

    @property
    def n_terms(self):
        return len(self.terms)

    @property
    def two_norm_bound(self):
        """sum_t |w_t|: an upper bound on the operator 2-norm (each Pauli
        string has unit norm), exact for a single string."""
        return float(sum(abs(w) for w, _ in self.terms))

    def _build_groups(self):
        by_mask = {}
        for w, key in self.terms:
            mask = 0
            prod_sites = []
            n_y = 0
            for site, p in key:
                if p == "X":
                    mask |= 1 << site
                elif p == "Y":
                    mask |= 1 << site
                    prod_sites.append(site)
                    n_y += 1
                else:
                    prod_sites.append(site)
            w_eff = w * (-1j) ** n_y
            by_mask.setdefault(mask, []).append((w_eff, tuple(prod_sites)))
        groups = []
        for mask in sorted(by_mask):
            entries = by_mask[mask]
            groups.append(_FlipGroup(
                mask=mask,
                weights=np.array([w for w, _ in entries], dtype=np.complex128),
                site_lists=tuple(sites for _, sites in entries),
            ))
        return tuple(groups)

    @property
    def flip_masks(self):
        return tuple(g.mask for g in self._groups)

    def group_amplitudes(self, spins):
        """Per-mask amplitude vectors over a batch of configurations.

        spins: (n, N) +/-1 matrix.  Returns list of (mask, amps (n,) complex)
        with amps[j] = <sigma_j| H |sigma_j ^ mask>.
        """
        spins = np.asarray(spins)
        out = []
        for g in self._groups:
            amp = np.zeros(spins.shape[0], dtype=np.complex128)
            for w, sites in zip(g.weights, g.site_lists):
                term = np.full(spins.shape[0], w)
                for s in sites:
                    term = term * spins[:, s]
                amp += term
            out.append((g.mask, amp))
        return out

    def connected(self, bits):
        """Nonzero matrix elements <sigma|H|sigma'> off a configuration.

        Returns a list of (bits', amplitude); the diagonal (if present) is a
        single merged entry.
        """
        spins = bits_to_spin_matrix(np.array([bits], dtype=np.uint64), self.n_sites)
        return [(int(bits) ^ mask, complex(amp[0]))
                for mask, amp in self.group_amplitudes(spins)]

    def dense_matrix(self):
        """Full 2^N x 2^N matrix; capped at N<=14."""
        if self.n_sites > DENSE_CAP:
            raise ValueError(
                f"dense matrix for N={self.n_sites} exceeds the N<={DENSE_CAP} cap")
        dim = 1 << self.n_sites
        idx = np.arange(dim, dtype=np.uint64)
        spins = bits_to_spin_matrix(idx, self.n_sites)
        mat = np.zeros((dim, dim), dtype=np.complex128)
        for mask, amp in self.group_amplitudes(spins):
            mat[idx.astype(np.int64), (idx ^ np.uint64(mask)).astype(np.int64)] += amp
        return mat

class EnumeratedAction:
    """Precomputed action of an operator on the fully enumerated basis.

    For an enumeration sigma_j = j (j = 0..2^N-1), caches the per-mask
    amplitude vectors and flip permutations so that (H phi) over a value
    table is a handful of gather-and-accumulate passes.
    """

    def __init__(self, op, n_sites=None):
        self.op = op
        n = op.n_sites if n_sites is None else n_sites
        dim = 1 << n
        idx = np.arange(dim, dtype=np.uint64)
        spins = bits_to_spin_matrix(idx, n)
        self.masks = []
        self.amps = []
        self.perms = []
        for mask, amp in op.group_amplitudes(spins):
            self.masks.append(mask)
            self.amps.append(amp)
            self.perms.append((idx ^ np.uint64(mask)).astype(np.int64))

    def apply(self, table):
        """sum_sigma' <sigma|H|sigma'> table[sigma'] for a (dim,) or
        (dim, k) value table."""
        out = np.zeros_like(np.asarray(table), dtype=np.complex128)
        for amp, perm in zip(self.amps, self.perms):
            gathered = table[perm]
            if out.ndim == 1:
                out += amp * gathered
            else:
                out += amp[:, None] * gathered
        return out

    def apply_transpose(self, vec):
        """sum_sigma vec[sigma] <sigma|H|sigma'> as a function of sigma'
        (the transpose action, used by gradient reductions).  Each mask is
        an involution, so the scatter reduces to a gather.  vec may be
        (dim,) or (dim, k)."""
        vec = np.asarray(vec)
        out = np.zeros_like(vec, dtype=np.complex128)
        for amp, perm in zip(self.amps, self.perms):
            if vec.ndim == 1:
                out += (vec * amp)[perm]
            else:
                out += (vec * amp[:, None])[perm]
        return out


def tfi_hamiltonian(lat, J=1.0, h=1.0):
    """Transverse-field Ising Hamiltonian -J sum_<ij> ZiZj - h sum_i Xi."""
    terms = []
    if J != 0:
        for i, j in lat.bonds:
            terms.append((-J, ((i, "Z"), (j, "Z"))))
    if h != 0:
        for i in range(lat.n_sites):
            terms.append((-h, ((i, "X"),)))
    return SparsePauliOperator(lat.n_sites, terms)


def sigma_x(site, n_sites):
    return SparsePauliOperator(n_sites, [(1.0, ((site, "X"),))])


def sigma_z(site, n_sites):
    return SparsePauliOperator(n_sites, [(1.0, ((site, "Z"),))])


def sigma_x_average(n_sites):
    """(1/N) sum_i sigma_x_i, the transverse magnetization."""
    return SparsePauliOperator(
        n_sites, [(1.0 / n_sites, ((i, "X"),)) for i in range(n_sites)])


def sigma_z_average(n_sites):
    return SparsePauliOperator(
        n_sites, [(1.0 / n_sites, ((i, "Z"),)) for i in range(n_sites)])


OBSERVABLE_BUILDERS = {
    "sx_avg": sigma_x_average,
    "sz_avg": sigma_z_average,
}


def build_observable(name, n_sites):
    """Resolve an observable name ("sx_avg", "sz_avg", "sx_3", "sz_0")."""
    if name in OBSERVABLE_BUILDERS:
        return OBSERVABLE_BUILDERS[name](n_sites)
    for prefix, builder in (("sx_", sigma_x), ("sz_", sigma_z)):
        if name.startswith(prefix):
            try:
                site = int(name[len(prefix):])
            except ValueError:
                break
            if not 0 <= site < n_sites:
                raise ValueError(f"observable {name!r}: site outside lattice")
            return builder(site, n_sites)
    raise ValueError(f"unknown observable {name!r}")
