"""Lattice geometries and bit-encoded spin configurations.

Conventions fixed here and relied on everywhere downstream:
  * bit i of a configuration word is the spin at site i, bit=1 <-> sigma_z=+1,
  * square-lattice sites are indexed row-major,
  * bonds are stored (low site, high site), deduplicated, sorted.
"""

from dataclasses import dataclass, field

import numpy as np

ENUMERATION_CAP = 20


@dataclass(frozen=True)
class Lattice:
    kind: str
    dims: tuple
    pbc: bool
    n_sites: int
    bonds: tuple = field(repr=False)

    @property
    def n_bonds(self):
        return len(self.bonds)


def build_lattice(kind, dims, pbc=True):
    """Construct a chain or square lattice with nearest-neighbor bonds.

    kind: "chain" (dims = [N]) or "square" (dims = [rows, cols]).
    PBC chains of 2 sites are rejected: the wrap bond coincides with the
    direct one and silently merging them would halve the coupling.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise ValueError("dims must be nonempty")
    if any(d < 2 for d in dims):
        raise ValueError(f"every lattice dimension must be >= 2, got {dims}")

    bond_set = set()

    def add(i, j):
        if i == j:
            return
        bond_set.add((min(i, j), max(i, j)))

    if kind == "chain":
        if len(dims) != 1:
            raise ValueError("chain expects dims of length 1")
        n = dims[0]
        if pbc and n == 2:
            raise ValueError(
                "PBC chain with N=2 is ambiguous (wrap bond duplicates the "
                "direct bond); use pbc=False or N>=3"
            )
        for i in range(n - 1):
            add(i, i + 1)
        if pbc:
            add(n - 1, 0)
    elif kind == "square":
        if len(dims) != 2:
            raise ValueError("square expects dims of length 2")
        rows, cols = dims
        n = rows * cols

        def site(r, c):
            return r * cols + c

        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    add(site(r, c), site(r, c + 1))
                elif pbc:
                    add(site(r, c), site(r, 0))
                if r + 1 < rows:
                    add(site(r, c), site(r + 1, c))
                elif pbc:
                    add(site(r, c), site(0, c))
    else:
        raise ValueError(f"unknown lattice kind {kind!r}")

    return Lattice(kind=kind, dims=dims, pbc=bool(pbc), n_sites=n,
                   bonds=tuple(sorted(bond_set)))


def enumerate_configs(n_sites, cap=ENUMERATION_CAP):
    """All 2^N configurations as bit words, ascending.

    Refuses above the cap; estimators should switch to Monte Carlo there.
    """
    if n_sites > cap:
        raise ValueError(
            f"enumerating 2^{n_sites} configurations exceeds the cap of "
            f"2^{cap}; use the Monte Carlo estimator mode instead"
        )
    return np.arange(1 << n_sites, dtype=np.uint64)


def config_to_spins(bits, n_sites):
    """Decode a bit word into a +/-1 spin vector (sigma_z eigenvalues)."""
    b = int(bits)
    return np.array([1 if (b >> i) & 1 else -1 for i in range(n_sites)],
                    dtype=np.int8)


def spins_to_config(spins):
    """Encode a +/-1 spin vector back into a bit word."""
    bits = 0
    for i, s in enumerate(spins):
        if s > 0:
            bits |= 1 << i
    return bits


def bits_to_spin_matrix(bits, n_sites):
    """Vectorized decode: (n,) bit words -> (n, N) int8 matrix of +/-1."""
    bits = np.asarray(bits, dtype=np.uint64)
    shifts = np.arange(n_sites, dtype=np.uint64)
    extracted = (bits[:, None] >> shifts[None, :]) & np.uint64(1)
    return (2 * extracted.astype(np.int8) - 1)


def spin_matrix_to_bits(spins):
    """Vectorized encode: (n, N) +/-1 matrix -> (n,) uint64 bit words."""
    spins = np.asarray(spins)
    n_sites = spins.shape[1]
    weights = (np.uint64(1) << np.arange(n_sites, dtype=np.uint64))
    return ((spins > 0).astype(np.uint64) * weights[None, :]).sum(axis=1)
