import numpy as np
import pytest

from tnqg.hamiltonian import (
    EnumeratedAction,
    SparsePauliOperator,
    build_observable,
    sigma_x,
    sigma_x_average,
    tfi_hamiltonian,
)
from tnqg.lattice import build_lattice, spins_to_config


def dense_from_kron(op):
    """Independent dense build via explicit Kronecker products."""
    paulis = {
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    dim = 2 ** op.n_sites
    out = np.zeros((dim, dim), dtype=complex)
    for w, key in op.terms:
        per_site = [np.eye(2, dtype=complex)] * op.n_sites
        for site, p in key:
            per_site[site] = paulis[p]
        # site i carries bit i: build with site 0 as the fastest index
        m = np.array([[1.0]], dtype=complex)
        for i in range(op.n_sites):
            m = np.kron(per_site[i], m)
        out += w * m
    return out


def kron_basis_index(bits, n):
    """Index of |sigma> in the kron ordering above; row r of the dense
    matrix is the configuration with bit pattern derived from r."""
    # bit i = 1 means sigma_z = +1, which is the FIRST basis vector of site i,
    # i.e. a 0 in the binary digit of the kron index at position i.
    idx = 0
    for i in range(n):
        if not (bits >> i) & 1:
            idx |= 1 << i
    return idx


def permute_to_bit_order(mat, n):
    """Reorder a kron-built matrix into the bits-are-indices convention."""
    dim = 2 ** n
    perm = np.array([kron_basis_index(b, n) for b in range(dim)])
    return mat[np.ix_(perm, perm)]


def test_term_counts():
    lat = build_lattice("chain", [40], True)
    op = tfi_hamiltonian(lat, J=1.0, h=2.0)
    zz = [t for t in op.terms if len(t[1]) == 2]
    x = [t for t in op.terms if len(t[1]) == 1]
    assert len(zz) == 40 and len(x) == 40

    lat2 = build_lattice("square", [6, 6], True)
    op2 = tfi_hamiltonian(lat2, J=1.0, h=3.044)
    assert sum(len(t[1]) == 2 for t in op2.terms) == 72
    assert sum(len(t[1]) == 1 for t in op2.terms) == 36


def test_all_up_diagonal_energy():
    lat = build_lattice("chain", [3], True)
    op = tfi_hamiltonian(lat, J=1.0, h=0.0)
    up = spins_to_config([1, 1, 1])
    conn = op.connected(up)
    assert len(conn) == 1
    bits, amp = conn[0]
    assert bits == up
    assert amp == pytest.approx(-3.0)


def test_connected_two_spins_by_hand():
    lat = build_lattice("chain", [2], False)
    op = tfi_hamiltonian(lat, J=1.0, h=1.0)
    up = 0b11
    conn = dict(op.connected(up))
    assert conn == {0b11: -1.0, 0b10: -1.0, 0b01: -1.0}


def test_h_zero_single_diagonal():
    lat = build_lattice("chain", [5], True)
    op = tfi_hamiltonian(lat, J=0.7, h=0.0)
    for bits in (0, 7, 21):
        conn = op.connected(bits)
        assert len(conn) == 1 and conn[0][0] == bits


def test_connected_matches_dense_rows():
    rng = np.random.default_rng(3)
    lat = build_lattice("chain", [8], True)
    op = tfi_hamiltonian(lat, J=1.0, h=1.3)
    dense = op.dense_matrix()
    for bits in rng.integers(0, 256, size=100):
        row = np.zeros(256, dtype=complex)
        for b2, amp in op.connected(int(bits)):
            row[b2] += amp
        np.testing.assert_allclose(row, dense[int(bits)], atol=1e-14)


def test_dense_matches_kron_including_y():
    op = SparsePauliOperator(3, [
        (0.8, ((0, "X"), (2, "Z"))),
        (-0.3j, ((1, "Y"),)),
        (0.3j, ((1, "Y"), (2, "Y"))),
        (1.1, ((0, "Z"), (1, "Z"), (2, "Z"))),
        (0.25, ()),
    ])
    ours = op.dense_matrix()
    ref = permute_to_bit_order(dense_from_kron(op), 3)
    np.testing.assert_allclose(ours, ref, atol=1e-14)


def test_hermiticity_and_trace():
    lat = build_lattice("square", [3, 3], True)
    op = tfi_hamiltonian(lat, J=1.0, h=2.0)
    assert op.is_hermitian
    dense = op.dense_matrix()
    np.testing.assert_allclose(dense, dense.conj().T, atol=1e-14)
    assert abs(np.trace(dense)) < 1e-12


def test_single_site_x_matrix():
    lat = build_lattice("chain", [2], False)
    op = tfi_hamiltonian(lat, J=0.0, h=1.5)
    dense = op.dense_matrix()
    # pure off-diagonal, every connected flip carries -h
    assert np.allclose(np.diag(dense), 0.0)
    assert dense[0b00, 0b01] == pytest.approx(-1.5)


def test_two_spin_spectrum_analytic():
    lat = build_lattice("chain", [2], False)
    J, h = 1.0, 1.7
    op = tfi_hamiltonian(lat, J=J, h=h)
    ev = np.linalg.eigvalsh(op.dense_matrix())
    gap = np.sqrt(J ** 2 + 4 * h ** 2)
    np.testing.assert_allclose(ev, sorted([-gap, -J, J, gap]), atol=1e-12)


def test_enumerated_action_matches_dense():
    lat = build_lattice("chain", [6], True)
    op = tfi_hamiltonian(lat, J=1.0, h=0.9)
    act = EnumeratedAction(op)
    dense = op.dense_matrix()
    rng = np.random.default_rng(5)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    np.testing.assert_allclose(act.apply(v), dense @ v, atol=1e-12)
    np.testing.assert_allclose(act.apply_transpose(v), dense.T @ v, atol=1e-12)
    table = rng.standard_normal((64, 3)) + 1j * rng.standard_normal((64, 3))
    np.testing.assert_allclose(act.apply(table), dense @ table, atol=1e-12)


def test_observable_builders():
    op = build_observable("sx_avg", 4)
    assert op.n_terms == 4
    assert op.two_norm_bound == pytest.approx(1.0)
    assert build_observable("sx_2", 4).terms[0][1] == ((2, "X"),)
    assert build_observable("sz_0", 4).terms[0][1] == ((0, "Z"),)
    with pytest.raises(ValueError):
        build_observable("sx_9", 4)
    with pytest.raises(ValueError):
        build_observable("nope", 4)
    assert sigma_x(1, 3).two_norm_bound == pytest.approx(1.0)
    avg = sigma_x_average(8)
    dense = avg.dense_matrix()
    # exact 2-norm of the average is 1 (simultaneous sigma_x eigenstates)
    assert np.linalg.norm(dense, 2) == pytest.approx(1.0)


def test_duplicate_strings_merge():
    op = SparsePauliOperator(2, [(1.0, ((0, "X"),)), (2.0, ((0, "X"),))])
    assert op.n_terms == 1
    assert op.terms[0][0] == pytest.approx(3.0)
    cancel = SparsePauliOperator(2, [(1.0, ((0, "X"),)), (-1.0, ((0, "X"),))])
    assert cancel.n_terms == 0
