import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nasim.pauli import (
    Channel,
    PauliString,
    anticommutes,
    apply_pauli,
    basis_state,
    density_matrix,
    expectation,
    from_pauli_vector,
    pauli_action_tables,
    pauli_basis,
    pauli_vector,
    pauli_words,
    ptm_of_channel,
    symplectic_code,
)

from conftest import random_density_matrix

words = lambda n: st.text(alphabet="IXYZ", min_size=n, max_size=n)
phases = st.sampled_from([1, -1, 1j, -1j])


def test_products():
    assert PauliString("X") * PauliString("Y") == PauliString("Z", 1j)
    for w in "IXYZ":
        assert PauliString("I") * PauliString(w) == PauliString(w)
    assert PauliString("XZ") * PauliString("YZ") == PauliString("ZI", 1j)


def test_invalid_words_and_phases():
    with pytest.raises(ValueError):
        PauliString("XA")
    with pytest.raises(ValueError):
        PauliString("X", 2)
    with pytest.raises(ValueError):
        PauliString("X") * PauliString("XX")


def test_label_round_trip():
    for label in ["XZ", "-YI", "iZ", "-iXX"]:
        assert str(PauliString.from_label(label)) == label


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(words(n), words(n), phases, phases)))
def test_product_matches_matrices(args):
    a, b, pa, pb = args
    pa, pb = PauliString(a, pa), PauliString(b, pb)
    assert np.allclose((pa * pb).matrix(), pa.matrix() @ pb.matrix())


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(words(n), words(n))))
def test_commutation_matches_matrices(args):
    a, b = args
    ma, mb = PauliString(a).matrix(), PauliString(b).matrix()
    assert anticommutes(a, b) == np.allclose(ma @ mb, -mb @ ma)
    assert PauliString(a).commutes(PauliString(b)) != anticommutes(a, b)


def test_apply_pauli_examples():
    zero = basis_state("0")
    assert np.allclose(apply_pauli(zero, PauliString("Z")), zero)
    assert np.allclose(apply_pauli(density_matrix(zero), PauliString("X")), density_matrix(basis_state("1")))
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    assert np.allclose(apply_pauli(density_matrix(plus), PauliString("Y")), density_matrix(minus))


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(words(n), phases, st.integers(0, 2**31))))
def test_action_tables_match_dense(args):
    word, phase, seed = args
    n = len(word)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    p = PauliString(word, phase)
    assert np.allclose(apply_pauli(psi, p), p.matrix() @ psi)
    rho = random_density_matrix(rng, n)
    m = p.matrix()
    assert np.allclose(apply_pauli(rho, p), m @ rho @ m.conj().T)


def test_symplectic_codes_compose_by_xor():
    n = 2
    perm, phase = pauli_action_tables(n)
    for a in pauli_words(n):
        for b in pauli_words(n):
            prod = (PauliString(a) * PauliString(b)).canonical().word
            assert symplectic_code(a) ^ symplectic_code(b) == symplectic_code(prod)
    assert perm.shape == (16, 4) and phase.shape == (16, 4)


def test_expectations():
    zero = density_matrix(basis_state("0"))
    plus = density_matrix(np.array([1, 1]) / np.sqrt(2))
    assert expectation(zero, PauliString("Z")) == 1.0
    assert expectation(np.eye(2) / 2, PauliString("X")) == 0.0
    assert np.isclose(expectation(plus, PauliString("X")), 1.0)
    with pytest.raises(ValueError):
        expectation(zero, PauliString("X", 1j))


def test_embed():
    assert PauliString("XZ").embed([2, 0], 3).word == "ZIX"
    with pytest.raises(ValueError):
        PauliString("X").embed([3], 3)


def test_pauli_order_and_basis():
    assert pauli_words(1) == ["I", "X", "Y", "Z"]
    assert pauli_words(2)[:5] == ["II", "IX", "IY", "IZ", "XI"]
    b = pauli_basis(2)
    gram = np.einsum("aij,bji->ab", b, b)
    assert np.allclose(gram, 4 * np.eye(16))


def test_identity_channel_ptm():
    assert np.allclose(Channel.identity(2).ptm(), np.eye(16))


def test_bit_flip_ptm():
    q = 0.13
    x = PauliString("X").matrix()
    ch = Channel.from_kraus([np.sqrt(1 - q) * np.eye(2), np.sqrt(q) * x])
    assert np.allclose(ch.ptm(), np.diag([1, 1, 1 - 2 * q, 1 - 2 * q]))


def test_channel_conversions_agree(rng):
    kraus = [np.array([[1, 0], [0, np.sqrt(0.7)]]), np.array([[0, np.sqrt(0.3)], [0, 0]])]
    ch = Channel.from_kraus(kraus)
    fn = Channel.from_function(lambda r: sum(k @ r @ k.conj().T for k in kraus), 1)
    assert np.allclose(ch.superop, fn.superop)
    back = Channel.from_ptm(ch.ptm(), 1)
    assert np.allclose(back.superop, ch.superop)
    assert ch.is_trace_preserving() and ch.is_completely_positive()
    rho = random_density_matrix(rng, 1)
    assert np.allclose(ch(rho), sum(k @ rho @ k.conj().T for k in kraus))
    u = PauliString("Y").matrix()
    assert np.allclose((Channel.from_unitary(u) @ ch)(rho), u @ ch(rho) @ u.conj().T)


def test_non_cp_map_detected():
    transpose = Channel.from_function(lambda r: r.T, 1)
    assert transpose.is_trace_preserving()
    assert not transpose.is_completely_positive()


def test_ptm_matches_definition(rng):
    rho = random_density_matrix(rng, 2)
    u = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
    r = ptm_of_channel([u], 2)
    assert np.allclose(pauli_vector(u @ rho @ u.conj().T), r @ pauli_vector(rho))
    assert np.allclose(from_pauli_vector(pauli_vector(rho)), rho)


def test_size_limits():
    with pytest.raises(ValueError):
        PauliString("X" * 9).matrix()
    with pytest.raises(ValueError):
        Channel(np.eye(4**7), 7)
