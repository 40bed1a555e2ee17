import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nasim.pauli import PauliString
from nasim.trotter import (
    Filler,
    HamiltonianTerm,
    TrotterPlan,
    build_trotter_layer,
    exact_unitary,
    hamiltonian_matrix,
    trotter_defect,
)


@given(st.floats(-5, 5), st.floats(0, 2))
def test_single_term_layer_is_rotation(e, dt):
    layer = build_trotter_layer([(e, "X")], dt).matrix
    expected = np.cos(e * dt) * np.eye(2) - 1j * np.sin(e * dt) * PauliString("X").matrix()
    assert np.allclose(layer, expected)
    assert np.allclose(exact_unitary([(e, "X")], dt), expected)


def test_zero_step_is_identity():
    assert np.allclose(build_trotter_layer([(1.0, "X"), (0.3, "Z")], 0.0).matrix, np.eye(2))
    assert np.allclose(exact_unitary([(1.0, "X")], 0.0), np.eye(2))


def test_exact_unitary_diagonal():
    assert np.allclose(exact_unitary([(np.pi, "Z")], 1.0), -np.eye(2))


def test_commuting_terms_have_no_defect():
    terms = [(1.0, "ZI"), (1.0, "IZ")]
    assert trotter_defect(terms, 0.3, 4) < 1e-12
    assert np.allclose(build_trotter_layer(terms, 0.3).matrix, exact_unitary(terms, 0.3))
    assert trotter_defect([(0.7, "XY")], 0.2, 5) < 1e-12


def test_first_order_scaling():
    terms = [(1.0, "X"), (1.0, "Z")]
    t = 1.0
    coarse = trotter_defect(terms, t / 20, 20)
    fine = trotter_defect(terms, t / 40, 40)
    assert 1.8 <= coarse / fine <= 2.2


def test_term_order_is_preserved():
    a = build_trotter_layer([(1.0, "X"), (1.0, "Z")], 0.4)
    b = build_trotter_layer([(1.0, "Z"), (1.0, "X")], 0.4)
    assert [p.word for _, p in a.gates] == ["X", "Z"]
    assert not np.allclose(a.matrix, b.matrix)
    # later terms act after earlier ones
    rz = exact_unitary([(1.0, "Z")], 0.4)
    rx = exact_unitary([(1.0, "X")], 0.4)
    assert np.allclose(a.matrix, rz @ rx)


def test_hamiltonian_terms_validation():
    assert HamiltonianTerm(2.0, "-X").to_pair() == (-2.0, "X")
    with pytest.raises(ValueError):
        HamiltonianTerm(1.0, "II")
    with pytest.raises(ValueError):
        HamiltonianTerm(1.0, "iX")
    with pytest.raises(ValueError):
        hamiltonian_matrix([(1.0, "X"), (1.0, "XX")])


def test_filler_pads_cancel():
    assert np.allclose(Filler("x", 30, (0,)).unitary(1), np.eye(2))
    assert np.allclose(Filler("cnot", 2, (0, 1)).unitary(3), np.eye(8))
    assert np.allclose(Filler("cnot", 2, (1, 0)).unitary(2), np.eye(4))
    with pytest.raises(ValueError):
        Filler("x", 3, (0,))
    with pytest.raises(ValueError):
        Filler("cnot", 2, (0,))


def test_plan_for_time():
    plan = TrotterPlan.for_time([(1.0, "XX")], 1.0, 0.1, [(0, 1)])
    assert plan.layers == 10 and plan.n == 2
    assert np.isclose(plan.total_time, 1.0)
    with pytest.raises(ValueError):
        TrotterPlan.for_time([(1.0, "X")], 1.0, 0.3, [(0,)])
    with pytest.raises(ValueError):
        TrotterPlan([(1.0, "X")], 0.1, 2, [(1,)])
