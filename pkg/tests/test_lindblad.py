import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nasim.lindblad import (
    DEFAULT_GAMMA_Z,
    DissipatorTerm,
    Rate,
    RateSchedule,
    ad_num_dissipator,
    comp_dissipator,
    eternal_dissipator,
    integrate,
    lindblad_ptm,
    oscillating_dissipator,
)
from nasim.pauli import basis_state, density_matrix
from nasim.trotter import exact_unitary

from conftest import random_density_matrix

PLUS = np.array([1, 1]) / np.sqrt(2)


def test_pure_dephasing_decay():
    traj = integrate([], [DissipatorTerm.pauli("Z", 1.0)], PLUS, 0.5, 0.005)
    assert np.isclose(traj.expectations(["X"])[-1, 0], np.exp(-1.0), atol=1e-10)
    assert np.isclose(traj.expectations(["X"])[-1, 0], 0.367879, atol=1e-6)


def test_amplitude_decay():
    gamma = 0.7
    term = DissipatorTerm.jump([1, 0], [0, 1], gamma)
    traj = integrate([], [term], basis_state("1"), 2.0, 0.01, store_every=10)
    assert np.allclose(traj.populations()[:, 1], np.exp(-gamma * traj.times), atol=1e-9)


def test_closed_system_limit():
    psi = basis_state("1")
    traj = integrate([(1.3, "X")], [], psi, 1.2, 0.001, store_every=100)
    for t, rho in zip(traj.times, traj.states):
        u = exact_unitary([(1.3, "X")], t)
        assert np.allclose(rho, density_matrix(u @ psi), atol=1e-8)


def test_rk4_and_expm_agree_for_constant_rates(rng):
    rho0 = random_density_matrix(rng, 2)
    terms = [DissipatorTerm.pauli("XZ", 0.3), DissipatorTerm.pauli("IY", 0.1)]
    a = integrate([(0.5, "ZZ"), (0.4, "XI")], terms, rho0, 1.0, 0.01, method="rk4")
    b = integrate([(0.5, "ZZ"), (0.4, "XI")], terms, rho0, 1.0, 0.5, method="expm")
    assert np.allclose(a.states[-1], b.states[-1], atol=1e-9)


def test_eternal_rates():
    rates = RateSchedule(tuple(eternal_dissipator()))
    assert np.allclose(rates.rates_at(0.0), [1, 1, 0])
    assert np.allclose(rates.rates_at(50.0), [1, 1, -1])
    assert np.isclose(rates.rates_at(0.5)[2], -0.462117, atol=1e-6)


def test_eternal_map_stays_positive():
    traj = integrate([], eternal_dissipator(), PLUS, 4.0, 0.01)
    assert min(np.linalg.eigvalsh(r).min() for r in traj.states) > -1e-10


def test_comp_one_step_ptm():
    dt = 0.03
    rates = {t.pauli_op.word: t.rate(0.0) for t in comp_dissipator()}
    ptm = lindblad_ptm([], rates, 1, dt)
    assert np.allclose(ptm, np.diag([1, np.exp(-8 * dt), np.exp(-8 * dt), np.exp(-8 * dt)]))
    assert np.allclose(lindblad_ptm([], rates, 1, 0.0), np.eye(4))


def test_comp_steady_state(rng):
    traj = integrate([], comp_dissipator(), random_density_matrix(rng, 1), 6.0, 0.01)
    assert np.allclose(traj.states[-1], np.eye(2) / 2, atol=1e-9)


def test_oscillating_model():
    terms = oscillating_dissipator()
    rates = RateSchedule(tuple(terms)).rates_at(0.0)
    assert np.allclose(rates[2:], 0.2)
    assert np.isclose(rates[0], DEFAULT_GAMMA_Z(0.0))
    assert DEFAULT_GAMMA_Z(np.linspace(0, 3, 301)).min() < 0


def test_oscillating_without_z_relaxes_monotonically():
    s = 1 / np.sqrt(2)
    psi = np.array([s, 0, 0, s])
    traj = integrate([], oscillating_dissipator(gamma_z=0.0), psi, 3.0, 0.01, store_every=5)
    fid = np.real(np.einsum("i,tij,j->t", psi.conj(), traj.states, psi))
    assert np.all(np.diff(fid) < 0)


def test_ad_rate():
    terms = ad_num_dissipator()
    assert terms[0].rate(0.0) == 1.0
    assert np.isclose(terms[0].rate(1.0), 1.761594, atol=1e-6)
    assert len(ad_num_dissipator(Rate.constant(0.0))) == 1


def test_rates_serialize():
    rates = [Rate.constant(2.0), Rate.tanh(1.0, -0.5), DEFAULT_GAMMA_Z, Rate.table([0, 1, 2], [0, 1, 0]),
             Rate.constant(1.0) + Rate.tanh()]
    for r in rates:
        back = Rate.from_dict(r.to_dict())
        assert np.allclose(back(np.linspace(0, 3, 7)), r(np.linspace(0, 3, 7)))
    assert Rate.from_dict(0.5)(3.0) == 0.5
    with pytest.raises(ValueError):
        Rate("spline")
    with pytest.raises(ValueError):
        Rate.table([0, 0], [1, 2])


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 5))
def test_scaled_rates(offset, amp, t):
    r = Rate.tanh(offset, amp)
    assert np.isclose(r.scaled(-2.0)(t), -2.0 * r(t))
    assert np.isclose((r + Rate.constant(1.0))(t), r(t) + 1.0)


def test_dissipator_terms_serialize():
    for term in [DissipatorTerm.pauli("XZ", 0.3), DissipatorTerm.jump([1, 0], [0, 1j], Rate.tanh(), qubit=1)]:
        back = DissipatorTerm.from_dict(term.to_dict())
        assert np.allclose(back.superop(2), term.superop(2))
    with pytest.raises(ValueError):
        DissipatorTerm.pauli("II", 1.0)


def test_sample_rules():
    sched = RateSchedule((DissipatorTerm.pauli("Z", Rate.tanh()),), sample="midpoint")
    assert np.allclose(sched.sample_times(0.1, 3), [0.05, 0.15, 0.25])
    assert np.allclose(RateSchedule(sched.terms).sample_times(0.1, 3), [0.1, 0.2, 0.3])
    assert sched.discretize(0.1, 3).shape == (3, 1)


@pytest.mark.parametrize("model", ["eternal", "oscillating", "ad"])
def test_trace_and_hermiticity_preserved(model, rng):
    if model == "eternal":
        h, terms, n = [(np.pi, "X")], eternal_dissipator(), 1
    elif model == "oscillating":
        h, terms, n = [(np.pi, "ZI")], oscillating_dissipator(), 2
    else:
        h, terms, n = [(2.1 * np.pi, "X")], ad_num_dissipator(), 1
    traj = integrate(h, terms, random_density_matrix(rng, n), 2.0, 0.005, store_every=20)
    for rho in traj.states:
        assert abs(np.trace(rho) - 1) < 1e-9
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-9


def test_rk4_is_fourth_order():
    h, terms = [(2.1 * np.pi, "X")], ad_num_dissipator()
    psi = basis_state("1")
    ref = integrate(h, terms, psi, 1.0, 0.025 / 4).states[-1]
    coarse = np.abs(integrate(h, terms, psi, 1.0, 0.05).states[-1] - ref).max()
    fine = np.abs(integrate(h, terms, psi, 1.0, 0.025).states[-1] - ref).max()
    assert coarse / fine >= 8
