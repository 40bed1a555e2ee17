import numpy as np
import pytest

from nasim.engine import (
    BELL_LABELS,
    Observable,
    SimulationPlan,
    bell_state,
    exact_mitigated_expectation,
    population_measurement,
    population_observables,
    run,
    shot_records,
)
from nasim.mitigation import MitigationPlan
from nasim.noise import NoiseSpec, PauliChannel, ResetSpec
from nasim.pauli import Channel, PauliString, basis_state, density_matrix
from nasim.trotter import TrotterPlan, exact_unitary


def make_plan(eps, r, layers=5, terms=((1.1, "X"),), slots=((0,),), psi=None, reset=None, dt=0.2):
    noise = NoiseSpec(tuple(PauliChannel(s, e) for s, e in zip(slots, eps)))
    mit = MitigationPlan.uniform(noise, r, layers, dt)
    trotter = TrotterPlan(list(terms), dt, layers, slots)
    n = trotter.n
    psi = basis_state("1" * n) if psi is None else psi
    return SimulationPlan(trotter, noise, mit, psi, reset)


def dense_reference(plan, r):
    """Density-matrix composition with the signed inverse written as a superoperator."""
    n = plan.n
    u = Channel.from_unitary(plan.trotter.layer().matrix)
    layer = Channel.identity(n)
    for ch in plan.noise.channels:
        dev = ch.to_channel(n)
        if r == 1:
            # the signed inverse exists as a linear map
            layer = Channel(np.linalg.inv(dev.superop), n) @ dev @ layer
        else:
            layer = ch.scaled(1 - r).to_channel(n) @ layer
    rho = density_matrix(plan.initial_state)
    for _ in range(plan.layers):
        rho = layer(u(rho))
    return rho


def test_bell_populations():
    assert np.allclose(population_measurement(bell_state("Psi+"), "bell"), [1, 0, 0, 0])
    assert np.allclose(population_measurement(basis_state("00"), "bell"), [0.5, 0, 0, 0.5])
    assert np.allclose(population_measurement(np.eye(4) / 4, "bell"), 0.25)
    assert BELL_LABELS[0] == "Psi+"
    with pytest.raises(ValueError):
        population_measurement(basis_state("0"), "bell")


def test_observable_support():
    assert Observable.pauli("IZ").support == (1,)
    assert Observable.projector(bell_state(), "b").support == (0, 1)
    assert [o.label for o in population_observables("computational", 2)] == ["00", "01", "10", "11"]
    with pytest.raises(ValueError):
        Observable("bad", np.array([[0, 1], [0, 0]]))


def test_noiseless_rabi():
    plan = make_plan([{}], 0.0, layers=6)
    est = run(plan, ["Z"], 4000, seed=5)[0]
    psi = exact_unitary([(1.1, "X")], 1.2) @ basis_state("1")
    expected = np.real(np.vdot(psi, PauliString("Z").matrix() @ psi))
    assert est.stderr < 1e-12
    assert np.isclose(est.estimate, expected)


def test_full_pec_recovers_noiseless():
    plan = make_plan([{"X": 0.02, "Y": 0.01, "Z": 0.03}], 1.0)
    est = run(plan, ["Z"], 10**5, seed=11)[0]
    psi = exact_unitary([(1.1, "X")], 1.0) @ basis_state("1")
    ideal = np.real(np.vdot(psi, PauliString("Z").matrix() @ psi))
    assert abs(est.estimate - ideal) <= 4 * est.stderr
    assert np.isclose(est.c_tot, np.exp(2 * 5 * 0.06))


def test_exact_oracle_limits():
    eps = [{"X": 0.02, "Y": 0.01, "Z": 0.03}]
    full = make_plan(eps, 1.0)
    psi = exact_unitary([(1.1, "X")], 1.0) @ basis_state("1")
    ideal = np.real(np.vdot(psi, PauliString("Z").matrix() @ psi))
    assert abs(exact_mitigated_expectation(full, "Z") - ideal) < 1e-10
    for r in (0.0, 0.5):
        plan = make_plan(eps, r)
        rho = dense_reference(plan, r)
        assert np.isclose(exact_mitigated_expectation(plan, "Z"), np.real(np.trace(PauliString("Z").matrix() @ rho)))


def test_two_qubit_plan_matches_oracle():
    plan = make_plan([{"XZ": 0.02, "ZZ": 0.03, "IY": 0.01}], 0.5, layers=3, terms=[(0.7, "XX"), (0.4, "ZI")],
                     slots=[(0, 1)])
    ests = run(plan, ["ZI", "XX"], 40000, seed=3)
    for e in ests:
        exact = exact_mitigated_expectation(plan, e.observable)
        assert abs(e.estimate - exact) <= 4 * e.stderr + 1e-12


def test_amplification_matches_oracle():
    plan = make_plan([{"X": 0.02, "Z": 0.02}], -3.0, layers=4)
    e = run(plan, ["Z"], 40000, seed=4)[0]
    assert e.c_tot == 1.0
    assert abs(e.estimate - exact_mitigated_expectation(plan, "Z")) <= 4 * e.stderr


def test_reset_matches_oracle():
    reset = ResetSpec.from_rate(1.5, 0.2, 5, p_er=1e-3)
    plan = make_plan([{"Z": 0.02}], 0.0, reset=reset)
    e = run(plan, ["Z"], 40000, seed=8)[0]
    assert abs(e.estimate - exact_mitigated_expectation(plan, "Z")) <= 4 * e.stderr


def test_projective_mode_is_unbiased():
    plan = make_plan([{"X": 0.02}], 1.0, layers=3)
    obs = population_observables("computational", 1)
    ests = run(plan, obs, 40000, seed=9, mode="projective")
    for e, o in zip(ests, obs):
        assert abs(e.estimate - exact_mitigated_expectation(plan, o)) <= 4 * e.stderr


def test_runs_are_deterministic():
    plan = make_plan([{"X": 0.02, "Z": 0.03}], 0.7)
    a = run(plan, ["Z", "Y"], 9000, seed=1, chunk=1000)
    b = run(plan, ["Z", "Y"], 9000, seed=1, chunk=1000, threads=4)
    assert [x.to_row() for x in a] == [x.to_row() for x in b]
    c = run(plan, ["Z", "Y"], 9000, seed=1, chunk=1000, stream=1)
    assert a[0].mean != c[0].mean


def test_partial_depth_and_records():
    plan = make_plan([{"X": 0.02}], 1.0)
    e = run(plan, ["Z"], 100, seed=2, layers=2)[0]
    assert e.layers == 2 and np.isclose(e.time, 0.4)
    assert np.isclose(e.c_tot, np.exp(2 * 2 * 0.02))
    recs = shot_records(plan, "Z", 50, seed=2)
    assert len(recs) == 50 and {r.sign for r in recs} <= {-1, 1}
    with pytest.raises(ValueError):
        run(plan, ["Z"], 100, seed=2, layers=9)
    with pytest.raises(ValueError):
        run(plan, ["ZZ"], 100, seed=2)


def test_plan_validation():
    noise = NoiseSpec((PauliChannel((0,), {"X": 0.01}),))
    trotter = TrotterPlan([(1.0, "X")], 0.1, 3, [(0,)])
    with pytest.raises(ValueError):
        SimulationPlan(trotter, noise, MitigationPlan.uniform(noise, 1, 2, 0.1), basis_state("0"))
    with pytest.raises(ValueError):
        SimulationPlan(trotter, noise, MitigationPlan.uniform(noise, 1, 3, 0.1), np.array([1.0, 1.0]))


def test_characterized_plan_leaves_bias_in_oracle():
    truth = NoiseSpec((PauliChannel((0,), {"X": 0.03}),))
    guess = NoiseSpec((PauliChannel((0,), {"X": 0.02}),), source="characterized")
    mit = MitigationPlan.uniform(guess, 1.0, 4, 0.2)
    plan = SimulationPlan(TrotterPlan([(1.1, "X")], 0.2, 4, [(0,)]), truth, mit, basis_state("1"))
    # 0.01 of X error per layer survives and Z anticommutes with X
    ideal = make_plan([{}], 0.0, layers=4)
    assert not np.isclose(exact_mitigated_expectation(plan, "Z"), exact_mitigated_expectation(ideal, "Z"))
    assert plan.total_cost() == pytest.approx(np.exp(2 * 4 * 0.02))
    e = run(plan, ["Z"], 40000, seed=6)[0]
    assert abs(e.estimate - exact_mitigated_expectation(plan, "Z")) <= 4 * e.stderr


@pytest.mark.parametrize("reset", [False, True])
def test_shot_states_stay_normalized(reset):
    from nasim.engine import _evolve

    spec = ResetSpec.from_rate(1.5, 0.05, 100, p_er=1e-3) if reset else None
    plan = make_plan([{"X": 0.03, "Y": 0.01, "Z": 0.02}], 0.6, layers=100, reset=spec, dt=0.05)
    tables = [plan.layer_tables(d) for d in range(1, 101)]
    states, sign = _evolve(plan, tables, 100, 2000, np.random.default_rng(3))
    assert np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) < 1e-10
    assert set(np.unique(sign)) <= {-1.0, 1.0}


def test_stderr_scales_with_cost():
    # projective samples are +-1, so the signed spread is sqrt(1 - mean^2)
    shots = 20000
    for eps in (0.01, 0.06):
        plan = make_plan([{"X": eps, "Z": eps}], 1.0, layers=5)
        e = run(plan, ["Z"], shots, seed=12, mode="projective")[0]
        assert e.c_tot > 1
        predicted = e.c_tot * np.sqrt(1 - e.mean**2) / np.sqrt(shots)
        assert np.isclose(e.stderr, predicted, rtol=1e-3)
