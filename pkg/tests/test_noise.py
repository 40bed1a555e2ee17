import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nasim.lindblad import DissipatorTerm, Rate, generator, RateSchedule
from nasim.noise import (
    ChannelExecutor,
    InsufficientShotsError,
    NoiseSpec,
    PauliChannel,
    ResetSpec,
    ad_decomposition,
    amplitude_damping_kraus,
    characterize,
    compose_channels,
    dissipator_rates,
    flip_probability,
    pauli_twirl,
    reset_apply,
    reset_probability,
    reset_rate,
    stochastic_channel_apply,
)
from nasim.pauli import Channel, PauliString, anticommutes, basis_state, density_matrix, pauli_words
from scipy.linalg import expm

from conftest import random_density_matrix

eps_values = st.floats(0, 0.1)


def test_flip_probability():
    assert np.isclose(flip_probability(0.05), 0.047581, atol=1e-6)
    assert np.isclose(flip_probability(40.0), 0.5)
    assert flip_probability(0.0) == 0.0


def test_zero_noise_leaves_state(rng):
    ch = PauliChannel((0, 1), {})
    psi = rng.normal(size=4) + 0j
    for _ in range(20):
        out, applied = stochastic_channel_apply(psi, ch, rng)
        assert applied.is_identity and np.array_equal(out, psi)


@given(st.lists(eps_values, min_size=3, max_size=3))
def test_single_qubit_ptm_diagonal(eps):
    ch = PauliChannel((0,), dict(zip("XYZ", eps)))
    ptm = ch.to_channel(1).ptm()
    assert np.allclose(ptm, np.diag(ch.ptm_diagonal()), atol=1e-12)


@given(st.sampled_from(pauli_words(2)[1:]), eps_values)
def test_one_generator_ptm(word, eps):
    ptm = np.diag(PauliChannel((0, 1), {word: eps}).to_channel(2).ptm())
    expected = [np.exp(-2 * eps) if anticommutes(w, word) else 1.0 for w in pauli_words(2)]
    assert np.allclose(ptm, expected)


def test_sampled_channel_matches_exact(rng):
    ch = PauliChannel((1,), {"X": 0.3, "Z": 0.15})
    rho = random_density_matrix(rng, 2)
    exact = ch.to_channel(2)(rho)
    shots = 20000
    acc = np.zeros_like(rho)
    for _ in range(shots):
        acc += stochastic_channel_apply(rho, ch, rng)[0]
    assert np.allclose(acc / shots, exact, atol=0.02)


def test_rates():
    ch = PauliChannel((0,), {"X": 0.02})
    assert np.isclose(dissipator_rates(ch, 0.1)["X"], 0.2)
    assert dissipator_rates(PauliChannel((0,), {"X": 0.0}), 0.1)["X"] == 0.0
    assert np.isclose(ch.rates(0.05)["X"], 2 * ch.rates(0.1)["X"])


@given(st.lists(eps_values, min_size=15, max_size=15))
def test_layer_equals_dissipator_exponential(eps):
    dt = 0.2
    ch = PauliChannel((0, 1), dict(zip(pauli_words(2)[1:], eps)))
    terms = [DissipatorTerm.pauli(w, g) for w, g in ch.rates(dt).items()]
    lgen = generator([], RateSchedule(tuple(terms)), 2)(0.0) if terms else np.zeros((16, 16))
    assert np.allclose(ch.to_channel(2).superop, expm(dt * lgen), atol=1e-12)


def test_twirl_fixed_points():
    ch = PauliChannel((0,), {"X": 0.01, "Z": 0.04})
    tw = pauli_twirl(ch)
    assert tw.errors.keys() == ch.errors.keys()
    assert np.allclose([tw.errors[k] for k in ch.errors], list(ch.errors.values()))
    assert pauli_twirl(Channel.identity(2)).errors == {}


def test_twirl_of_amplitude_damping():
    kraus = amplitude_damping_kraus(0.1)
    tw = pauli_twirl(kraus)
    channel = Channel.from_kraus(kraus)
    paulis = [PauliString(w).matrix() for w in "IXYZ"]
    # brute-force average over the four Pauli conjugations
    brute = sum((Channel.from_unitary(p) @ channel @ Channel.from_unitary(p)).superop for p in paulis) / 4
    brute_ptm = Channel(brute, 1).ptm()
    assert np.allclose(brute_ptm, np.diag(np.diag(brute_ptm)), atol=1e-12)
    assert np.allclose(tw.to_channel(1).ptm(), brute_ptm, atol=1e-12)


def test_compose_channels():
    a = PauliChannel((0,), {"X": 0.01})
    b = PauliChannel((1,), {"Z": 0.02})
    c = PauliChannel((0, 1), {"XI": 0.03})
    total = compose_channels([a, b, c], (0, 1))
    assert total.errors == pytest.approx({"XI": 0.04, "IZ": 0.02})
    ptm = (c.to_channel(2) @ b.to_channel(2) @ a.to_channel(2)).ptm()
    assert np.allclose(np.diag(total.to_channel(2).ptm()), np.diag(ptm))
    with pytest.raises(ValueError):
        compose_channels([PauliChannel((2,), {"X": 0.1})], (0, 1))


def test_noise_spec_round_trip():
    spec = NoiseSpec((PauliChannel((0,), {"X": 0.01}), PauliChannel((1, 2), {"ZZ": 0.02, "IX": 0.01})))
    assert NoiseSpec.from_dict(spec.to_dict()) == spec
    table = spec.generator_table(3)
    assert table == {"XII": 0.01, "IZZ": 0.02, "IIX": 0.01}
    with pytest.raises(ValueError):
        NoiseSpec((PauliChannel((0,), {}), PauliChannel((0,), {})))
    with pytest.raises(ValueError):
        PauliChannel((0,), {"X": -0.1})


def test_characterize_single_generator(rng):
    spec = NoiseSpec((PauliChannel((0,), {"X": 0.03}),))
    est = characterize(ChannelExecutor(spec, 1), 10**5, [2, 4, 8, 16], rng=rng)
    e = est.channels[0].errors
    assert abs(e["X"] - 0.03) < 0.003
    assert est.source == "characterized"
    for w in "YZ":
        assert abs(e[w]) <= 2 * est.stderr[0][w] + 1e-12


def test_characterize_pair(rng):
    spec = NoiseSpec((PauliChannel((0, 1), {"XI": 0.02, "ZZ": 0.04}),))
    est = characterize(ChannelExecutor(spec, 2), 10**5, [2, 4, 8, 16], rng=rng).channels[0].errors
    assert abs(est["XI"] - 0.02) < 0.002
    assert abs(est["ZZ"] - 0.04) < 0.004


def test_characterize_fails_loudly(rng):
    spec = NoiseSpec((PauliChannel((0,), {"X": 0.5, "Y": 0.5}),))
    with pytest.raises(InsufficientShotsError):
        characterize(ChannelExecutor(spec, 1), 50, [20, 40], rng=rng)
    with pytest.raises(ValueError):
        characterize(ChannelExecutor(spec, 1), 50, [2], rng=rng)


def test_reset_examples(rng):
    spec = ResetSpec((1.0,), p_er=0.0)
    assert np.allclose(spec.channel(1, 1)(random_density_matrix(rng, 1)), density_matrix(basis_state("0")))
    rho = random_density_matrix(rng, 1)
    assert np.allclose(ResetSpec((0.0,)).channel(1, 1)(rho), rho)
    psi = np.array([0.6, 0.8j])
    assert np.array_equal(reset_apply(psi, ResetSpec((0.0,)), 1, rng), psi)
    assert np.isclose(reset_rate(0.05, 0.1), 0.5)


def test_reset_trajectories_match_channel(rng):
    spec = ResetSpec((0.4,), p_er=0.1)
    psi = np.array([0.6, 0.8])
    acc = np.zeros((2, 2), dtype=complex)
    shots = 20000
    for _ in range(shots):
        acc += density_matrix(reset_apply(psi, spec, 1, rng))
    assert np.allclose(acc / shots, spec.channel(1, 1)(psi), atol=0.015)


def test_ad_decomposition():
    terms = ad_decomposition(Rate.constant(0.8))
    assert terms[0].kind == "jump" and terms[1].pauli_op.word == "Z"
    assert np.isclose(terms[1].rate(0.0), 0.2)
    assert ad_decomposition(0.0) == []
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert ad_decomposition(1.0, u=h)[1].pauli_op.word == "X"


@pytest.mark.parametrize("exact", [True, False])
def test_reset_layer_matches_generator(exact):
    gamma, dt = 1.3, 0.01
    spec = ResetSpec.from_rate(gamma, dt, 1, exact=exact, p_er=0.0)
    terms = ad_decomposition(gamma)
    lgen = generator([], RateSchedule(tuple(terms)), 1)(0.0)
    err = np.abs(spec.channel(1, 1).superop - expm(dt * lgen)).max()
    assert err < (1e-13 if exact else 10 * (gamma * dt) ** 2)


def test_reset_probability_rules():
    assert np.isclose(reset_probability(2.0, 0.1), 1 - np.exp(-0.2))
    assert np.isclose(reset_probability(2.0, 0.1, exact=False), 0.2)
    with pytest.raises(ValueError):
        reset_probability(-1.0, 0.1)
    spec = ResetSpec.from_rate(Rate.tanh(1.0, 1.0), 0.1, 3, sample="midpoint")
    assert np.isclose(spec.probabilities[0], 1 - np.exp(-0.1 * (1 + np.tanh(0.05))))
    assert np.isclose(spec.probability(1), spec.probabilities[0] * (1 - 1e-3))
