"""Monte-Carlo executor for noisy, mitigated Trotter circuits.

Each shot carries a pure state through D layers:

    layer unitary -> device Paulis -> mitigation / amplification Paulis -> reset

Pauli insertions are tracked as a symplectic frame per shot (XOR of codes)
and applied with one gather per layer; inverse-branch insertions flip the
shot's sign. Shots run in fixed-size chunks, each with its own RNG stream
derived from ``(seed, point, chunk)``, so results do not depend on the
thread schedule.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .mitigation import MitigationPlan, amplification_probability
from .noise import NoiseSpec, ResetSpec, flip_probability
from .pauli import (
    PauliString,
    anticommutes,
    from_pauli_vector,
    pauli_action_tables,
    pauli_basis,
    pauli_vector,
    pauli_words,
    symplectic_code,
)
from .trotter import TrotterPlan

CHUNK = 4096
EXACT_MAX_QUBITS = 4


# -- measurement bases -------------------------------------------------------

_S = 1 / np.sqrt(2)
# columns: (|00>+|11>), (|01>+|10>), (|01>-|10>), (|00>-|11>)
BELL_BASIS = np.array(
    [[_S, 0, 0, _S], [0, _S, _S, 0], [0, _S, -_S, 0], [_S, 0, 0, -_S]], dtype=complex
)
BELL_LABELS = ("Psi+", "Phi+", "Phi-", "Psi-")


def bell_state(label: str = "Psi+") -> np.ndarray:
    return BELL_BASIS[:, BELL_LABELS.index(label)].copy()


def basis_matrix(basis: str, n: int) -> np.ndarray:
    """Columns are the measurement basis vectors."""
    if basis == "computational":
        return np.eye(2**n, dtype=complex)
    if basis == "bell":
        if n != 2:
            raise ValueError("the Bell basis needs exactly 2 qubits")
        return BELL_BASIS
    raise ValueError(f"unknown basis {basis!r}")


def basis_labels(basis: str, n: int) -> list[str]:
    if basis == "bell":
        return list(BELL_LABELS)
    return [format(i, f"0{n}b") for i in range(2**n)]


def population_measurement(state: np.ndarray, basis: str = "computational") -> np.ndarray:
    """Populations of a state vector or density matrix in ``basis``."""
    dim = state.shape[0]
    n = int(round(np.log2(dim)))
    b = basis_matrix(basis, n)
    if state.ndim == 1:
        probs = np.abs(b.conj().T @ state) ** 2
        probs /= np.vdot(state, state).real
    else:
        probs = np.real(np.einsum("ji,jk,ki->i", b.conj(), state, b))
        probs /= np.real(np.trace(state))
    return probs


# -- observables -------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """Hermitian observable with its eigen-decomposition for projective sampling."""

    label: str
    matrix: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError(f"observable {self.label} must be a Hermitian matrix")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def pauli(cls, p: Union[str, PauliString]) -> "Observable":
        p = PauliString.from_label(p) if isinstance(p, str) else p
        return cls(str(p), p.matrix())

    @classmethod
    def projector(cls, vector: np.ndarray, label: str) -> "Observable":
        v = np.asarray(vector, dtype=complex)
        return cls(label, np.outer(v, v.conj()))

    @property
    def support(self) -> tuple:
        """Qubits the observable acts on nontrivially."""
        n = int(round(np.log2(self.matrix.shape[0])))
        coeffs = np.einsum("pij,ji->p", pauli_basis(n), self.matrix)
        words = [w for w, c in zip(pauli_words(n), coeffs) if abs(c) > 1e-12 and set(w) != {"I"}]
        return tuple(sorted({q for w in words for q, c in enumerate(w) if c != "I"}))


def population_observables(basis: str, n: int) -> list[Observable]:
    b = basis_matrix(basis, n)
    return [Observable.projector(b[:, i], lab) for i, lab in enumerate(basis_labels(basis, n))]


# -- plans and results -------------------------------------------------------


@dataclass(frozen=True)
class SimulationPlan:
    """Everything one shot needs: circuit, device noise, mitigation, optional reset.

    The device samples ``noise``; mitigation samples the plan's own eps,
    which differ from the device's when the plan was built from a
    characterized estimate.
    """

    trotter: TrotterPlan
    noise: NoiseSpec
    mitigation: MitigationPlan
    initial_state: np.ndarray = field(repr=False, compare=False)
    reset: Optional[ResetSpec] = None

    def __post_init__(self):
        n = self.trotter.n
        psi = np.asarray(self.initial_state, dtype=complex)
        if psi.shape != (2**n,):
            raise ValueError(f"initial state must be a {n}-qubit vector")
        if not np.isclose(np.linalg.norm(psi), 1.0, atol=1e-12):
            raise ValueError("initial state must be normalized")
        object.__setattr__(self, "initial_state", psi)
        if tuple(self.noise.slots) != tuple(self.mitigation.slots):
            raise ValueError("mitigation plan and device noise cover different slots")
        if set(self.trotter.noise_slots) != set(self.noise.slots):
            raise ValueError("circuit noise slots differ from device noise slots")
        if self.mitigation.layers < self.trotter.layers:
            raise ValueError("mitigation plan is shorter than the circuit")
        if self.reset is not None:
            if not 0 <= self.reset.qubit < n:
                raise ValueError(f"reset qubit {self.reset.qubit} outside {n}-qubit register")
            if len(self.reset.probabilities) < self.trotter.layers:
                raise ValueError("reset schedule is shorter than the circuit")

    @property
    def n(self) -> int:
        return self.trotter.n

    @property
    def layers(self) -> int:
        return self.trotter.layers

    def total_cost(self, layers: Optional[int] = None) -> float:
        layers = self.layers if layers is None else layers
        if layers == 0:
            return 1.0
        return self.mitigation.truncated(layers).total_cost()

    def layer_tables(self, layer: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(codes, probabilities, flips_sign)`` of every Pauli insertion in ``layer``."""
        n = self.n
        codes, probs, neg = [], [], []
        for i, ch in enumerate(self.noise.channels):
            r = self.mitigation.factors(layer, i)
            for g, e_dev, e, f in zip(ch.generators, ch.eps_vector(), self.mitigation.eps[i], r):
                code = symplectic_code(PauliString(g).embed(ch.location, n).word)
                if e_dev > 0:
                    codes.append(code)
                    probs.append(flip_probability(e_dev))
                    neg.append(False)
                if f > 0 and e > 0:
                    codes.append(code)
                    probs.append(flip_probability(f * e))
                    neg.append(True)
                elif f < 0 and e > 0:
                    codes.append(code)
                    probs.append(amplification_probability(e, f))
                    neg.append(False)
        return np.array(codes, dtype=np.int64), np.array(probs, dtype=float), np.array(neg, dtype=bool)


@dataclass(frozen=True)
class ShotRecord:
    sign: int
    value: float


@dataclass(frozen=True)
class TrajectoryEstimate:
    """Aggregated signed samples for one observable at one time point."""

    observable: str
    layers: int
    time: float
    mean: float
    std: float
    shots: int
    c_tot: float
    seed: int

    @property
    def estimate(self) -> float:
        return self.c_tot * self.mean

    @property
    def stderr(self) -> float:
        return float(self.c_tot * self.std / np.sqrt(self.shots))

    def to_row(self) -> dict:
        return {
            "t": self.time,
            "observable": self.observable,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "C_tot": self.c_tot,
            "shots": self.shots,
            "seed": self.seed,
            "layers": self.layers,
        }


# -- vectorized shot evolution -----------------------------------------------


def _apply_local(states: np.ndarray, op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    s = states.reshape(states.shape[0], 2**qubit, 2, 2 ** (n - qubit - 1))
    return np.einsum("ab,sibj->siaj", op, s).reshape(states.shape)


def _reset_step(states, spec: ResetSpec, layer: int, n: int, rng: np.random.Generator):
    u = rng.random((states.shape[0], 3))
    fire = (u[:, 0] < spec.probabilities[layer - 1]) & ~(u[:, 1] < spec.p_er)
    if not fire.any():
        return states
    k0 = spec.v @ np.array([[1, 0], [0, 0]], dtype=complex) @ spec.u.conj().T
    k1 = spec.v @ np.array([[0, 1], [0, 0]], dtype=complex) @ spec.u.conj().T
    sub = states[fire]
    a0 = _apply_local(sub, k0, spec.qubit, n)
    a1 = _apply_local(sub, k1, spec.qubit, n)
    p0 = np.einsum("si,si->s", a0.conj(), a0).real
    pick0 = u[fire, 2] < p0
    out = np.where(pick0[:, None], a0, a1)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    states = states.copy()
    states[fire] = out
    return states


def _measure(states, observables: Sequence[Observable], mode: str, rng: np.random.Generator) -> np.ndarray:
    """Per-shot values, shape ``(len(observables), S)``."""
    out = np.empty((len(observables), states.shape[0]))
    for j, obs in enumerate(observables):
        if mode == "expectation":
            out[j] = np.einsum("si,ij,sj->s", states.conj(), obs.matrix, states).real
        elif mode == "projective":
            evals, evecs = np.linalg.eigh(obs.matrix)
            probs = np.abs(states @ evecs.conj()) ** 2
            cdf = np.cumsum(probs, axis=1)
            u = rng.random(states.shape[0])[:, None] * cdf[:, -1:]
            pick = np.minimum((u > cdf).sum(axis=1), len(evals) - 1)
            out[j] = evals[pick]
        else:
            raise ValueError(f"unknown measurement mode {mode!r}")
    return out


def _evolve(plan: SimulationPlan, layer_tables, layers: int, size: int, rng: np.random.Generator):
    """Carry ``size`` shots through ``layers`` layers; returns ``(states, sign)``."""
    n = plan.n
    perm, phase = pauli_action_tables(n)
    umat_t = plan.trotter.layer().matrix.T
    states = np.tile(plan.initial_state, (size, 1))
    sign = np.ones(size)
    for d in range(1, layers + 1):
        states = states @ umat_t
        codes, probs, neg = layer_tables[d - 1]
        if codes.size:
            fired = rng.random((size, codes.size)) < probs
            frame = np.bitwise_xor.reduce(np.where(fired, codes, 0), axis=1)
            sign *= 1 - 2 * ((fired & neg).sum(axis=1) & 1)
            moved = frame != 0
            if moved.any():
                f = frame[moved]
                states[moved] = np.take_along_axis(states[moved], perm[f], axis=1) * phase[f]
        if plan.reset is not None:
            states = _reset_step(states, plan.reset, d, n, rng)
    return states, sign


def _run_chunk(plan: SimulationPlan, layer_tables, layers: int, observables, mode: str, size: int, seed_seq):
    rng = np.random.default_rng(seed_seq)
    states, sign = _evolve(plan, layer_tables, layers, size, rng)
    values = _measure(states, observables, mode, rng) * sign
    mean = values.mean(axis=1)
    return mean, ((values - mean[:, None]) ** 2).sum(axis=1), size


def default_threads() -> int:
    env = os.environ.get("NASIM_THREADS")
    return max(1, int(env)) if env else 1


def run(
    plan: SimulationPlan,
    observables: Sequence[Union[Observable, str, PauliString]],
    shots: int,
    seed: int,
    layers: Optional[int] = None,
    mode: str = "expectation",
    threads: Optional[int] = None,
    stream: int = 0,
    chunk: int = CHUNK,
) -> list[TrajectoryEstimate]:
    """Estimate observables after ``layers`` layers (default: the whole circuit).

    ``stream`` separates independent runs sharing a master seed (e.g. one
    per time point). Output is bit-identical for fixed ``(seed, stream,
    shots, chunk)`` regardless of ``threads``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    layers = plan.layers if layers is None else int(layers)
    if not 0 <= layers <= plan.layers:
        raise ValueError(f"layers must lie in [0, {plan.layers}]")
    obs = [o if isinstance(o, Observable) else Observable.pauli(o) for o in observables]
    dim = 2**plan.n
    for o in obs:
        if o.matrix.shape != (dim, dim):
            raise ValueError(f"observable {o.label} does not act on {plan.n} qubits")
    tables = [plan.layer_tables(d) for d in range(1, layers + 1)]
    sizes = [chunk] * (shots // chunk) + ([shots % chunk] if shots % chunk else [])
    seqs = [np.random.SeedSequence(seed, spawn_key=(stream, i)) for i in range(len(sizes))]
    threads = default_threads() if threads is None else max(1, int(threads))
    args = [(plan, tables, layers, obs, mode, s, q) for s, q in zip(sizes, seqs)]
    if threads > 1 and len(args) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), args))
    else:
        parts = [_run_chunk(*a) for a in args]
    # pairwise mean/M2 merge in fixed chunk order: stable and deterministic
    mean, m2, count = parts[0]
    for m_b, m2_b, n_b in parts[1:]:
        total = count + n_b
        delta = m_b - mean
        mean = mean + delta * (n_b / total)
        m2 = m2 + m2_b + delta**2 * (count * n_b / total)
        count = total
    std = np.sqrt(m2 / (shots - 1)) if shots > 1 else np.zeros(len(obs))
    c_tot = plan.total_cost(layers)
    t = layers * plan.trotter.dt
    return [
        TrajectoryEstimate(o.label, layers, t, float(m), float(s), shots, c_tot, seed)
        for o, m, s in zip(obs, mean, std)
    ]


def shot_records(plan: SimulationPlan, observable, shots: int, seed: int, mode: str = "expectation") -> list[ShotRecord]:
    """Per-shot signs and values for inspection (one chunk, same stream as :func:`run`)."""
    obs = observable if isinstance(observable, Observable) else Observable.pauli(observable)
    tables = [plan.layer_tables(d) for d in range(1, plan.layers + 1)]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, 0)))
    states, sign = _evolve(plan, tables, plan.layers, shots, rng)
    values = _measure(states, [obs], mode, rng)[0]
    return [ShotRecord(int(s), float(v)) for s, v in zip(sign, values)]


# -- exact oracle ------------------------------------------------------------


def layer_noise_diagonal(plan: SimulationPlan, layer: int) -> np.ndarray:
    """Pauli-transfer eigenvalues of device noise plus mitigation in ``layer``."""
    words = pauli_words(plan.n)
    diag = np.ones(len(words))
    for i, ch in enumerate(plan.noise.channels):
        residual = ch.eps_vector() - plan.mitigation.factors(layer, i) * plan.mitigation.eps[i]
        for g, res in zip(ch.generators, residual):
            if res == 0:
                continue
            full = PauliString(g).embed(ch.location, plan.n).word
            mask = np.array([anticommutes(w, full) for w in words])
            diag[mask] *= np.exp(-2 * res)
    return diag


def exact_mitigated_expectation(plan: SimulationPlan, observable, layers: Optional[int] = None) -> float:
    """Value the normalized estimator converges to, by exact PTM composition."""
    n = plan.n
    if n > EXACT_MAX_QUBITS:
        raise ValueError(f"exact composition limited to {EXACT_MAX_QUBITS} qubits")
    layers = plan.layers if layers is None else int(layers)
    if not 0 <= layers <= plan.layers:
        raise ValueError(f"layers must lie in [0, {plan.layers}]")
    obs = observable if isinstance(observable, Observable) else Observable.pauli(observable)
    u = plan.trotter.layer().matrix
    basis = pauli_basis(n)
    dim = 2**n
    # R_ij = Tr(P_i U P_j U^dagger) / 2**n
    r_u = np.real(np.einsum("iab,bc,jcd,ad->ij", basis, u, basis, u.conj())) / dim
    v = pauli_vector(np.outer(plan.initial_state, plan.initial_state.conj()))
    for d in range(1, layers + 1):
        v = layer_noise_diagonal(plan, d) * (r_u @ v)
        if plan.reset is not None:
            v = pauli_vector(plan.reset.channel(d, n)(from_pauli_vector(v)))
    rho = from_pauli_vector(v)
    return float(np.real(np.trace(obs.matrix @ rho)))
