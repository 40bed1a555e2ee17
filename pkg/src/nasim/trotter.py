"""First-order product-formula circuits for Pauli-sum Hamiltonians.

Terms inside a layer are applied in the order given by the caller; the
first-order formula depends on that order, so it is never reshuffled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .pauli import MAX_DENSE_QUBITS, MAX_SUPEROP_QUBITS, PauliString

TermLike = Union["HamiltonianTerm", tuple]


@dataclass(frozen=True)
class HamiltonianTerm:
    """``coefficient * pauli``; identity terms are rejected (global phase)."""

    coefficient: float
    pauli: PauliString

    def __post_init__(self):
        pauli = self.pauli
        if isinstance(pauli, str):
            pauli = PauliString.from_label(pauli)
        if not pauli.is_hermitian:
            raise ValueError("Hamiltonian terms need a real Pauli phase")
        if pauli.is_identity:
            raise ValueError("identity terms only add a global phase; drop them")
        coefficient = float(self.coefficient) * float(pauli.phase.real)
        if not np.isfinite(coefficient):
            raise ValueError("Hamiltonian coefficient must be finite")
        object.__setattr__(self, "pauli", pauli.canonical())
        object.__setattr__(self, "coefficient", coefficient)

    @property
    def n(self) -> int:
        return self.pauli.n

    def to_pair(self) -> tuple[float, str]:
        return self.coefficient, self.pauli.word


def as_terms(terms: Sequence[TermLike]) -> tuple[HamiltonianTerm, ...]:
    out = tuple(t if isinstance(t, HamiltonianTerm) else HamiltonianTerm(*t) for t in terms)
    if not out:
        raise ValueError("Hamiltonian needs at least one term")
    n = out[0].n
    if any(t.n != n for t in out):
        raise ValueError("all Hamiltonian terms must act on the same number of qubits")
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense simulation limited to {MAX_DENSE_QUBITS} qubits")
    return out


def hamiltonian_matrix(terms: Sequence[TermLike]) -> np.ndarray:
    terms = as_terms(terms)
    return sum(t.coefficient * t.pauli.matrix() for t in terms)


def pauli_rotation(pauli: PauliString, angle: float) -> np.ndarray:
    """``exp(-i angle P) = cos(angle) I - i sin(angle) P`` (exact since P**2 = I)."""
    dim = 2**pauli.n
    return np.cos(angle) * np.eye(dim) - 1j * np.sin(angle) * pauli.matrix()


@dataclass(frozen=True)
class TrotterLayer:
    """Ordered rotations ``(angle, pauli)`` plus their dense product."""

    gates: tuple
    matrix: np.ndarray = field(repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.gates[0][1].n


def build_trotter_layer(terms: Sequence[TermLike], dt: float) -> TrotterLayer:
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    terms = as_terms(terms)
    gates = tuple((t.coefficient * dt, t.pauli) for t in terms)
    u = np.eye(2 ** terms[0].n, dtype=complex)
    for angle, p in gates:
        # later terms act after earlier ones
        u = pauli_rotation(p, angle) @ u
    u.setflags(write=False)
    return TrotterLayer(gates, u)


def exact_unitary(terms: Sequence[TermLike], t: float) -> np.ndarray:
    return expm(-1j * t * hamiltonian_matrix(terms))


def trotter_defect(terms: Sequence[TermLike], dt: float, layers: int) -> float:
    """Operator-norm distance between ``layers`` Trotter layers and ``exp(-iHt)``."""
    terms = as_terms(terms)
    if terms[0].n > MAX_SUPEROP_QUBITS:
        raise ValueError(f"defect check limited to {MAX_SUPEROP_QUBITS} qubits")
    layer = build_trotter_layer(terms, dt).matrix
    product = np.linalg.matrix_power(layer, layers)
    return float(np.linalg.norm(product - exact_unitary(terms, layers * dt), ord=2))


_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class Filler:
    """Self-cancelling gate pad inserted into every layer to expose device noise.

    ``kind`` is ``"x"`` (``count`` X gates on one qubit) or ``"cnot"``
    (``count`` CNOTs on an ordered qubit pair). Only the count and kind are
    tracked; the pad is never multiplied into the layer unitary.
    """

    kind: str
    count: int
    qubits: tuple

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = {"x": 1, "cnot": 2}.get(self.kind)
        if arity is None:
            raise ValueError(f"unknown filler kind {self.kind!r}")
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} pad needs {arity} qubit(s)")
        if self.count < 0 or self.count % 2:
            raise ValueError("self-cancelling pads need an even, non-negative gate count")

    def unitary(self, n: int) -> np.ndarray:
        """Dense product of the pad, used only to check it cancels."""
        gate = _X if self.kind == "x" else _CNOT
        full = _embed(gate, self.qubits, n)
        return np.linalg.matrix_power(full, self.count)


def _embed(gate: np.ndarray, qubits: tuple, n: int) -> np.ndarray:
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    order = list(qubits) + rest
    op = np.kron(gate, np.eye(2 ** (n - k)))
    op = op.reshape([2] * (2 * n))
    inv = np.argsort(order)
    op = op.transpose(list(inv) + [n + i for i in inv])
    return op.reshape(2**n, 2**n)


@dataclass(frozen=True)
class TrotterPlan:
    """Layered circuit skeleton: terms, time step, depth and noise locations.

    ``noise_slots`` is the per-layer list of qubit locations carrying device
    channels; it is the same for every layer.
    """

    terms: tuple
    dt: float
    layers: int
    noise_slots: tuple
    filler: Optional[Filler] = None

    def __post_init__(self):
        object.__setattr__(self, "terms", as_terms(self.terms))
        object.__setattr__(self, "noise_slots", tuple(tuple(s) for s in self.noise_slots))
        if self.layers < 0:
            raise ValueError("layer count must be non-negative")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive and finite")
        n = self.n
        for slot in self.noise_slots:
            if any(not 0 <= q < n for q in slot):
                raise ValueError(f"noise slot {slot} outside {n}-qubit register")

    @classmethod
    def for_time(cls, terms, t_final: float, dt: float, noise_slots, filler=None) -> "TrotterPlan":
        layers = int(round(t_final / dt))
        if abs(layers * dt - t_final) > 1e-12 * max(1.0, abs(t_final)):
            raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
        return cls(terms, dt, layers, noise_slots, filler)

    @property
    def n(self) -> int:
        return self.terms[0].n

    @property
    def total_time(self) -> float:
        return self.layers * self.dt

    def layer(self) -> TrotterLayer:
        return build_trotter_layer(self.terms, self.dt)
