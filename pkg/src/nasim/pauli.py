"""Dense Pauli algebra, states and channels for small qubit registers.

Conventions used throughout the package:

* qubit 0 is the leftmost tensor factor and the most significant bit of a
  computational-basis index;
* the n-qubit Pauli basis is ordered lexicographically with ``I < X < Y < Z``
  and the leftmost qubit most significant, so PTM dumps are comparable;
* superoperators act on column-stacked vectorized operators,
  ``vec(A rho B) = (B.T kron A) vec(rho)``.

States are plain numpy arrays: a 1-D array of length ``2**n`` is a state
vector, a ``(2**n, 2**n)`` array is a density matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence, Union

import numpy as np

PAULI_LETTERS = "IXYZ"
MAX_DENSE_QUBITS = 8
MAX_SUPEROP_QUBITS = 6

_PHASES = (1, -1, 1j, -1j)

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (a, b) -> (phase, c) with sigma_a sigma_b = phase * sigma_c
_PRODUCT = {}
for _a in PAULI_LETTERS:
    for _b in PAULI_LETTERS:
        _m = _SINGLE[_a] @ _SINGLE[_b]
        for _c in PAULI_LETTERS:
            _ph = np.trace(_SINGLE[_c].conj().T @ _m) / 2
            if abs(abs(_ph) - 1) < 1e-12:
                _PRODUCT[_a, _b] = (complex(np.round(_ph.real) + 1j * np.round(_ph.imag)), _c)
                break


def _canonical_phase(phase) -> complex:
    phase = complex(phase)
    for allowed in _PHASES:
        if abs(phase - allowed) < 1e-12:
            return complex(allowed)
    raise ValueError(f"Pauli phase must be one of +1, -1, +i, -i; got {phase}")


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli word with a phase in {+1, -1, +i, -i}."""

    word: str
    phase: complex = 1

    def __post_init__(self):
        word = self.word.upper()
        if not word or any(c not in PAULI_LETTERS for c in word):
            raise ValueError(f"invalid Pauli word {self.word!r}")
        object.__setattr__(self, "word", word)
        object.__setattr__(self, "phase", _canonical_phase(self.phase))

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse labels such as ``"XZ"``, ``"-YI"`` or ``"+iZ"``."""
        label = label.strip()
        phase = 1
        sign = 1
        if label[:1] in "+-":
            sign = -1 if label[0] == "-" else 1
            label = label[1:]
        if label[:1] == "i":
            phase = 1j
            label = label[1:]
        return cls(label, sign * phase)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls("I" * n)

    @property
    def n(self) -> int:
        return len(self.word)

    @property
    def is_identity(self) -> bool:
        return set(self.word) == {"I"}

    @property
    def is_hermitian(self) -> bool:
        return self.phase.imag == 0

    @property
    def support(self) -> tuple:
        return tuple(q for q, c in enumerate(self.word) if c != "I")

    def canonical(self) -> "PauliString":
        """Same word with the phase dropped."""
        return PauliString(self.word)

    def symplectic(self) -> tuple[np.ndarray, np.ndarray]:
        """Boolean (x, z) vectors; Y has both bits set."""
        x = np.array([c in "XY" for c in self.word], dtype=bool)
        z = np.array([c in "ZY" for c in self.word], dtype=bool)
        return x, z

    def commutes(self, other: "PauliString") -> bool:
        _check_size(self, other)
        return _anticommute_count(self.word, other.word) % 2 == 0

    def matrix(self) -> np.ndarray:
        if self.n > MAX_DENSE_QUBITS:
            raise ValueError(f"dense matrices limited to {MAX_DENSE_QUBITS} qubits")
        out = np.array([[1.0 + 0j]])
        for c in self.word:
            out = np.kron(out, _SINGLE[c])
        return self.phase * out

    def embed(self, qubits: Sequence[int], n: int) -> "PauliString":
        """Place this word on ``qubits`` of an n-qubit register."""
        if len(qubits) != self.n:
            raise ValueError("qubit list must match word length")
        letters = ["I"] * n
        for q, c in zip(qubits, self.word):
            if not 0 <= q < n:
                raise ValueError(f"qubit {q} outside register of {n}")
            letters[q] = c
        return PauliString("".join(letters), self.phase)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_mul(self, other)

    def __neg__(self) -> "PauliString":
        return PauliString(self.word, -self.phase)

    def __str__(self) -> str:
        prefix = {1: "", -1: "-", 1j: "i", -1j: "-i"}[self.phase]
        return prefix + self.word


def _check_size(a: PauliString, b: PauliString):
    if a.n != b.n:
        raise ValueError(f"Pauli size mismatch: {a.n} vs {b.n}")


def _anticommute_count(a: str, b: str) -> int:
    return sum(1 for p, q in zip(a, b) if p != "I" and q != "I" and p != q)


def anticommutes(a: str, b: str) -> bool:
    """True when the Pauli words ``a`` and ``b`` anticommute."""
    return _anticommute_count(a, b) % 2 == 1


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a @ b`` with the phase tracked exactly."""
    _check_size(a, b)
    phase = a.phase * b.phase
    letters = []
    for p, q in zip(a.word, b.word):
        ph, c = _PRODUCT[p, q]
        phase *= ph
        letters.append(c)
    return PauliString("".join(letters), phase)


def pauli_words(n: int) -> list[str]:
    """All 4**n Pauli words in the package's lexicographic order."""
    return ["".join(p) for p in itertools.product(PAULI_LETTERS, repeat=n)]


def nontrivial_words(n: int) -> list[str]:
    return pauli_words(n)[1:]


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> np.ndarray:
    """Stack of Pauli matrices, shape ``(4**n, 2**n, 2**n)``."""
    if n > MAX_SUPEROP_QUBITS:
        raise ValueError(f"Pauli basis limited to {MAX_SUPEROP_QUBITS} qubits")
    mats = np.array([PauliString(w).matrix() for w in pauli_words(n)])
    mats.setflags(write=False)
    return mats


@lru_cache(maxsize=None)
def pauli_action_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Permutation and phase tables for applying any Pauli to state vectors.

    Row ``c`` of both tables corresponds to the Pauli with symplectic code
    ``c = xbits * 2**n + zbits`` (bit ``n-1-q`` of each mask is qubit ``q``).
    ``(P psi)[i] = phase[c, i] * psi[perm[c, i]]`` exactly (Y carries its i).
    """
    dim = 2**n
    idx = np.arange(dim)
    perm = np.empty((dim * dim, dim), dtype=np.intp)
    phase = np.empty((dim * dim, dim), dtype=complex)
    popcount = np.array([bin(i).count("1") for i in range(dim)])
    for xm in range(dim):
        for zm in range(dim):
            c = xm * dim + zm
            src = idx ^ xm
            perm[c] = src
            ny = bin(xm & zm).count("1")
            phase[c] = (1j**ny) * (-1.0) ** popcount[src & zm]
    perm.setflags(write=False)
    phase.setflags(write=False)
    return perm, phase


def symplectic_code(word: str) -> int:
    """Integer code ``xbits * 2**n + zbits`` used by :func:`pauli_action_tables`."""
    n = len(word)
    xm = zm = 0
    for q, c in enumerate(word):
        bit = 1 << (n - 1 - q)
        if c in "XY":
            xm |= bit
        if c in "ZY":
            zm |= bit
    return xm * (1 << n) + zm


def num_qubits(state: np.ndarray) -> int:
    dim = state.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim or (state.ndim == 2 and state.shape[1] != dim) or state.ndim > 2:
        raise ValueError(f"not a qubit state: shape {state.shape}")
    return n


def apply_pauli(state: np.ndarray, p: PauliString) -> np.ndarray:
    """Left-multiply a state vector by ``p`` or conjugate a density matrix."""
    n = num_qubits(state)
    if n != p.n:
        raise ValueError(f"state has {n} qubits, Pauli has {p.n}")
    perm, phase = pauli_action_tables(n)
    c = symplectic_code(p.word)
    if state.ndim == 1:
        return p.phase * phase[c] * state[perm[c]]
    # P rho P^dagger: the global phase cancels.
    out = phase[c][:, None] * state[np.ix_(perm[c], perm[c])] * phase[c].conj()[None, :]
    return out


def expectation(rho: np.ndarray, obs: PauliString) -> float:
    """``Tr(obs rho)`` for a Hermitian Pauli observable."""
    n = num_qubits(rho)
    if n != obs.n:
        raise ValueError(f"state has {n} qubits, observable has {obs.n}")
    if not obs.is_hermitian:
        raise ValueError("observable must have a real phase")
    if rho.ndim == 1:
        val = np.vdot(rho, apply_pauli(rho, obs))
    else:
        perm, phase = pauli_action_tables(n)
        c = symplectic_code(obs.word)
        val = obs.phase * np.sum(phase[c] * rho[perm[c], np.arange(2**n)])
    return float(np.real(val))


def density_matrix(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def basis_state(bits: str) -> np.ndarray:
    """Computational basis vector, e.g. ``basis_state("01")``."""
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[int(bits, 2)] = 1.0
    return vec


def vec(op: np.ndarray) -> np.ndarray:
    return op.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.shape[0])))
    return v.reshape((d, d), order="F")


class Channel:
    """Linear map on n-qubit operators held as a dense superoperator.

    Instances are treated as immutable values; composition returns a new
    channel. ``a @ b`` applies ``b`` first.
    """

    __slots__ = ("superop", "n")

    def __init__(self, superop: np.ndarray, n: int):
        if n > MAX_SUPEROP_QUBITS:
            raise ValueError(f"dense superoperators limited to {MAX_SUPEROP_QUBITS} qubits")
        superop = np.asarray(superop, dtype=complex)
        if superop.shape != (4**n, 4**n):
            raise ValueError(f"superoperator shape {superop.shape} does not match {n} qubits")
        superop.setflags(write=False)
        self.superop = superop
        self.n = n

    @classmethod
    def identity(cls, n: int) -> "Channel":
        return cls(np.eye(4**n), n)

    @classmethod
    def from_kraus(cls, kraus: Iterable[np.ndarray]) -> "Channel":
        kraus = [np.asarray(k, dtype=complex) for k in kraus]
        n = num_qubits(kraus[0])
        sop = sum(np.kron(k.conj(), k) for k in kraus)
        return cls(sop, n)

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "Channel":
        return cls.from_kraus([u])

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], n: int) -> "Channel":
        d = 2**n
        cols = []
        for j in range(d):
            for i in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                cols.append(vec(func(e)))
        return cls(np.array(cols).T, n)

    @classmethod
    def from_ptm(cls, ptm: np.ndarray, n: int) -> "Channel":
        basis = pauli_basis(n)
        b = np.array([vec(p) for p in basis]).T
        return cls(b @ ptm @ b.conj().T / 2**n, n)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        if rho.ndim == 1:
            rho = density_matrix(rho)
        return unvec(self.superop @ vec(rho))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return self.apply(rho)

    def compose(self, other: "Channel") -> "Channel":
        """Channel applying ``other`` first, then ``self``."""
        if other.n != self.n:
            raise ValueError("channel size mismatch")
        return Channel(self.superop @ other.superop, self.n)

    def __matmul__(self, other: "Channel") -> "Channel":
        return self.compose(other)

    def ptm(self) -> np.ndarray:
        return ptm_of_channel(self, self.n)

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ij |i><j| kron E(|i><j|)``."""
        d = 2**self.n
        out = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                out += np.kron(e, self.apply(e))
        return out

    def is_trace_preserving(self, atol: float = 1e-10) -> bool:
        row = self.ptm()[0]
        target = np.zeros_like(row)
        target[0] = 1.0
        return bool(np.allclose(row, target, atol=atol))

    def is_completely_positive(self, atol: float = 1e-10) -> bool:
        return bool(np.linalg.eigvalsh(self.choi()).min() >= -atol)


ChannelLike = Union[Channel, Callable[[np.ndarray], np.ndarray], Sequence[np.ndarray]]


def as_channel(channel, n: int) -> Channel:
    """Coerce channels, objects exposing ``to_channel(n)``, Kraus lists or callables."""
    if isinstance(channel, Channel):
        if channel.n != n:
            raise ValueError(f"channel acts on {channel.n} qubits, expected {n}")
        return channel
    if hasattr(channel, "to_channel"):
        return channel.to_channel(n)
    if callable(channel):
        return Channel.from_function(channel, n)
    return Channel.from_kraus(channel)


def ptm_of_channel(channel, n: int) -> np.ndarray:
    """Pauli transfer matrix ``R_ij = Tr(P_i E(P_j)) / 2**n``."""
    if n > MAX_SUPEROP_QUBITS:
        raise ValueError(f"dense PTM limited to {MAX_SUPEROP_QUBITS} qubits, got {n}")
    ch = as_channel(channel, n)
    basis = pauli_basis(n)
    b = np.array([vec(p) for p in basis]).T
    r = b.conj().T @ ch.superop @ b / 2**n
    return np.real_if_close(r, tol=1e6).real


def pauli_vector(rho: np.ndarray) -> np.ndarray:
    """Real coefficients ``Tr(P_i rho)`` in the package Pauli order."""
    n = num_qubits(rho)
    if rho.ndim == 1:
        rho = density_matrix(rho)
    basis = pauli_basis(n)
    return np.real(np.einsum("kij,ji->k", basis, rho))


def from_pauli_vector(v: np.ndarray) -> np.ndarray:
    n = int(round(np.log(v.shape[0]) / np.log(4)))
    return np.einsum("k,kij->ij", v, pauli_basis(n)) / 2**n
