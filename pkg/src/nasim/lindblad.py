"""Classical integrator for GKSL equations with time-dependent rates.

The generator is

    L(t) rho = -i [H, rho] + sum_k Gamma_k(t) (V_k rho V_k^+ - 1/2 {V_k^+ V_k, rho})

with a time-independent Hamiltonian. For Pauli terms ``V_k = P_k`` this is
``Gamma_k (P rho P - rho)``. Rates may be negative; nothing here assumes
complete positivity of the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .pauli import MAX_SUPEROP_QUBITS, PauliString, density_matrix, num_qubits, pauli_basis
from .trotter import as_terms, hamiltonian_matrix

_RATE_KINDS = ("constant", "tanh", "damped_cosine", "table", "sum")


@dataclass(frozen=True)
class Rate:
    """Scalar rate function of time, described by a tag and parameters.

    Kinds and parameters:

    ``constant``       value
    ``tanh``           offset + amplitude * tanh(t)
    ``damped_cosine``  amplitude * exp(-decay t) * cos(omega t + phase) + offset
    ``table``          linear interpolation through (times, values)
    ``sum``            sum of the rates listed in ``terms``
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _RATE_KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        params = dict(self.params)
        if self.kind == "table":
            times = np.asarray(params["times"], dtype=float)
            values = np.asarray(params["values"], dtype=float)
            if times.shape != values.shape or times.ndim != 1 or len(times) < 2:
                raise ValueError("table rates need matching 1-D times/values of length >= 2")
            if np.any(np.diff(times) <= 0):
                raise ValueError("table times must increase strictly")
            params = {"times": times.tolist(), "values": values.tolist()}
        elif self.kind == "sum":
            params = {"terms": [r if isinstance(r, Rate) else Rate.from_dict(r) for r in params["terms"]]}
        object.__setattr__(self, "params", params)

    @classmethod
    def constant(cls, value: float) -> "Rate":
        return cls("constant", {"value": float(value)})

    @classmethod
    def tanh(cls, offset: float = 0.0, amplitude: float = 1.0) -> "Rate":
        return cls("tanh", {"offset": float(offset), "amplitude": float(amplitude)})

    @classmethod
    def damped_cosine(cls, amplitude, decay, omega, phase=0.0, offset=0.0) -> "Rate":
        return cls(
            "damped_cosine",
            {"amplitude": amplitude, "decay": decay, "omega": omega, "phase": phase, "offset": offset},
        )

    @classmethod
    def table(cls, times, values) -> "Rate":
        return cls("table", {"times": times, "values": values})

    def __call__(self, t):
        p = self.params
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, p["value"])
        elif self.kind == "tanh":
            out = p["offset"] + p["amplitude"] * np.tanh(t)
        elif self.kind == "damped_cosine":
            out = p["amplitude"] * np.exp(-p["decay"] * t) * np.cos(p["omega"] * t + p["phase"]) + p["offset"]
        elif self.kind == "table":
            out = np.interp(t, p["times"], p["values"])
        else:
            out = np.asarray(sum(r(t) for r in p["terms"]), dtype=float)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "Rate":
        p = self.params
        if self.kind == "constant":
            return Rate.constant(p["value"] * factor)
        if self.kind == "tanh":
            return Rate.tanh(p["offset"] * factor, p["amplitude"] * factor)
        if self.kind == "damped_cosine":
            q = dict(p, amplitude=p["amplitude"] * factor, offset=p["offset"] * factor)
            return Rate("damped_cosine", q)
        if self.kind == "table":
            return Rate.table(p["times"], [v * factor for v in p["values"]])
        return Rate("sum", {"terms": [r.scaled(factor) for r in p["terms"]]})

    def __add__(self, other: "Rate") -> "Rate":
        return Rate("sum", {"terms": [self, other]})

    @property
    def is_zero(self) -> bool:
        if self.kind == "constant":
            return self.params["value"] == 0.0
        if self.kind == "sum":
            return all(r.is_zero for r in self.params["terms"])
        return False

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "sum":
            return all(r.is_constant for r in self.params["terms"])
        return False

    def to_dict(self) -> dict:
        if self.kind == "sum":
            return {"kind": "sum", "terms": [r.to_dict() for r in self.params["terms"]]}
        return {"kind": self.kind, **{k: v for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d) -> "Rate":
        if isinstance(d, (int, float)):
            return cls.constant(d)
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)


def as_rate(value) -> Rate:
    if isinstance(value, Rate):
        return value
    return Rate.from_dict(value)


@dataclass(frozen=True)
class DissipatorTerm:
    """One GKSL channel: a Pauli conjugation or a jump ``|ket><bra|`` on one qubit.

    Use :meth:`pauli` or :meth:`jump` to build instances.
    """

    kind: str
    rate: Rate
    pauli_op: Optional[PauliString] = None
    ket: Optional[tuple] = None
    bra: Optional[tuple] = None
    qubit: Optional[int] = None

    @classmethod
    def pauli(cls, word, rate) -> "DissipatorTerm":
        p = word if isinstance(word, PauliString) else PauliString(word)
        if p.is_identity:
            raise ValueError("identity Pauli gives a vanishing dissipator")
        return cls("pauli", as_rate(rate), pauli_op=p.canonical())

    @classmethod
    def jump(cls, ket, bra, rate, qubit: int = 0) -> "DissipatorTerm":
        ket = np.asarray(ket, dtype=complex)
        bra = np.asarray(bra, dtype=complex)
        for v in (ket, bra):
            if v.shape != (2,) or abs(np.linalg.norm(v) - 1) > 1e-12:
                raise ValueError("jump ket/bra must be normalized single-qubit vectors")
        return cls("jump", as_rate(rate), ket=tuple(ket), bra=tuple(bra), qubit=int(qubit))

    def operator(self, n: int) -> np.ndarray:
        if self.kind == "pauli":
            if self.pauli_op.n != n:
                raise ValueError(f"term acts on {self.pauli_op.n} qubits, system has {n}")
            return self.pauli_op.matrix()
        if not 0 <= self.qubit < n:
            raise ValueError(f"jump qubit {self.qubit} outside {n}-qubit register")
        local = np.outer(np.array(self.ket), np.array(self.bra).conj())
        return np.kron(np.kron(np.eye(2**self.qubit), local), np.eye(2 ** (n - self.qubit - 1)))

    def superop(self, n: int) -> np.ndarray:
        """Unit-rate dissipator superoperator (column-stacking convention)."""
        v = self.operator(n)
        eye = np.eye(2**n)
        vdv = v.conj().T @ v
        return np.kron(v.conj(), v) - 0.5 * (np.kron(eye, vdv) + np.kron(vdv.T, eye))

    def to_dict(self) -> dict:
        if self.kind == "pauli":
            return {"pauli": self.pauli_op.word, "rate": self.rate.to_dict()}
        enc = lambda v: [[float(np.real(c)), float(np.imag(c))] for c in v]
        return {"jump": {"ket": enc(self.ket), "bra": enc(self.bra), "qubit": self.qubit}, "rate": self.rate.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DissipatorTerm":
        if "pauli" in d:
            return cls.pauli(d["pauli"], Rate.from_dict(d["rate"]))
        j = d["jump"]
        dec = lambda v: [complex(a, b) for a, b in v]
        return cls.jump(dec(j["ket"]), dec(j["bra"]), Rate.from_dict(d["rate"]), j.get("qubit", 0))


@dataclass(frozen=True)
class RateSchedule:
    """Dissipator terms plus the rule used to sample rates once per layer.

    ``sample="right"`` evaluates layer ``d`` (1-based) at ``t = d * dt``;
    ``sample="midpoint"`` uses ``t = (d - 1/2) * dt``.
    """

    terms: tuple
    sample: str = "right"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.sample not in ("right", "midpoint"):
            raise ValueError("sample must be 'right' or 'midpoint'")

    def rates_at(self, t: float) -> np.ndarray:
        return np.array([term.rate(t) for term in self.terms], dtype=float)

    def sample_times(self, dt: float, layers: int) -> np.ndarray:
        d = np.arange(1, layers + 1, dtype=float)
        return d * dt if self.sample == "right" else (d - 0.5) * dt

    def discretize(self, dt: float, layers: int) -> np.ndarray:
        """Per-layer rates, shape ``(layers, len(terms))``."""
        times = self.sample_times(dt, layers)
        if not self.terms:
            return np.zeros((layers, 0))
        return np.array([[term.rate(t) for term in self.terms] for t in times], dtype=float).reshape(layers, -1)


@dataclass
class LindbladTrajectory:
    times: np.ndarray
    states: np.ndarray

    def expectations(self, paulis: Sequence) -> np.ndarray:
        """Real expectations, shape ``(len(times), len(paulis))``."""
        mats = [PauliString.from_label(p).matrix() if isinstance(p, str) else p.matrix() for p in paulis]
        return np.array([[np.real(np.trace(m @ rho)) for m in mats] for rho in self.states])

    def populations(self, basis: Optional[np.ndarray] = None) -> np.ndarray:
        if basis is None:
            return np.real(np.einsum("tii->ti", self.states))
        return np.real(np.einsum("ia,tij,ja->ta", basis.conj(), self.states, basis))

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not on the trajectory grid")
        return self.states[i]


def _hamiltonian_superop(h_terms, n: int) -> np.ndarray:
    eye = np.eye(2**n)
    if not h_terms:
        return np.zeros((4**n, 4**n), dtype=complex)
    h = hamiltonian_matrix(h_terms)
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def generator(h_terms, schedule: RateSchedule, n: int):
    """Return ``L(t)`` as a callable producing the dense superoperator."""
    lh = _hamiltonian_superop(h_terms, n)
    dissipators = [term.superop(n) for term in schedule.terms]

    def at(t: float) -> np.ndarray:
        rates = schedule.rates_at(t)
        if not np.all(np.isfinite(rates)):
            raise FloatingPointError(f"non-finite rate at t={t}: {rates}")
        out = lh.copy()
        for g, d in zip(rates, dissipators):
            out += g * d
        return out

    return at


def integrate(
    h_terms,
    schedule,
    rho0: np.ndarray,
    t_final: float,
    dt_int: float,
    method: str = "rk4",
    store_every: int = 1,
) -> LindbladTrajectory:
    """Integrate the master equation from ``t = 0`` to ``t_final``.

    ``method="rk4"`` is the classical fourth-order Runge-Kutta scheme with
    the time-dependent generator sampled at the step start, midpoint and
    end. ``method="expm"`` freezes the generator at each step midpoint and
    exponentiates it, which is exact for time-independent generators.
    The returned grid holds every ``store_every``-th step including both ends.
    """
    if not dt_int > 0:
        raise ValueError("dt_int must be positive")
    if not isinstance(schedule, RateSchedule):
        schedule = RateSchedule(tuple(schedule))
    if rho0.ndim == 1:
        rho0 = density_matrix(rho0)
    n = num_qubits(rho0)
    if n > MAX_SUPEROP_QUBITS:
        raise ValueError(f"integrator limited to {MAX_SUPEROP_QUBITS} qubits")
    h_terms = as_terms(h_terms) if h_terms else ()
    steps = int(round(t_final / dt_int))
    if abs(steps * dt_int - t_final) > 1e-9 * max(1.0, t_final):
        steps = int(np.ceil(t_final / dt_int))
    h = t_final / steps if steps else 0.0
    lgen = generator(h_terms, schedule, n)
    x = rho0.reshape(-1, order="F").astype(complex)
    times = [0.0]
    states = [rho0.astype(complex)]
    static = not schedule.terms or all(term.rate.is_constant for term in schedule.terms)
    cached = lgen(0.0) if static else None
    prop = expm(h * cached) if (static and method == "expm" and steps) else None
    for s in range(steps):
        t = s * h
        if method == "rk4":
            if static:
                l0 = lm = l1 = cached
            else:
                l0, lm, l1 = lgen(t), lgen(t + h / 2), lgen(t + h)
            k1 = l0 @ x
            k2 = lm @ (x + h / 2 * k1)
            k3 = lm @ (x + h / 2 * k2)
            k4 = l1 @ (x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        elif method == "expm":
            x = (prop if prop is not None else expm(h * lgen(t + h / 2))) @ x
        else:
            raise ValueError(f"unknown method {method!r}")
        if (s + 1) % store_every == 0 or s + 1 == steps:
            times.append((s + 1) * h)
            states.append(x.reshape(rho0.shape, order="F").copy())
    return LindbladTrajectory(np.array(times), np.array(states))


def single_qubit_term(letter: str, qubit: int, n: int, rate) -> DissipatorTerm:
    return DissipatorTerm.pauli(PauliString(letter).embed([qubit], n), rate)


def eternal_dissipator(qubit: int = 0, n: int = 1) -> list[DissipatorTerm]:
    """Rates ``(1, 1, -tanh t)`` on ``(X, Y, Z)``; the Z rate is negative for ``t > 0``."""
    return [
        single_qubit_term("X", qubit, n, Rate.constant(1.0)),
        single_qubit_term("Y", qubit, n, Rate.constant(1.0)),
        single_qubit_term("Z", qubit, n, Rate.tanh(0.0, -1.0)),
    ]


def comp_dissipator(qubit: int = 0, n: int = 1) -> list[DissipatorTerm]:
    """Time-independent comparison model: rate 2 on each of X, Y, Z."""
    return [single_qubit_term(c, qubit, n, Rate.constant(2.0)) for c in "XYZ"]


# Placeholder non-Markovian dephasing rate: a damped oscillation that
# dips below zero once before settling. Not taken from a closed form.
DEFAULT_GAMMA_Z = Rate.damped_cosine(amplitude=0.6, decay=1.0, omega=2 * np.pi, phase=0.0, offset=0.15)


def oscillating_dissipator(gamma_z: Optional[Rate] = None, gamma_xy: float = 0.2, n: int = 2) -> list[DissipatorTerm]:
    """Per-qubit Z dephasing at ``gamma_z(t)`` plus X and Y terms at ``gamma_xy``."""
    gamma_z = DEFAULT_GAMMA_Z if gamma_z is None else as_rate(gamma_z)
    terms = []
    for m in range(n):
        terms.append(single_qubit_term("Z", m, n, gamma_z))
    for m in range(n):
        terms.append(single_qubit_term("X", m, n, Rate.constant(gamma_xy)))
        terms.append(single_qubit_term("Y", m, n, Rate.constant(gamma_xy)))
    return terms


KET0 = (1.0, 0.0)
KET1 = (0.0, 1.0)


def ad_num_dissipator(gamma_ad: Optional[Rate] = None, gamma_z: float = 1.0) -> list[DissipatorTerm]:
    """Decay ``|0><1|`` at ``gamma_ad(t)`` (default ``1 + tanh t``) plus Z dephasing."""
    gamma_ad = Rate.tanh(1.0, 1.0) if gamma_ad is None else as_rate(gamma_ad)
    terms = []
    if not gamma_ad.is_zero:
        terms.append(DissipatorTerm.jump(KET0, KET1, gamma_ad, qubit=0))
    terms.append(DissipatorTerm.pauli("Z", Rate.constant(gamma_z)))
    return terms


def lindblad_ptm(h_terms, rates: dict, n: int, dt: float) -> np.ndarray:
    """PTM of ``exp(dt L)`` for constant Pauli ``rates`` (word -> rate)."""
    schedule = RateSchedule(tuple(DissipatorTerm.pauli(w, Rate.constant(g)) for w, g in rates.items()))
    lgen = generator(as_terms(h_terms) if h_terms else (), schedule, n)(0.0)
    basis = pauli_basis(n)
    b = np.array([p.reshape(-1, order="F") for p in basis]).T
    return np.real(b.conj().T @ expm(dt * lgen) @ b) / 2**n

