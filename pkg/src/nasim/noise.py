"""Emulated device noise: stochastic Pauli channels, twirling, characterization, reset.

A Pauli channel on a location (one qubit or a nearest-neighbour pair) is the
product over its generators ``P_k`` of

    rho -> w_k rho + (1 - w_k) P_k rho P_k,    w_k = (1 + exp(-2 eps_k)) / 2,

so a Pauli ``Q`` picks up the transfer-matrix eigenvalue
``exp(-2 sum_{k: {P_k, Q} = 0} eps_k)``. Per layer of duration ``dt`` this is
exactly the Lindblad dissipator with rates ``eps_k / dt``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .lindblad import DissipatorTerm, Rate, as_rate
from .pauli import (
    Channel,
    PauliString,
    anticommutes,
    apply_pauli,
    as_channel,
    nontrivial_words,
    num_qubits,
    pauli_words,
    ptm_of_channel,
)

logger = logging.getLogger(__name__)


def flip_probability(eps):
    """``1 - w = (1 - exp(-2 eps)) / 2``."""
    return 0.5 * (1.0 - np.exp(-2.0 * np.asarray(eps, dtype=float)))


def anticommutation_matrix(m: int) -> np.ndarray:
    """``A[i, k] = 1`` when Pauli ``i`` (all 4**m words) anticommutes with generator ``k``."""
    words = pauli_words(m)
    gens = nontrivial_words(m)
    return np.array([[anticommutes(w, g) for g in gens] for w in words], dtype=float)


@dataclass(frozen=True)
class PauliChannel:
    """Stochastic Pauli channel on ``location`` with per-generator ``eps``.

    ``errors`` maps local words (length ``len(location)``) to ``eps >= 0``.
    Generators missing from the map have ``eps = 0``.
    """

    location: tuple
    errors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        location = tuple(int(q) for q in self.location)
        if len(location) not in (1, 2) or len(set(location)) != len(location):
            raise ValueError(f"location must be one qubit or a qubit pair, got {location}")
        m = len(location)
        errors = {}
        for word, eps in dict(self.errors).items():
            word = word.upper()
            if len(word) != m or word == "I" * m or any(c not in "IXYZ" for c in word):
                raise ValueError(f"invalid generator {word!r} for a {m}-qubit location")
            eps = float(eps)
            if not np.isfinite(eps) or eps < 0:
                raise ValueError(f"error probability for {word} must be finite and >= 0, got {eps}")
            errors[word] = errors.get(word, 0.0) + eps
        object.__setattr__(self, "location", location)
        object.__setattr__(self, "errors", errors)

    @property
    def arity(self) -> int:
        return len(self.location)

    @property
    def generators(self) -> list[str]:
        """All 3 or 15 local generators in Pauli order."""
        return nontrivial_words(self.arity)

    def eps_vector(self) -> np.ndarray:
        return np.array([self.errors.get(w, 0.0) for w in self.generators])

    @property
    def weights(self) -> dict:
        return {w: 0.5 * (1 + np.exp(-2 * e)) for w, e in self.errors.items()}

    def ptm_diagonal(self) -> np.ndarray:
        """Local PTM eigenvalues over all ``4**m`` words."""
        a = anticommutation_matrix(self.arity)
        return np.exp(-2.0 * a @ self.eps_vector())

    def embedded_errors(self, n: int) -> dict:
        """Generators as full n-qubit words (nonzero eps only)."""
        return {PauliString(w).embed(self.location, n).word: e for w, e in self.errors.items() if e > 0}

    def to_channel(self, n: Optional[int] = None) -> Channel:
        n = max(self.location) + 1 if n is None else n
        ch = Channel.identity(n)
        for word, eps in self.embedded_errors(n).items():
            p = flip_probability(eps)
            mat = PauliString(word).matrix()
            ch = Channel.from_kraus([np.sqrt(1 - p) * np.eye(2**n), np.sqrt(p) * mat]) @ ch
        return ch

    def rates(self, dt: float) -> dict:
        return dissipator_rates(self, dt)

    @classmethod
    def from_ptm_diagonal(cls, diagonal: np.ndarray, location) -> "PauliChannel":
        """Best non-negative ``eps`` reproducing a diagonal PTM (exact when representable)."""
        m = len(tuple(location))
        diagonal = np.asarray(diagonal, dtype=float)
        if diagonal.shape != (4**m,):
            raise ValueError("diagonal length must be 4**m")
        if np.any(diagonal[1:] <= 0):
            raise ValueError("PTM eigenvalues must be positive to take logarithms")
        a = anticommutation_matrix(m)[1:]
        b = -0.5 * np.log(diagonal[1:])
        eps, resid = nnls(a, b)
        if resid > 1e-9:
            logger.debug("Pauli channel fit residual %.3g; channel not exactly representable", resid)
        return cls(tuple(location), {w: e for w, e in zip(nontrivial_words(m), eps) if e > 1e-14})

    def to_dict(self) -> dict:
        return {"location": list(self.location), "errors": {w: float(e) for w, e in self.errors.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "PauliChannel":
        return cls(tuple(d["location"]), d.get("errors", {}))

    def scaled(self, factor: float) -> "PauliChannel":
        """Channel repeated ``factor`` times (eps adds up for identical generators)."""
        return PauliChannel(self.location, {w: e * factor for w, e in self.errors.items()})


def compose_channels(channels: Iterable[PauliChannel], location) -> PauliChannel:
    """Sum eps of channels living on (subsets of) ``location``.

    Products of channels with identical generators are exact here because the
    per-generator eigenvalues multiply.
    """
    location = tuple(location)
    total: dict = {}
    for ch in channels:
        if not set(ch.location) <= set(location):
            raise ValueError(f"channel on {ch.location} does not fit inside {location}")
        for word, eps in ch.errors.items():
            lifted = ["I"] * len(location)
            for q, c in zip(ch.location, word):
                lifted[location.index(q)] = c
            key = "".join(lifted)
            total[key] = total.get(key, 0.0) + eps
    return PauliChannel(location, total)


@dataclass(frozen=True)
class NoiseSpec:
    """One Pauli channel per noise slot, identical in every layer.

    ``source`` is ``"ground-truth"`` or ``"characterized"``; characterized
    specs carry per-slot ``stderr`` maps.
    """

    channels: tuple
    source: str = "ground-truth"
    stderr: Optional[tuple] = None

    def __post_init__(self):
        channels = tuple(c if isinstance(c, PauliChannel) else PauliChannel.from_dict(c) for c in self.channels)
        locs = [c.location for c in channels]
        if len(set(locs)) != len(locs):
            raise ValueError("exactly one channel per slot is allowed")
        if self.source not in ("ground-truth", "characterized"):
            raise ValueError(f"unknown noise source {self.source!r}")
        object.__setattr__(self, "channels", channels)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", tuple(dict(s) for s in self.stderr))

    @property
    def slots(self) -> list[tuple]:
        return [c.location for c in self.channels]

    def channel(self, location) -> PauliChannel:
        for c in self.channels:
            if c.location == tuple(location):
                return c
        raise KeyError(f"no channel at slot {location}")

    def generator_table(self, n: int) -> dict:
        """Full-register generators with eps summed over slots sharing a Pauli."""
        table: dict = {}
        for ch in self.channels:
            for word, eps in ch.embedded_errors(n).items():
                table[word] = table.get(word, 0.0) + eps
        return table

    def ptm_diagonal(self, n: int) -> np.ndarray:
        a_rows = pauli_words(n)
        table = self.generator_table(n)
        out = np.ones(len(a_rows))
        for word, eps in table.items():
            mask = np.array([anticommutes(w, word) for w in a_rows])
            out[mask] *= np.exp(-2 * eps)
        return out

    def to_dict(self) -> dict:
        d = {"source": self.source, "channels": [c.to_dict() for c in self.channels]}
        if self.stderr is not None:
            d["stderr"] = [{w: float(e) for w, e in s.items()} for s in self.stderr]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        stderr = d.get("stderr")
        return cls(
            tuple(PauliChannel.from_dict(c) for c in d["channels"]),
            d.get("source", "ground-truth"),
            None if stderr is None else tuple(stderr),
        )


def stochastic_channel_apply(state: np.ndarray, channel: PauliChannel, rng: np.random.Generator):
    """Sample one realization of ``channel`` and apply it to ``state``.

    Returns ``(new_state, applied)`` where ``applied`` is the product of the
    Paulis that fired (phase dropped; identity if none fired).
    """
    n = num_qubits(state)
    if max(channel.location) >= n:
        raise ValueError(f"channel location {channel.location} outside {n}-qubit state")
    applied = PauliString.identity(n)
    for word in channel.generators:
        eps = channel.errors.get(word, 0.0)
        # draw for every generator so the stream layout is independent of eps
        u = rng.random()
        if eps > 0 and u < flip_probability(eps):
            applied = applied * PauliString(word).embed(channel.location, n)
    applied = applied.canonical()
    if not applied.is_identity:
        state = apply_pauli(state, applied)
    return state, applied


def dissipator_rates(channel: PauliChannel, dt: float) -> dict:
    """Lindblad rates ``gamma_k = eps_k / dt`` realized by one layer."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return {w: e / dt for w, e in channel.errors.items()}


def twirled_ptm(channel, n: int) -> np.ndarray:
    """PTM of the exact Pauli twirl: the diagonal of the input PTM."""
    return np.diag(np.diag(ptm_of_channel(channel, n)))


def pauli_twirl(channel, location=None) -> PauliChannel:
    """Pauli-twirl a 1- or 2-qubit channel into the stochastic Pauli form.

    ``channel`` may be a :class:`Channel`, a Kraus list, a callable or a
    :class:`PauliChannel`. The result is placed on ``location`` (default:
    the first qubits).
    """
    if isinstance(channel, PauliChannel):
        n = max(channel.location) + 1
        if n > 2:
            raise ValueError("twirling supports at most 2 qubits")
        ch = channel.to_channel(n)
        location = channel.location if location is None else location
    else:
        if isinstance(channel, Channel):
            n = channel.n
        elif callable(channel):
            raise ValueError("pass a Channel for callables so the arity is known")
        else:
            n = num_qubits(np.asarray(list(channel)[0]))
        ch = as_channel(channel, n)
    if n > 2:
        raise ValueError(f"twirling supports at most 2 qubits, got {n}")
    location = tuple(range(n)) if location is None else tuple(location)
    diag = np.diag(ptm_of_channel(ch, n))
    if isinstance(channel, PauliChannel) and channel.arity < n:
        raise ValueError("PauliChannel location must span qubits 0..n-1 to be twirled")
    return PauliChannel.from_ptm_diagonal(diag, location)


def amplitude_damping_kraus(gamma: float) -> list[np.ndarray]:
    return [
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


def phase_damping_kraus(lam: float) -> list[np.ndarray]:
    return [
        np.array([[1, 0], [0, np.sqrt(1 - lam)]], dtype=complex),
        np.array([[0, 0], [0, np.sqrt(lam)]], dtype=complex),
    ]


def idle_channel(duration: float, t1: float, t2: float) -> Channel:
    """Amplitude plus pure phase damping over ``duration`` (same time units as T1/T2)."""
    if t2 > 2 * t1:
        raise ValueError("T2 cannot exceed 2 T1")
    gamma = 1 - np.exp(-duration / t1)
    tphi_inv = 1 / t2 - 1 / (2 * t1)
    lam = 1 - np.exp(-2 * duration * tphi_inv)
    return Channel.from_kraus(phase_damping_kraus(lam)) @ Channel.from_kraus(amplitude_damping_kraus(gamma))


# -- characterization --------------------------------------------------------


class InsufficientShotsError(RuntimeError):
    pass


class ChannelExecutor:
    """Emulated characterization experiment on a noisy identity layer.

    ``executor(pauli, depth, shots, rng)`` prepares a +1 eigenstate of
    ``pauli``, applies the twirled noise layer ``depth`` times, measures the
    same Pauli ``shots`` times and returns the sample mean of the +/-1
    outcomes. Shots are i.i.d., so the outcome count is drawn binomially from
    the exact expectation value.
    """

    def __init__(self, noise: NoiseSpec, n: int):
        self.noise = noise
        self.n = n
        self._diag = dict(zip(pauli_words(n), noise.ptm_diagonal(n)))

    def expectation(self, pauli: PauliString, depth: int) -> float:
        return float(self._diag[pauli.word] ** depth)

    def __call__(self, pauli: PauliString, depth: int, shots: int, rng: np.random.Generator) -> float:
        p_plus = 0.5 * (1 + self.expectation(pauli, depth))
        k = rng.binomial(shots, p_plus)
        return (2 * k - shots) / shots


@dataclass
class DecayFit:
    pauli: str
    depths: np.ndarray
    means: np.ndarray
    log_eigenvalue: float
    log_eigenvalue_stderr: float


def _fit_decay(word: str, depths, means, shots: int) -> Optional[DecayFit]:
    depths = np.asarray(depths, dtype=float)
    means = np.asarray(means, dtype=float)
    ok = means > 0
    if ok.sum() < 2:
        return None
    m, y = depths[ok], means[ok]
    # binomial variance of the mean, propagated through log
    var = np.maximum(1 - y**2, 1.0 / shots) / (shots * y**2)
    w = 1.0 / var
    design = np.column_stack([np.ones_like(m), m])
    cov = np.linalg.inv(design.T @ (w[:, None] * design))
    coef = cov @ design.T @ (w * np.log(y))
    return DecayFit(word, depths, means, float(coef[1]), float(np.sqrt(cov[1, 1])))


def characterize(
    executor: Callable,
    shots: int,
    depths: Sequence[int],
    slots: Optional[Sequence[tuple]] = None,
    n: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    strict: bool = False,
) -> NoiseSpec:
    """Estimate per-generator eps from Pauli-fidelity decays.

    For every slot, each non-identity Pauli on its support is measured at
    all ``depths``; a weighted log-linear fit gives the per-layer eigenvalue
    ``lambda_Q``, and ``-log(lambda_Q) / 2 = sum_{k anticommuting} eps_k`` is
    solved with a non-negativity clamp. Standard errors are propagated from
    the fits. ``slots`` and ``n`` default to the executor's own.
    """
    slots = executor.noise.slots if slots is None else slots
    n = executor.n if n is None else n
    rng = np.random.default_rng() if rng is None else rng
    depths = sorted(set(int(d) for d in depths))
    if len(depths) < 2:
        raise ValueError("need at least two distinct depths")
    if shots < 1:
        raise ValueError("shots must be positive")
    channels, errs = [], []
    for slot in slots:
        slot = tuple(slot)
        m = len(slot)
        gens = nontrivial_words(m)
        rows, rhs, weights = [], [], []
        for word in gens:
            full = PauliString(word).embed(slot, n)
            means = [executor(full, d, shots, rng) for d in depths]
            fit = _fit_decay(word, depths, means, shots)
            if fit is None:
                continue
            rows.append([anticommutes(word, g) for g in gens])
            rhs.append(-0.5 * fit.log_eigenvalue)
            weights.append(1.0 / max(0.5 * fit.log_eigenvalue_stderr, 1e-15))
        if len(rows) < len(gens):
            raise InsufficientShotsError(
                f"slot {slot}: only {len(rows)} of {len(gens)} decays could be fitted; add shots or use shallower depths"
            )
        a = np.array(rows, dtype=float)
        b = np.array(rhs)
        w = np.array(weights)
        aw, bw = a * w[:, None], b * w
        eps, _ = nnls(aw, bw)
        cov = np.linalg.pinv(aw.T @ aw)
        se = np.sqrt(np.maximum(np.diag(cov), 0))
        errors = {g: float(e) for g, e in zip(gens, eps)}
        stderr = {g: float(s) for g, s in zip(gens, se)}
        for g in gens:
            if errors[g] > 0 and stderr[g] > errors[g]:
                msg = f"slot {slot} generator {g}: stderr {stderr[g]:.2e} exceeds estimate {errors[g]:.2e}"
                if strict:
                    raise InsufficientShotsError(msg)
                logger.debug(msg)
        channels.append(PauliChannel(slot, errors))
        errs.append(stderr)
    return NoiseSpec(tuple(channels), "characterized", tuple(errs))


# -- generalized reset -------------------------------------------------------


def reset_probability(gamma, dt: float, exact: bool = True):
    """Per-layer reset probability realizing decay rate ``gamma``.

    ``exact=True`` uses ``p = 1 - exp(-gamma dt)``, for which one reset layer
    (with U = V) equals the exponential of the damping-plus-dephasing
    generator exactly; ``exact=False`` is the first-order ``p = gamma dt``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("reset can only realize non-negative damping rates")
    return 1 - np.exp(-gamma * dt) if exact else gamma * dt


def reset_rate(p, dt: float):
    """Effective damping rate ``p / dt`` of a per-layer reset probability."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.asarray(p, dtype=float) / dt


@dataclass(frozen=True)
class ResetSpec:
    """Stochastic generalized reset attached to every layer.

    ``probabilities[d - 1]`` is the reset probability in layer ``d``. With
    probability ``p_er`` a triggered reset fails and leaves the state alone.
    ``duration_ns`` is recorded for bookkeeping only.
    """

    probabilities: tuple
    u: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex), compare=False)
    v: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex), compare=False)
    qubit: int = 0
    duration_ns: float = 250.0
    p_er: float = 1e-3

    def __post_init__(self):
        probs = tuple(float(p) for p in np.atleast_1d(self.probabilities))
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError("reset probabilities must lie in [0, 1]")
        if not 0 <= self.p_er <= 1:
            raise ValueError("p_er must lie in [0, 1]")
        for m in (self.u, self.v):
            m = np.asarray(m)
            if m.shape != (2, 2) or not np.allclose(m.conj().T @ m, np.eye(2), atol=1e-12):
                raise ValueError("U and V must be single-qubit unitaries")
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "u", np.asarray(self.u, dtype=complex))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=complex))

    @classmethod
    def from_rate(cls, rate, dt: float, layers: int, exact: bool = True, sample: str = "right",
                  compensate_failure: bool = False, **kwargs) -> "ResetSpec":
        rate = as_rate(rate)
        d = np.arange(1, layers + 1, dtype=float)
        times = d * dt if sample == "right" else (d - 0.5) * dt
        probs = reset_probability(np.atleast_1d(rate(times)), dt, exact)
        if compensate_failure:
            probs = np.minimum(probs / (1 - kwargs.get("p_er", 1e-3)), 1.0)
        return cls(tuple(probs), **kwargs)

    def probability(self, layer: int) -> float:
        """Effective reset probability in ``layer`` (1-based), failures included."""
        return self.probabilities[layer - 1] * (1 - self.p_er)

    def kraus(self, n: int) -> list[np.ndarray]:
        """Kraus operators of the triggered branch ``V reset U^dagger``."""
        k0 = np.array([[1, 0], [0, 0]], dtype=complex)
        k1 = np.array([[0, 1], [0, 0]], dtype=complex)
        out = []
        for k in (k0, k1):
            local = self.v @ k @ self.u.conj().T
            out.append(np.kron(np.kron(np.eye(2**self.qubit), local), np.eye(2 ** (n - self.qubit - 1))))
        return out

    def channel(self, layer: int, n: int) -> Channel:
        """Exact layer channel ``(1 - p) id + p V reset U^dagger``."""
        p = self.probability(layer)
        k0, k1 = self.kraus(n)
        triggered = Channel.from_kraus([k0, k1])
        return Channel((1 - p) * np.eye(4**n) + p * triggered.superop, n)


def reset_apply(state: np.ndarray, spec: ResetSpec, layer: int, rng: np.random.Generator) -> np.ndarray:
    """Stochastically apply the reset of ``layer`` to a state vector or density matrix.

    State vectors follow one quantum-jump unraveling of the triggered branch
    (pure in, pure out); density matrices get the triggered branch exactly.
    """
    if not 1 <= layer <= len(spec.probabilities):
        raise ValueError(f"layer {layer} outside reset schedule")
    n = num_qubits(state)
    if not 0 <= spec.qubit < n:
        raise ValueError(f"reset qubit {spec.qubit} outside {n}-qubit state")
    fire = rng.random() < spec.probabilities[layer - 1]
    fail = rng.random() < spec.p_er
    u_pick = rng.random()
    if not fire or fail:
        return state
    k0, k1 = spec.kraus(n)
    if state.ndim == 2:
        return k0 @ state @ k0.conj().T + k1 @ state @ k1.conj().T
    a0 = k0 @ state
    p0 = float(np.real(np.vdot(a0, a0)))
    out = a0 if u_pick < p0 else k1 @ state
    return out / np.linalg.norm(out)


def ad_decomposition(gamma, u: Optional[np.ndarray] = None, qubit: int = 0, n: int = 1) -> list[DissipatorTerm]:
    """Dissipator realized by the generalized reset with ``U = V``.

    Returns the decay ``|Phi><Phi_perp|`` at ``gamma(t)`` and a dephasing
    term on ``U Z U^dagger`` at ``gamma(t) / 4``. The dephasing term is a
    Pauli term when ``U Z U^dagger`` is (up to sign) a Pauli; otherwise a
    ``ValueError`` is raised since only Pauli dephasing can be controlled.
    """
    gamma = as_rate(gamma)
    u = np.eye(2, dtype=complex) if u is None else np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12):
        raise ValueError("U must be a single-qubit unitary")
    if gamma.is_zero:
        return []
    phi, phi_perp = u[:, 0], u[:, 1]
    zrot = u @ np.diag([1, -1]) @ u.conj().T
    word = None
    for c in "XYZ":
        overlap = np.trace(PauliString(c).matrix() @ zrot) / 2
        if abs(abs(overlap) - 1) < 1e-10:
            word = c
    if word is None:
        raise ValueError("U Z U^dagger is not a Pauli operator; dephasing cannot be controlled")
    full = PauliString(word).embed([qubit], n)
    return [
        DissipatorTerm.jump(phi, phi_perp, gamma, qubit=qubit),
        DissipatorTerm.pauli(full, gamma.scaled(0.25)),
    ]
