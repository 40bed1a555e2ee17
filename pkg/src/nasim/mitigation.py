"""Quasi-probability samplers, mitigation plans, light cones and sampling costs.

Per generator ``P_k`` with device error ``eps_k``, a mitigation factor ``r_k``
scales the layer's Pauli-transfer eigenvalue on anticommuting Paulis by
``exp(2 r_k eps_k)``:

* ``r_k > 0``: sampled inverse, ``C * [w rho - (1 - w) P rho P]`` with
  ``w = (1 + exp(-2 r eps)) / 2`` and cost ``C = exp(2 r eps)``;
* ``r_k < 0``: noise amplification, a genuine channel with
  ``w = (1 + exp(2 r eps)) / 2`` and no cost;
* ``r_k = 0``: nothing.

After the device channel the residual per-layer error is ``(1 - r_k) eps_k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .noise import NoiseSpec, PauliChannel, flip_probability
from .pauli import Channel, PauliString, anticommutes, nontrivial_words, pauli_words


def _as_items(eps: Mapping[str, float]) -> tuple[list[str], np.ndarray]:
    words = list(eps)
    return words, np.array([float(eps[w]) for w in words])


def inverse_sampler(eps_prime: Mapping[str, float], rng: np.random.Generator, size: Optional[int] = None):
    """Sample the signed inverse of a Pauli channel with parameters ``eps_prime``.

    Returns ``(fired, sign, cost)``. With ``size=None``, ``fired`` is the list
    of generator words to apply and ``sign`` is +1 or -1. With an integer
    ``size``, ``fired`` is a ``(size, K)`` boolean array over the generators
    in mapping order and ``sign`` a ``(size,)`` array. ``cost`` is
    ``exp(2 sum eps_prime)`` either way.
    """
    words, eps = _as_items(eps_prime)
    if np.any(~np.isfinite(eps)) or np.any(eps < 0):
        raise ValueError("inverse sampling needs eps' >= 0; route r < 0 to amplification_sampler")
    cost = float(np.exp(2 * eps.sum()))
    p = flip_probability(eps)
    shape = (1 if size is None else size, len(words))
    fired = rng.random(shape) < p
    sign = np.where(fired.sum(axis=1) % 2, -1, 1)
    if size is None:
        return [w for w, f in zip(words, fired[0]) if f], int(sign[0]), cost
    return fired, sign, cost


def amplification_probability(eps, r):
    """``1 - w_amp = (1 - exp(2 r eps)) / 2`` for ``r < 0``."""
    return 0.5 * (1 - np.exp(2 * np.asarray(r, dtype=float) * np.asarray(eps, dtype=float)))


def amplification_sampler(eps: Mapping[str, float], r, rng: np.random.Generator, size: Optional[int] = None):
    """Sample the noise-amplification channel for factors ``r < 0``.

    ``r`` is a scalar or a mapping over the same words as ``eps``. Returns the
    fired words (or a ``(size, K)`` boolean array); the sign is always +1.
    """
    words, e = _as_items(eps)
    rr = np.array([r[w] for w in words], dtype=float) if isinstance(r, Mapping) else np.full(len(words), float(r))
    if np.any(rr >= 0):
        raise ValueError("amplification needs r < 0; route r >= 0 to inverse_sampler")
    if np.any(e < 0):
        raise ValueError("device eps must be >= 0")
    p = amplification_probability(e, rr)
    fired = rng.random((1 if size is None else size, len(words))) < p
    if size is None:
        return [w for w, f in zip(words, fired[0]) if f]
    return fired


def quasi_ptm_diagonal(eps: Sequence[float], r: Sequence[float], m: int) -> np.ndarray:
    """PTM eigenvalues (over all ``4**m`` local words) of the mitigation step.

    The exact signed mixture, cost factor included; anticommuting Paulis
    gain ``exp(2 r_k eps_k)`` per generator.
    """
    gens = nontrivial_words(m)
    eps = np.asarray(eps, dtype=float)
    r = np.asarray(r, dtype=float)
    if eps.shape != (len(gens),) or r.shape != eps.shape:
        raise ValueError(f"need {len(gens)} eps and r values for a {m}-qubit location")
    a = np.array([[anticommutes(w, g) for g in gens] for w in pauli_words(m)], dtype=float)
    return np.exp(2 * a @ (r * eps))


def quasi_inverse_terms(eps_prime: Mapping[str, float]) -> list[tuple[float, str]]:
    """Signed mixture ``[(coefficient, word), ...]`` of the inverse channel, cost included.

    Each generator contributes ``C_k [w_k I - (1 - w_k) P_k]``; expanding the
    product gives up to ``2**K`` terms.
    """
    terms = [(1.0, None)]
    for word, e in eps_prime.items():
        if e < 0:
            raise ValueError("eps' must be >= 0")
        c = np.exp(2 * e)
        w = 1 - flip_probability(e)
        new = []
        for coef, p in terms:
            new.append((coef * c * w, p))
            q = PauliString(word) if p is None else (p * PauliString(word)).canonical()
            new.append((-coef * c * (1 - w), q))
        terms = new
    n = len(next(iter(eps_prime), "I"))
    return [(c, (PauliString.identity(n) if p is None else p).word) for c, p in terms]


def quasi_inverse_channel(eps_prime: Mapping[str, float], location: Sequence[int], n: int) -> Channel:
    """Dense signed map ``prod_k C_k [w_k id - (1 - w_k) P_k . P_k]`` on ``location``.

    Not completely positive; used to check inversion against the device PTM.
    """
    out = Channel.identity(n)
    eye = np.eye(4**n)
    for word, e in eps_prime.items():
        if e < 0:
            raise ValueError("eps' must be >= 0")
        q = float(flip_probability(e))
        conj = Channel.from_unitary(PauliString(word).embed(location, n).matrix()).superop
        out = Channel(np.exp(2 * e) * ((1 - q) * eye - q * conj), n) @ out
    return out


# -- plans -------------------------------------------------------------------


@dataclass(frozen=True)
class MitigationPlan:
    """Per-layer, per-slot, per-generator mitigation factors.

    ``r[s]`` has shape ``(D, G_s)`` over the local generators of slot ``s``
    (3 or 15, Pauli order); ``eps[s]`` holds the device errors. Layers are
    numbered 1..D forward in time. ``active`` is ``None`` for blind
    mitigation or a per-layer tuple of active slot indices; inactive slots
    are left untouched.
    """

    slots: tuple
    eps: tuple
    r: tuple
    dt: float
    active: Optional[tuple] = None
    observable_support: Optional[tuple] = None

    def __post_init__(self):
        slots = tuple(tuple(int(q) for q in s) for s in self.slots)
        eps = tuple(np.array(e, dtype=float) for e in self.eps)
        r = tuple(np.atleast_2d(np.array(x, dtype=float)) for x in self.r)
        if not (len(slots) == len(eps) == len(r)):
            raise ValueError("slots, eps and r must have the same length")
        depths = {x.shape[0] for x in r}
        if len(depths) > 1:
            raise ValueError("all slots need the same number of layers")
        for s, e, x in zip(slots, eps, r):
            g = 4 ** len(s) - 1
            if e.shape != (g,) or x.shape[1] != g:
                raise ValueError(f"slot {s} needs {g} generators")
            if np.any(e < 0) or not np.all(np.isfinite(e)):
                raise ValueError("device eps must be finite and >= 0")
            if not np.all(np.isfinite(x)):
                raise ValueError("mitigation factors must be finite")
            e.setflags(write=False)
            x.setflags(write=False)
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "r", r)
        if self.active is not None:
            active = tuple(frozenset(int(i) for i in a) for a in self.active)
            if len(active) != self.layers:
                raise ValueError("active-slot table must cover every layer")
            object.__setattr__(self, "active", active)
        if self.observable_support is not None:
            object.__setattr__(self, "observable_support", tuple(int(q) for q in self.observable_support))

    @property
    def layers(self) -> int:
        return self.r[0].shape[0] if self.r else 0

    @property
    def mode(self) -> str:
        return "blind" if self.active is None else "light-cone"

    def is_active(self, layer: int, slot_index: int) -> bool:
        return self.active is None or slot_index in self.active[layer - 1]

    def factors(self, layer: int, slot_index: int) -> np.ndarray:
        """Effective factors in ``layer`` (zero for slots outside the cone)."""
        if not 1 <= layer <= self.layers:
            raise ValueError(f"layer {layer} outside plan with {self.layers} layers")
        if not self.is_active(layer, slot_index):
            return np.zeros_like(self.eps[slot_index])
        return self.r[slot_index][layer - 1]

    def eps_prime(self, layer: int, slot_index: int) -> np.ndarray:
        """Cost-relevant ``max(r, 0) * eps``."""
        return np.maximum(self.factors(layer, slot_index), 0) * self.eps[slot_index]

    def residual(self, layer: int, slot_index: int) -> np.ndarray:
        """Per-layer error left after device plus mitigation, ``(1 - r) eps``."""
        return (1 - self.factors(layer, slot_index)) * self.eps[slot_index]

    def layer_cost(self, layer: int) -> float:
        total = sum(self.eps_prime(layer, s).sum() for s in range(len(self.slots)))
        return float(np.exp(2 * total))

    def layer_costs(self) -> np.ndarray:
        return np.array([self.layer_cost(d) for d in range(1, self.layers + 1)])

    def log_total_cost(self) -> float:
        total = sum(
            self.eps_prime(d, s).sum() for d in range(1, self.layers + 1) for s in range(len(self.slots))
        )
        return float(2 * total)

    def total_cost(self) -> float:
        return float(np.exp(self.log_total_cost()))

    def truncated(self, layers: int) -> "MitigationPlan":
        """Plan restricted to the first ``layers`` layers."""
        if not 0 < layers <= self.layers:
            raise ValueError("cannot truncate outside the plan")
        active = None if self.active is None else self.active[:layers]
        return MitigationPlan(self.slots, self.eps, tuple(x[:layers] for x in self.r), self.dt, active,
                              self.observable_support)

    def with_light_cone(self, support: Sequence[int], terms) -> "MitigationPlan":
        """Restrict mitigation to slots inside the backward causal cone of ``support``.

        The cone is propagated exactly through the ordered rotations of each
        Trotter layer, so it is valid for any term order; noise sits after
        the layer's gates.
        """
        cones = causal_cone(terms, support, self.layers)
        active = tuple(
            tuple(i for i, s in enumerate(self.slots) if set(s) & cone) for cone in cones
        )
        return MitigationPlan(self.slots, self.eps, self.r, self.dt, active, tuple(support))

    @classmethod
    def uniform(cls, noise: NoiseSpec, r: float, layers: int, dt: float) -> "MitigationPlan":
        """Same factor for every generator and layer (0 = raw, 1 = full PEC)."""
        eps = tuple(c.eps_vector() for c in noise.channels)
        return cls(noise.slots, eps, tuple(np.full((layers, e.size), float(r)) for e in eps), dt)

    def to_dict(self) -> dict:
        d = {
            "dt": float(self.dt),
            "layers": self.layers,
            "mode": self.mode,
            "slots": [
                {
                    "location": list(s),
                    "generators": nontrivial_words(len(s)),
                    "eps": [float(v) for v in e],
                    "r": [[float(v) for v in row] for row in x],
                }
                for s, e, x in zip(self.slots, self.eps, self.r)
            ],
            "layer_cost": [float(c) for c in self.layer_costs()],
        }
        if self.active is not None:
            d["active"] = [sorted(a) for a in self.active]
            d["observable_support"] = list(self.observable_support or ())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MitigationPlan":
        slots = [s["location"] for s in d["slots"]]
        return cls(
            tuple(slots),
            tuple(s["eps"] for s in d["slots"]),
            tuple(np.array(s["r"], dtype=float).reshape(d["layers"], -1) for s in d["slots"]),
            d["dt"],
            None if d.get("active") is None else tuple(d["active"]),
            d.get("observable_support"),
        )


def causal_cone(terms, support: Sequence[int], layers: int) -> list[set]:
    """Qubits whose errors after each layer's gates can reach ``support``.

    Returned in forward layer order (index 0 is the first layer).
    """
    from .trotter import as_terms

    gates = [set(t.pauli.support) for t in as_terms(terms)]
    cone = set(int(q) for q in support)
    out = []
    for _ in range(layers):
        out.append(set(cone))
        for g in reversed(gates):
            if g & cone:
                cone |= g
    return out[::-1]


def mitigated_layer(plan: MitigationPlan, layer: int, noise: NoiseSpec, rng: np.random.Generator, n: Optional[int] = None):
    """Sample the mitigation step of ``layer`` for one shot.

    Returns ``(paulis, sign, cost)`` with ``paulis`` a list of full-register
    words to apply after the device channel.
    """
    if tuple(noise.slots) != tuple(plan.slots):
        raise ValueError("plan and device noise cover different slots")
    n = n if n is not None else max(max(s) for s in plan.slots) + 1
    fired_words, sign, cost = [], 1, 1.0
    for i, ch in enumerate(noise.channels):
        if not np.allclose(ch.eps_vector(), plan.eps[i]):
            raise ValueError(f"plan eps for slot {ch.location} does not match the device")
        r = plan.factors(layer, i)
        gens = ch.generators
        pos = {g: e * f for g, e, f in zip(gens, plan.eps[i], r) if f > 0 and e > 0}
        neg_eps = {g: e for g, e, f in zip(gens, plan.eps[i], r) if f < 0 and e > 0}
        local = []
        if pos:
            words, s, c = inverse_sampler(pos, rng)
            local += words
            sign *= s
            cost *= c
        if neg_eps:
            local += amplification_sampler(neg_eps, {g: f for g, f in zip(gens, r) if g in neg_eps}, rng)
        fired_words += [PauliString(w).embed(ch.location, n).word for w in local]
    return fired_words, sign, cost


# -- cost model --------------------------------------------------------------


def light_cone(d: int, k: int, n: int, layers: Optional[int] = None) -> int:
    """Pair slots to mitigate ``d`` layers back from the measurement.

    ``1 + 2k + 2d`` while ``2(1 + k + d) < n``, else all ``n - 1`` pairs.
    """
    if d < 1 or (layers is not None and d > layers):
        raise ValueError("layer index out of range")
    if n < 2:
        raise ValueError("need at least two qubits")
    if 2 * (1 + k + d) < n:
        return 1 + 2 * k + 2 * d
    return n - 1


@dataclass(frozen=True)
class CostModel:
    """Analytic sampling cost ``exp(lam * eps_bar * sum_d width_d)``."""

    lam: float
    n: int
    layers: int
    eps_bar: float
    k: int = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.n < 2 or self.layers < 0 or self.k < 1:
            raise ValueError("invalid circuit size")

    def blind_exponent(self) -> float:
        return self.lam * (self.n - 1) * self.layers * self.eps_bar

    def cone_exponent(self) -> float:
        widths = sum(light_cone(d, self.k, self.n) for d in range(1, self.layers + 1))
        return self.lam * self.eps_bar * widths

    def blind_cost(self) -> float:
        return float(np.exp(self.blind_exponent()))

    def cone_cost(self) -> float:
        return float(np.exp(self.cone_exponent()))

    def circuit_ratio(self) -> float:
        """``(C_blind / C_cone)**2``, the reduction in circuit count."""
        return float(np.exp(2 * (self.blind_exponent() - self.cone_exponent())))


def total_cost(plan: MitigationPlan, model: Optional[CostModel] = None) -> dict:
    """Exact product cost of ``plan`` plus, when ``model`` is given, its analytic estimate.

    Circuit counts are reported relative to an unmitigated run (``C**2``).
    """
    c = plan.total_cost()
    out = {"C_tot": c, "circuits": c**2, "mode": plan.mode}
    if model is not None:
        est = model.blind_cost() if plan.mode == "blind" else model.cone_cost()
        out.update({"C_estimate": est, "circuits_estimate": est**2})
    return out
