"""Planners turning device errors and target rates into mitigation factors.

Residual error after mitigation is ``(1 - r_k) eps_k`` per layer, so the
simulated rate is ``(1 - r_k) eps_k / dt``.

* Scheme I keeps ``r_k`` in [0, 1]; when a target exceeds what the device
  delivers at ``dt`` it first shortens the step to ``dt_max``.
* Scheme II keeps ``dt`` and solves ``r_k = 1 - Gamma_k dt / eps_k``; negative
  ``r`` is realized by noise amplification and ``r > 1`` gives negative rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .lindblad import Rate, as_rate
from .mitigation import MitigationPlan, light_cone
from .noise import NoiseSpec
from .pauli import PauliString

ArrayOrMap = Union[Mapping[str, float], Sequence[float], np.ndarray]

# relative slack when deciding whether a target exceeds the device rate
_TOL = 1e-12


class InfeasiblePlanError(ValueError):
    """Target rates cannot be reached with the available device noise."""


def _align(eps: ArrayOrMap, targets: ArrayOrMap):
    """Return ``(keys, eps_array, target_array)``; ``keys`` is None for array input."""
    if isinstance(eps, Mapping):
        targets = dict(targets) if isinstance(targets, Mapping) else None
        if targets is None:
            raise TypeError("targets must be a mapping when eps is a mapping")
        extra = [k for k, g in targets.items() if k not in eps and g != 0]
        if extra:
            raise InfeasiblePlanError(f"targets on generators without device noise: {extra}")
        keys = list(eps)
        return keys, np.array([eps[k] for k in keys], float), np.array([targets.get(k, 0.0) for k in keys], float)
    e = np.asarray(eps, dtype=float)
    g = np.asarray(targets, dtype=float)
    if g.shape[-1:] != e.shape[-1:]:
        raise ValueError("eps and targets must cover the same generators")
    return None, e, g


def _wrap(keys, values: np.ndarray):
    return values if keys is None else dict(zip(keys, values.tolist()))


def _check_eps(e: np.ndarray):
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("device eps must be finite and >= 0")


@dataclass(frozen=True)
class SchemeIPlan:
    dt_max: float
    r: object
    k_max: object
    triggered: bool


@dataclass(frozen=True)
class SchemeIIPlan:
    dt: float
    r: object


def plan_scheme_I(eps: ArrayOrMap, targets: ArrayOrMap, dt: float) -> SchemeIPlan:
    """Shorten the step if needed, then partially mitigate.

    The step is shortened only when some ``Gamma_k > eps_k / dt``. The
    limiting generator is the one with the largest ``Gamma_k / eps_k``; the
    new step ``eps_kmax / Gamma_kmax`` makes that generator's device rate equal
    its target and every other ``r_k = 1 - Gamma_k dt_max / eps_k`` lands in
    [0, 1].
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    keys, e, g = _align(eps, targets)
    _check_eps(e)
    if e.ndim != 1:
        raise ValueError("scheme I plans one set of constant targets")
    if np.any(g < 0):
        raise ValueError("scheme I cannot realize negative target rates")
    if np.any((e == 0) & (g > 0)):
        raise InfeasiblePlanError("nonzero target on a generator with no device noise")
    ratio = np.divide(g, e, out=np.zeros_like(g), where=e > 0)
    triggered = bool(ratio.max(initial=0.0) * dt > 1 + _TOL)
    if triggered:
        k = int(np.argmax(ratio))
        if g[k] == 0:
            raise InfeasiblePlanError("limiting target rate is zero")
        dt_max = float(e[k] / g[k])
        k_max = k if keys is None else keys[k]
    else:
        dt_max, k_max = float(dt), None
    r = np.ones_like(e)
    np.divide(g * dt_max, e, out=r, where=e > 0)
    r = np.where(e > 0, 1 - r, 1.0)
    r = np.clip(r, 0.0, 1.0)
    if triggered:
        r[int(np.argmax(ratio))] = 0.0
    return SchemeIPlan(dt_max, _wrap(keys, r), k_max, triggered)


def plan_scheme_II(eps: ArrayOrMap, targets: ArrayOrMap, dt: float) -> SchemeIIPlan:
    """Solve ``(1 - r_k) eps_k / dt = Gamma_k`` at fixed ``dt``.

    ``targets`` may carry a leading layer axis (array input) for
    time-dependent rates. Generators with ``eps_k = 0`` and zero target get
    ``r_k = 1``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    keys, e, g = _align(eps, targets)
    _check_eps(e)
    if not np.all(np.isfinite(g)):
        raise ValueError("target rates must be finite")
    zero = np.broadcast_to(e == 0, g.shape)
    if np.any(zero & (g != 0)):
        raise InfeasiblePlanError("nonzero target on a generator with no device noise")
    r = np.ones(g.shape)
    np.divide(g * dt, np.broadcast_to(e, g.shape), out=r, where=~zero)
    r = np.where(zero, 1.0, 1 - r)
    return SchemeIIPlan(float(dt), _wrap(keys, r))


def achieved_rates(eps: ArrayOrMap, r: ArrayOrMap, dt: float):
    """Rates ``(1 - r_k) eps_k / dt`` realized by a plan."""
    if isinstance(eps, Mapping):
        return {k: (1 - r[k]) * e / dt for k, e in eps.items()}
    return (1 - np.asarray(r, dtype=float)) * np.asarray(eps, dtype=float) / dt


# -- device-level planning ---------------------------------------------------


def _target_table(targets: Mapping, n: int) -> dict:
    out = {}
    for word, rate in targets.items():
        p = PauliString.from_label(word) if isinstance(word, str) else word
        if p.n != n:
            raise ValueError(f"target {p.word} does not act on {n} qubits")
        out[p.canonical().word] = as_rate(rate)
    return out


def sample_times(dt: float, layers: int, sample: str = "right") -> np.ndarray:
    d = np.arange(1, layers + 1, dtype=float)
    if sample == "right":
        return d * dt
    if sample == "midpoint":
        return (d - 0.5) * dt
    raise ValueError(f"unknown sampling rule {sample!r}")


def plan_device(
    noise: NoiseSpec,
    targets: Mapping,
    n: int,
    dt: float,
    t_final: float,
    scheme: str = "II",
    sample: str = "right",
) -> tuple[MitigationPlan, float, int]:
    """Plan every slot and layer for a target Pauli dissipator.

    ``targets`` maps full-register Pauli words to rates (numbers or
    :class:`Rate`); device generators without a target are mitigated to zero.
    Generators of different slots acting as the same full-register Pauli are
    planned jointly on their summed eps. Returns ``(plan, dt_used, layers)``.
    For scheme I the step becomes ``t_final / ceil(t_final / dt_max)`` so an
    integer number of layers covers ``t_final`` with every ``r`` in [0, 1].
    """
    table = noise.generator_table(n)
    tgt = _target_table(targets, n)
    extra = [w for w, rate in tgt.items() if w not in table and not rate.is_zero]
    if extra:
        raise InfeasiblePlanError(f"targets on generators without device noise: {extra}")
    words = list(table)
    eps = np.array([table[w] for w in words])
    zero = Rate.constant(0.0)
    if scheme == "II":
        layers = _layer_count(t_final, dt)
        times = sample_times(dt, layers, sample)
        gam = np.array([np.broadcast_to(tgt.get(w, zero)(times), times.shape) for w in words]).T
        r_words = plan_scheme_II(eps, gam, dt).r
        dt_used = dt
    elif scheme == "I":
        rates = [tgt.get(w, zero) for w in words]
        if not all(rt.is_constant for rt in rates):
            raise ValueError("scheme I supports time-independent targets only")
        gam = np.array([float(rt(0.0)) for rt in rates])
        first = plan_scheme_I(eps, gam, dt)
        layers = max(1, math.ceil(t_final / first.dt_max - 1e-9)) if first.triggered else _layer_count(t_final, dt)
        dt_used = t_final / layers if first.triggered else dt
        r_words = np.tile(plan_scheme_I(eps, gam, dt_used).r, (layers, 1))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    index = {w: i for i, w in enumerate(words)}
    r_slots = []
    for ch in noise.channels:
        cols = []
        for g in ch.generators:
            full = PauliString(g).embed(ch.location, n).word
            cols.append(r_words[:, index[full]] if full in index else np.zeros(layers))
        r_slots.append(np.column_stack(cols))
    eps_slots = tuple(c.eps_vector() for c in noise.channels)
    return MitigationPlan(noise.slots, eps_slots, tuple(r_slots), dt_used), dt_used, layers


def _layer_count(t_final: float, dt: float) -> int:
    layers = int(round(t_final / dt))
    if layers < 1 or abs(layers * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final} is not a positive multiple of dt={dt}")
    return layers


# -- scheme comparison analytics ---------------------------------------------


def cost_relevant_eps(eps: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``max(r, 0) * eps``: amplification costs nothing."""
    return np.maximum(r, 0) * eps


def _scheme_eps_bars(eps: float, targets: np.ndarray, dt: float):
    """Mean cost-relevant eps per sample for both schemes plus each sample's dt_max.

    ``targets`` has shape ``(samples, generators)``; device eps is uniform.
    """
    if eps <= 0:
        raise ValueError("device eps must be positive")
    bar_ii = np.maximum(eps - targets * dt, 0).mean(axis=1)
    gmax = targets.max(axis=1)
    triggered = gmax * dt > eps * (1 + _TOL)
    dt_max = np.where(triggered, eps / np.where(gmax > 0, gmax, 1.0), dt)
    r_i = 1 - targets * dt_max[:, None] / eps
    bar_i = (np.clip(r_i, 0, 1) * eps).mean(axis=1)
    return bar_i, bar_ii, dt_max


def compare_schemes(
    n: int = 40,
    eps_mean: float = 0.04,
    sigma_ratios: Sequence[float] = (0.61,),
    samples: int = 500,
    lam: float = 0.5,
    dt: float = 1.0,
    generators: int = 15,
    rng: Optional[np.random.Generator] = None,
) -> list[dict]:
    """Scheme I versus II for Gaussian target error probabilities.

    Device errors are uniform ``eps_mean``. Per sample, ``generators``
    target probabilities are drawn from ``N(eps_mean, sigma)`` (clamped at
    0) and converted to rates ``p / dt``. ``eps_bar`` is the sample average of
    the per-generator mean cost-relevant error; ``R`` compares blind
    single-layer costs ``exp(lam (n - 1) eps_bar)``.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng() if rng is None else rng
    rows = []
    for s in sigma_ratios:
        if not 0 <= s:
            raise ValueError("sigma must be >= 0")
        probs = np.maximum(rng.normal(eps_mean, s * eps_mean, size=(samples, generators)), 0.0)
        bar_i, bar_ii, _ = _scheme_eps_bars(eps_mean, probs / dt, dt)
        ei, eii = float(bar_i.mean()), float(bar_ii.mean())
        c_i = math.exp(lam * (n - 1) * ei)
        c_ii = math.exp(lam * (n - 1) * eii)
        rows.append({
            "sigma": float(s),
            "eps_bar_I": ei,
            "eps_bar_II": eii,
            "C_iter_I": c_i,
            "C_iter_II": c_ii,
            "R": c_ii / c_i,
        })
    return rows


def _cone_width_sum(layers: int, n: int, k: int) -> int:
    return sum(light_cone(d, k, n) for d in range(1, layers + 1))


def dt_scan(
    dts: Sequence[float],
    n: int = 20,
    lam: float = 0.5,
    k: int = 1,
    t_final: float = 10.0,
    eps: float = 0.05,
    gamma_mean: float = 0.05,
    gamma_sigma: float = 0.025,
    samples: int = 500,
    generators: int = 15,
    rng: Optional[np.random.Generator] = None,
) -> dict:
    """Circuit counts ``<C_tot**2>`` versus initial step for both schemes.

    One set of target rates (``samples`` x ``generators``, clamped at 0) is
    reused for every ``dt``. Scheme I runs at ``min(dt, dt_max)`` per sample.
    Layer counts are ``ceil(t_final / step)``. Counts are returned as log10
    because they overflow double precision for large cones.
    """
    rng = np.random.default_rng() if rng is None else rng
    targets = np.maximum(rng.normal(gamma_mean, gamma_sigma, size=(samples, generators)), 0.0)
    rows = []
    for dt in dts:
        if not dt > 0:
            raise ValueError("dt must be positive")
        bar_i, bar_ii, dt_max = _scheme_eps_bars(eps, targets, dt)
        row = {"dt": float(dt)}
        for name, bars, steps in (("I", bar_i, dt_max), ("II", bar_ii, np.full(samples, dt))):
            layers = np.ceil(t_final / steps - 1e-9).astype(int)
            blind = 2 * lam * (n - 1) * layers * bars
            cone = 2 * lam * bars * np.array([_cone_width_sum(D, n, k) for D in layers])
            row[f"log10_circuits_blind_{name}"] = float((logsumexp(blind) - math.log(samples)) / math.log(10))
            row[f"log10_circuits_cone_{name}"] = float((logsumexp(cone) - math.log(samples)) / math.log(10))
            row[f"eps_bar_{name}"] = float(bars.mean())
        rows.append(row)
    # dt_max per sample; below the smallest one both schemes coincide
    limits = eps / np.maximum(targets.max(axis=1), np.finfo(float).tiny)
    return {"rows": rows, "break_even_dt": float(limits.min()), "dt_max_mean": float(limits.mean())}
