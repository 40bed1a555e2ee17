"""Config-driven experiments: presets, runners, result tables and manifests.

A config is a mapping with an ``experiment`` kind and the sections
``hamiltonian``, ``device-noise``, ``targets``, ``scheme``, ``execution``
(simulation kinds) or ``analysis`` (scheme-compare / dt-scan). See
``configs/`` for one file per preset.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .engine import (
    Observable,
    SimulationPlan,
    basis_matrix,
    bell_state,
    population_observables,
    run,
)
from .lindblad import DissipatorTerm, Rate, RateSchedule, as_rate, integrate
from .mitigation import MitigationPlan, light_cone
from .noise import (
    ChannelExecutor,
    NoiseSpec,
    PauliChannel,
    ResetSpec,
    ad_decomposition,
    characterize,
    compose_channels,
    idle_channel,
    pauli_twirl,
)
from .pauli import basis_state, nontrivial_words
from .rate_control import InfeasiblePlanError, compare_schemes, dt_scan, plan_device
from .trotter import Filler, TrotterPlan

logger = logging.getLogger(__name__)

SIM_KINDS = ("eternal", "comp", "oscillating", "amplitude-damping", "custom")
ANALYSIS_KINDS = ("scheme-compare", "dt-scan")
KINDS = SIM_KINDS + ANALYSIS_KINDS
SECTIONS = ("hamiltonian", "device-noise", "targets", "scheme", "execution", "analysis")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# -- presets -----------------------------------------------------------------

_TIMES_10 = [round(0.2 * i, 10) for i in range(1, 11)]

# Per-gate errors and idle times for the emulated pads. Single-qubit X gates
# last 35 ns, CNOTs 300 ns; T1 = 100 us, T2 = 80 us.
_X_PAD = {
    "kind": "x",
    "count": 30,
    "qubits": [0],
    "gate_errors": {"X": 2.0e-4, "Y": 2.0e-4, "Z": 3.0e-4},
    "idle": {"gate_ns": 35.0, "t1_us": 100.0, "t2_us": 80.0},
}
_CNOT_PAD = {
    "kind": "cnot",
    "count": 2,
    "qubits": [0, 1],
    "gate_errors": {w: 1.5e-4 for w in ["IX", "IY", "XI", "YI", "XX", "XY", "XZ", "YX", "YY", "YZ", "ZX", "ZY", "ZZ"]}
    | {"IZ": 4.0e-4, "ZI": 4.0e-4},
    "idle": {"gate_ns": 300.0, "t1_us": 100.0, "t2_us": 80.0},
}


def _sim_preset(kind: str) -> dict:
    base = {
        "experiment": kind,
        "scheme": {"name": "II", "cone": "blind", "lambda": 0.5, "sample": "midpoint"},
        "execution": {
            "dt": 0.05,
            "times": list(_TIMES_10),
            "shots": {"factor": 180, "max": None},
            "seed": 1234,
            "mode": "expectation",
            "basis": "computational",
            "oracle_substeps": 10,
        },
    }
    if kind in ("eternal", "comp"):
        rates = {"X": 1.0, "Y": 1.0, "Z": {"kind": "tanh", "offset": 0.0, "amplitude": -1.0}}
        if kind == "comp":
            rates = {"X": 2.0, "Y": 2.0, "Z": 2.0}
        base.update({
            "hamiltonian": {"n": 1, "terms": [[math.pi, "X"]], "initial": "1"},
            "device-noise": {"pad": copy.deepcopy(_X_PAD)},
            "targets": {"pauli": rates},
        })
    elif kind == "oscillating":
        gz = Rate.damped_cosine(amplitude=0.6, decay=1.0, omega=2 * math.pi, phase=0.0, offset=0.15).to_dict()
        base.update({
            "hamiltonian": {"n": 2, "terms": [[math.pi, "ZI"]], "initial": "bell:Psi+"},
            "device-noise": {"pad": copy.deepcopy(_CNOT_PAD)},
            "targets": {"pauli": {"ZI": gz, "IZ": gz, "XI": 0.2, "YI": 0.2, "IX": 0.2, "IY": 0.2}},
        })
        base["execution"]["basis"] = "bell"
    elif kind == "amplitude-damping":
        base.update({
            "hamiltonian": {"n": 1, "terms": [[2.1 * math.pi, "X"]], "initial": "1"},
            "device-noise": {"pad": copy.deepcopy(_X_PAD)},
            "targets": {
                "pauli": {"Z": 1.0},
                "reset": {
                    "qubit": 0,
                    "basis": "Z",
                    "rate": {"kind": "tanh", "offset": 1.0, "amplitude": 1.0},
                    "p_er": 1.0e-3,
                    "duration_ns": 250.0,
                    "exact": True,
                    "compensate_failure": False,
                },
            },
        })
        base["execution"]["times"] = [round(0.1 * i, 10) for i in range(1, 21)]
    else:
        raise ConfigError(f"experiment: no preset for kind {kind!r}")
    return base


def _analysis_preset(kind: str) -> dict:
    if kind == "scheme-compare":
        analysis = {
            "n": 40,
            "eps_mean": 0.04,
            "sigma_ratios": [round(0.01 + 0.05 * i, 10) for i in range(20)] + [0.61, 1.0],
            "samples": 500,
            "lambda": 0.5,
            "dt": 1.0,
            "generators": 15,
            "grid_n": [10, 20, 30, 40, 50],
            "grid_eps_mean": [0.01, 0.02, 0.03, 0.04, 0.05],
            "grid_sigma_ratio": 0.61,
            "layers": 15,
            "k": 1,
        }
    else:
        analysis = {
            "n": 20,
            "lambda": 0.5,
            "k": 1,
            "t_final": 10.0,
            "eps": 0.05,
            "gamma_mean": 0.05,
            "gamma_sigma": 0.025,
            "samples": 500,
            "generators": 15,
            "dts": [round(0.05 * i, 10) for i in range(1, 41)],
        }
    return {"experiment": kind, "execution": {"seed": 1234}, "analysis": analysis}


def preset(kind: str) -> "ExperimentConfig":
    """Built-in configuration for ``kind``."""
    if kind in ANALYSIS_KINDS:
        return parse_config(_analysis_preset(kind))
    return parse_config(_sim_preset(kind))


PRESETS = ("eternal", "comp", "oscillating", "amplitude-damping", "scheme-compare", "dt-scan")


# -- config ------------------------------------------------------------------


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}.{key}: required field missing")
    return d[key]


def _num(value, where: str, positive: bool = False, integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _rate(value, where: str) -> Rate:
    try:
        return as_rate(value) if isinstance(value, (int, float)) else Rate.from_dict(value)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid rate ({exc})") from exc


def _word(word, n: int, where: str) -> str:
    if not isinstance(word, str) or len(word) != n or any(c not in "IXYZ" for c in word.upper()):
        raise ConfigError(f"{where}: {word!r} is not an {n}-qubit Pauli word")
    return word.upper()


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the normalized mapping."""

    kind: str
    raw: dict = field(repr=False)

    @property
    def n(self) -> int:
        return self.raw["hamiltonian"]["n"]

    @property
    def seed(self) -> int:
        return self.raw["execution"]["seed"]

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None) -> "ExperimentConfig":
        raw = self.to_dict()
        if seed is not None:
            raw["execution"]["seed"] = int(seed)
        if threads is not None and self.kind in SIM_KINDS:
            raw["execution"]["threads"] = int(threads)
        return parse_config(raw)


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a config mapping (or a run manifest holding one under ``config``)."""
    if isinstance(data, dict) and "config" in data and "experiment" not in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config: expected a mapping")
    data = copy.deepcopy(data)
    unknown = set(data) - set(SECTIONS) - {"experiment"}
    if unknown:
        raise ConfigError(f"config: unknown sections {sorted(unknown)}")
    kind = _req(data, "experiment", "config")
    if kind not in KINDS:
        raise ConfigError(f"config.experiment: unknown kind {kind!r}; expected one of {list(KINDS)}")
    execution = data.setdefault("execution", {})
    execution["seed"] = _num(execution.get("seed", 0), "execution.seed", integer=True)
    if kind in ANALYSIS_KINDS:
        _validate_analysis(kind, _req(data, "analysis", "config"))
        return ExperimentConfig(kind, data)
    _validate_simulation(data)
    return ExperimentConfig(kind, data)


def _validate_analysis(kind: str, a: dict):
    where = "analysis"
    for key in ("n", "samples", "generators"):
        a[key] = _num(_req(a, key, where), f"{where}.{key}", positive=True, integer=True)
    a["lambda"] = _num(_req(a, "lambda", where), f"{where}.lambda", positive=True)
    if kind == "scheme-compare":
        a["eps_mean"] = _num(_req(a, "eps_mean", where), f"{where}.eps_mean", positive=True)
        a["dt"] = _num(_req(a, "dt", where), f"{where}.dt", positive=True)
        a["sigma_ratios"] = [_num(s, f"{where}.sigma_ratios") for s in _req(a, "sigma_ratios", where)]
        if not a["sigma_ratios"] or any(s < 0 for s in a["sigma_ratios"]):
            raise ConfigError(f"{where}.sigma_ratios: need a non-empty list of values >= 0")
        a["grid_n"] = [_num(v, f"{where}.grid_n", positive=True, integer=True) for v in a.get("grid_n", [])]
        a["grid_eps_mean"] = [_num(v, f"{where}.grid_eps_mean", positive=True) for v in a.get("grid_eps_mean", [])]
        a["grid_sigma_ratio"] = _num(a.get("grid_sigma_ratio", 0.61), f"{where}.grid_sigma_ratio")
        a["layers"] = _num(a.get("layers", 15), f"{where}.layers", positive=True, integer=True)
        a["k"] = _num(a.get("k", 1), f"{where}.k", positive=True, integer=True)
    else:
        for key in ("t_final", "eps", "gamma_mean"):
            a[key] = _num(_req(a, key, where), f"{where}.{key}", positive=True)
        a["gamma_sigma"] = _num(_req(a, "gamma_sigma", where), f"{where}.gamma_sigma")
        a["k"] = _num(_req(a, "k", where), f"{where}.k", positive=True, integer=True)
        a["dts"] = [_num(v, f"{where}.dts", positive=True) for v in _req(a, "dts", where)]
        if not a["dts"]:
            raise ConfigError(f"{where}.dts: need at least one step")


def _validate_simulation(data: dict):
    ham = _req(data, "hamiltonian", "config")
    n = _num(_req(ham, "n", "hamiltonian"), "hamiltonian.n", positive=True, integer=True)
    if n > 4:
        raise ConfigError("hamiltonian.n: experiments support at most 4 qubits")
    ham["n"] = n
    terms = _req(ham, "terms", "hamiltonian")
    if not isinstance(terms, list) or not terms:
        raise ConfigError("hamiltonian.terms: need a list of [coefficient, word] pairs")
    ham["terms"] = [
        [_num(t[0], f"hamiltonian.terms[{i}]"), _word(t[1], n, f"hamiltonian.terms[{i}]")]
        for i, t in enumerate(terms)
    ]
    for i, (_, w) in enumerate(ham["terms"]):
        if set(w) == {"I"}:
            raise ConfigError(f"hamiltonian.terms[{i}]: identity term")
    ham["initial"] = str(ham.get("initial", "0" * n))
    _initial_state(ham["initial"], n)

    dev = _req(data, "device-noise", "config")
    if ("pad" in dev) == ("channels" in dev):
        raise ConfigError("device-noise: give exactly one of 'pad' or 'channels'")
    if "pad" in dev:
        pad = dev["pad"]
        try:
            Filler(pad["kind"], pad["count"], tuple(pad["qubits"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"device-noise.pad: {exc}") from exc
        if any(q >= n for q in pad["qubits"]):
            raise ConfigError("device-noise.pad.qubits: qubit outside register")
        m = len(pad["qubits"])
        pad["gate_errors"] = {
            _word(w, m, "device-noise.pad.gate_errors"): _num(e, f"device-noise.pad.gate_errors.{w}")
            for w, e in pad.get("gate_errors", {}).items()
        }
        if any(e < 0 for e in pad["gate_errors"].values()):
            raise ConfigError("device-noise.pad.gate_errors: error probabilities must be >= 0")
        if pad.get("idle") is not None:
            for key in ("gate_ns", "t1_us", "t2_us"):
                pad["idle"][key] = _num(_req(pad["idle"], key, "device-noise.pad.idle"),
                                        f"device-noise.pad.idle.{key}", positive=True)
    else:
        try:
            spec = NoiseSpec(tuple(PauliChannel.from_dict(c) for c in dev["channels"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"device-noise.channels: {exc}") from exc
        if any(q >= n for s in spec.slots for q in s):
            raise ConfigError("device-noise.channels: location outside register")
        dev["channels"] = [c.to_dict() for c in spec.channels]
    if dev.get("characterize") is not None:
        ch = dev["characterize"]
        ch["shots"] = _num(_req(ch, "shots", "device-noise.characterize"), "device-noise.characterize.shots",
                           positive=True, integer=True)
        ch["depths"] = [_num(d, "device-noise.characterize.depths", positive=True, integer=True)
                        for d in _req(ch, "depths", "device-noise.characterize")]
        if len(set(ch["depths"])) < 2:
            raise ConfigError("device-noise.characterize.depths: need at least two distinct depths")

    tg = _req(data, "targets", "config")
    tg["pauli"] = {
        _word(w, n, "targets.pauli"): _rate(r, f"targets.pauli.{w}").to_dict()
        for w, r in tg.get("pauli", {}).items()
    }
    if tg.get("reset") is not None:
        rs = tg["reset"]
        q = _num(rs.get("qubit", 0), "targets.reset.qubit", integer=True)
        if not 0 <= q < n:
            raise ConfigError(f"targets.reset.qubit: {q} outside {n}-qubit register")
        rs["qubit"] = q
        rs["rate"] = _rate(_req(rs, "rate", "targets.reset"), "targets.reset.rate").to_dict()
        rs["basis"] = rs.get("basis", "Z")
        if rs["basis"] not in _RESET_BASES:
            raise ConfigError(f"targets.reset.basis: expected one of {sorted(_RESET_BASES)}")
        rs["p_er"] = _num(rs.get("p_er", 1e-3), "targets.reset.p_er")
        if not 0 <= rs["p_er"] <= 1:
            raise ConfigError("targets.reset.p_er: must lie in [0, 1]")
        rs["duration_ns"] = _num(rs.get("duration_ns", 250.0), "targets.reset.duration_ns", positive=True)
        rs["exact"] = bool(rs.get("exact", True))
        rs["compensate_failure"] = bool(rs.get("compensate_failure", False))

    sc = data.setdefault("scheme", {})
    sc["name"] = str(sc.get("name", "II"))
    if sc["name"] not in ("I", "II"):
        raise ConfigError("scheme.name: expected 'I' or 'II'")
    sc["cone"] = sc.get("cone", "blind")
    if sc["cone"] not in ("blind", "light-cone"):
        raise ConfigError("scheme.cone: expected 'blind' or 'light-cone'")
    sc["lambda"] = _num(sc.get("lambda", 0.5), "scheme.lambda", positive=True)
    sc["sample"] = sc.get("sample", "right")
    if sc["sample"] not in ("right", "midpoint"):
        raise ConfigError("scheme.sample: expected 'right' or 'midpoint'")

    ex = data["execution"]
    ex["dt"] = _num(_req(ex, "dt", "execution"), "execution.dt", positive=True)
    times = _req(ex, "times", "execution")
    if not isinstance(times, list) or not times:
        raise ConfigError("execution.times: need a non-empty list")
    ex["times"] = [_num(t, "execution.times", positive=True) for t in times]
    if ex["times"] != sorted(set(ex["times"])):
        raise ConfigError("execution.times: must be strictly increasing")
    for t in ex["times"]:
        layers = round(t / ex["dt"])
        if abs(layers * ex["dt"] - t) > 1e-9 * max(1.0, t):
            raise ConfigError(f"execution.times: {t} is not a multiple of dt={ex['dt']}")
    shots = ex.get("shots", {"factor": 180})
    if isinstance(shots, dict):
        shots["factor"] = _num(shots.get("factor", 180), "execution.shots.factor", positive=True)
        if shots.get("max") is not None:
            shots["max"] = _num(shots["max"], "execution.shots.max", positive=True, integer=True)
        else:
            shots["max"] = None
    else:
        shots = _num(shots, "execution.shots", positive=True, integer=True)
    ex["shots"] = shots
    ex["mode"] = ex.get("mode", "expectation")
    if ex["mode"] not in ("expectation", "projective"):
        raise ConfigError("execution.mode: expected 'expectation' or 'projective'")
    ex["basis"] = ex.get("basis", "computational")
    try:
        basis_matrix(ex["basis"], n)
    except ValueError as exc:
        raise ConfigError(f"execution.basis: {exc}") from exc
    ex["oracle_substeps"] = _num(ex.get("oracle_substeps", 10), "execution.oracle_substeps", positive=True,
                                 integer=True)
    if ex.get("threads") is not None:
        ex["threads"] = _num(ex["threads"], "execution.threads", positive=True, integer=True)


def _initial_state(label: str, n: int) -> np.ndarray:
    if label.startswith("bell:"):
        if n != 2:
            raise ConfigError("hamiltonian.initial: Bell states need 2 qubits")
        try:
            return bell_state(label[5:])
        except ValueError as exc:
            raise ConfigError(f"hamiltonian.initial: unknown Bell label {label[5:]!r}") from exc
    if len(label) != n or any(c not in "01" for c in label):
        raise ConfigError(f"hamiltonian.initial: expected {n} bits or 'bell:<label>', got {label!r}")
    return basis_state(label)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return parse_config(data)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


# -- building blocks ---------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SH = np.array([[1, 0], [0, 1j]], dtype=complex) @ _H
# reset basis -> U with U Z U^dagger equal to that Pauli
_RESET_BASES = {"Z": np.eye(2, dtype=complex), "X": _H, "Y": _SH}


def pad_channel(pad: dict) -> PauliChannel:
    """Per-layer channel of a self-cancelling pad: per-gate Pauli errors plus twirled idle decay."""
    location = tuple(pad["qubits"])
    per_gate = [PauliChannel(location, pad.get("gate_errors", {}))]
    idle = pad.get("idle")
    if idle is not None:
        single = idle_channel(idle["gate_ns"] * 1e-3, idle["t1_us"], idle["t2_us"])
        for q in location:
            per_gate.append(pauli_twirl(single, location=(q,)))
    return compose_channels(per_gate, location).scaled(pad["count"])


def device_noise(config: ExperimentConfig) -> NoiseSpec:
    dev = config.section("device-noise")
    if "pad" in dev:
        return NoiseSpec((pad_channel(dev["pad"]),))
    return NoiseSpec(tuple(PauliChannel.from_dict(c) for c in dev["channels"]))


def filler(config: ExperimentConfig) -> Optional[Filler]:
    pad = config.section("device-noise").get("pad")
    return None if pad is None else Filler(pad["kind"], pad["count"], tuple(pad["qubits"]))


def hamiltonian_terms(config: ExperimentConfig) -> list[tuple[float, str]]:
    return [(c, w) for c, w in config.section("hamiltonian")["terms"]]


def reset_terms(config: ExperimentConfig) -> list[DissipatorTerm]:
    """Dissipator realized by the configured reset (decay plus its dephasing byproduct)."""
    rs = config.section("targets").get("reset")
    if rs is None:
        return []
    return ad_decomposition(Rate.from_dict(rs["rate"]), _RESET_BASES[rs["basis"]], rs["qubit"], config.n)


def model_dissipator(config: ExperimentConfig) -> list[DissipatorTerm]:
    """Target master-equation dissipator: Pauli terms plus the reset's decay term."""
    terms = [DissipatorTerm.pauli(w, Rate.from_dict(r)) for w, r in config.section("targets")["pauli"].items()]
    terms += [t for t in reset_terms(config) if t.kind == "jump"]
    return terms


def pauli_targets(config: ExperimentConfig) -> dict:
    """Pauli rates the mitigation must realize: model rates minus the reset's dephasing."""
    out = {w: Rate.from_dict(r) for w, r in config.section("targets")["pauli"].items()}
    for t in reset_terms(config):
        if t.kind == "pauli":
            w = t.pauli_op.word
            out[w] = out.get(w, Rate.constant(0.0)) + t.rate.scaled(-1.0)
    return out


def observables(config: ExperimentConfig) -> list[Observable]:
    return population_observables(config.section("execution")["basis"], config.n)


@dataclass
class PreparedRun:
    """Resolved pieces of a simulation experiment, ready to execute."""

    config: ExperimentConfig
    truth: NoiseSpec
    estimate: NoiseSpec
    plan: MitigationPlan
    simulation: SimulationPlan
    dt: float
    layer_counts: list


def prepare(config: ExperimentConfig, rng: Optional[np.random.Generator] = None) -> PreparedRun:
    """Characterize (if configured), plan and assemble the simulation."""
    if config.kind not in SIM_KINDS:
        raise ConfigError(f"experiment: {config.kind} is not a simulation kind")
    ex = config.section("execution")
    sc = config.section("scheme")
    n = config.n
    truth = device_noise(config)
    estimate = truth
    char = config.section("device-noise").get("characterize")
    if char is not None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(10**6,))) if rng is None else rng
        estimate = characterize(ChannelExecutor(truth, n), char["shots"], char["depths"], rng=rng)
    t_final = ex["times"][-1]
    try:
        plan, dt, layers = plan_device(estimate, pauli_targets(config), n, ex["dt"], t_final, sc["name"], sc["sample"])
    except ValueError as exc:
        if isinstance(exc, InfeasiblePlanError):
            raise
        raise ConfigError(f"scheme: {exc}") from exc
    terms = hamiltonian_terms(config)
    if sc["cone"] == "light-cone":
        support = sorted({q for o in observables(config) for q in o.support})
        plan = plan.with_light_cone(support, terms)
    trotter = TrotterPlan(terms, dt, layers, estimate.slots, filler(config))
    reset = None
    rs = config.section("targets").get("reset")
    if rs is not None:
        u = _RESET_BASES[rs["basis"]]
        reset = ResetSpec.from_rate(Rate.from_dict(rs["rate"]), dt, layers, exact=rs["exact"], sample=sc["sample"],
                                    compensate_failure=rs["compensate_failure"], u=u, v=u, qubit=rs["qubit"],
                                    duration_ns=rs["duration_ns"], p_er=rs["p_er"])
    sim = SimulationPlan(trotter, truth, plan, _initial_state(config.section("hamiltonian")["initial"], n), reset)
    # scheme I may shorten the step; time points snap to the nearest layer
    counts = sorted({max(1, int(round(t / dt))) for t in ex["times"]})
    return PreparedRun(config, truth, estimate, plan, sim, dt, counts)


def shots_for(config: ExperimentConfig, c_tot: float) -> int:
    rule = config.section("execution")["shots"]
    if isinstance(rule, int):
        return rule
    shots = int(math.ceil(rule["factor"] * c_tot**2))
    if rule.get("max") is not None and shots > rule["max"]:
        logger.warning("shot rule asks for %d shots; capped at %d", shots, rule["max"])
        shots = rule["max"]
    return shots


def oracle_table(prep: PreparedRun) -> list[dict]:
    """Master-equation populations on the experiment's time grid."""
    config = prep.config
    ex = config.section("execution")
    sub = ex["oracle_substeps"]
    t_max = prep.layer_counts[-1] * prep.dt
    traj = integrate(
        hamiltonian_terms(config),
        RateSchedule(tuple(model_dissipator(config))),
        _initial_state(config.section("hamiltonian")["initial"], config.n),
        t_max,
        prep.dt / sub,
        store_every=sub,
    )
    obs = observables(config)
    rows = []
    for d in prep.layer_counts:
        rho = traj.states[d]
        for o in obs:
            rows.append({"t": d * prep.dt, "observable": o.label, "value": float(np.real(np.trace(o.matrix @ rho)))})
    return rows


def quantum_table(prep: PreparedRun) -> list[dict]:
    config = prep.config
    ex = config.section("execution")
    obs = observables(config)
    rows = []
    for i, d in enumerate(prep.layer_counts):
        shots = shots_for(config, prep.simulation.total_cost(d))
        ests = run(prep.simulation, obs, shots, config.seed, layers=d, mode=ex["mode"], threads=ex.get("threads"),
                   stream=i)
        rows += [e.to_row() for e in ests]
    return rows


def plan_table(plan: MitigationPlan) -> list[dict]:
    rows = []
    for d in range(1, plan.layers + 1):
        for s, loc in enumerate(plan.slots):
            for g, e, r in zip(nontrivial_words(len(loc)), plan.eps[s], plan.factors(d, s)):
                rows.append({"layer": d, "slot": "-".join(map(str, loc)), "generator": g, "eps": float(e),
                             "r": float(r), "eps_prime": float(max(r, 0.0) * e)})
    return rows


def noise_table(spec: NoiseSpec) -> list[dict]:
    rows = []
    for i, ch in enumerate(spec.channels):
        for g in nontrivial_words(ch.arity):
            row = {"slot": "-".join(map(str, ch.location)), "generator": g, "eps": ch.errors.get(g, 0.0)}
            if spec.stderr is not None:
                row["stderr"] = spec.stderr[i].get(g, 0.0)
            rows.append(row)
    return rows


# -- results -----------------------------------------------------------------

COLUMNS = {
    "quantum": ["t", "observable", "estimate", "stderr", "C_tot", "shots", "seed", "layers"],
    "oracle": ["t", "observable", "value"],
    "plan": ["layer", "slot", "generator", "eps", "r", "eps_prime"],
    "noise": ["slot", "generator", "eps"],
    "characterized": ["slot", "generator", "eps", "stderr"],
    "sigma_sweep": ["sigma", "eps_bar_I", "eps_bar_II", "R", "log10_circuits_blind_I", "log10_circuits_blind_II",
              "log10_circuits_cone_I", "log10_circuits_cone_II"],
    "cost_ratio_grid": ["n", "eps_mean", "sigma", "eps_bar_I", "eps_bar_II", "R"],
    "dt_scan": ["dt", "eps_bar_I", "eps_bar_II", "log10_circuits_blind_I", "log10_circuits_blind_II",
             "log10_circuits_cone_I", "log10_circuits_cone_II"],
}


@dataclass
class ResultSet:
    """Named tables plus a manifest describing how they were produced."""

    tables: dict
    manifest: dict


def _fmt(value) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path: Path, columns: list, rows: list[dict]) -> str:
    """Write a CSV with a header row; returns the SHA-256 of the file contents."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(row.get(c, "")) for c in columns])
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_results(results: ResultSet, out_dir) -> dict:
    """Write every table as ``<name>.csv`` and the manifest as ``manifest.yaml``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory ({exc.strerror or exc})") from exc
    paths, hashes = {}, {}
    for name, rows in results.tables.items():
        cols = COLUMNS.get(name) or (list(rows[0]) if rows else [])
        path = out / f"{name}.csv"
        hashes[name] = write_table(path, cols, rows)
        paths[name] = path
    manifest = dict(results.manifest, tables={k: {"file": f"{k}.csv", "sha256": v} for k, v in hashes.items()})
    mpath = out / "manifest.yaml"
    try:
        with open(mpath, "w") as fh:
            yaml.safe_dump(_plain(manifest), fh, sort_keys=False)
    except OSError as exc:
        raise OSError(f"{mpath}: {exc.strerror or exc}") from exc
    paths["manifest"] = mpath
    return paths


def _plain(obj):
    """Convert numpy scalars and tuples so YAML stays portable."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _manifest(config: ExperimentConfig, **extra) -> dict:
    return {"package": "nasim", "version": _version(), "config": config.to_dict(), **extra}


# -- runners -----------------------------------------------------------------


def run_experiment(config: ExperimentConfig, out_dir=None) -> ResultSet:
    """Characterize, plan, run every time point and the oracle; optionally write files."""
    if config.kind in ANALYSIS_KINDS:
        return run_scheme_comparison(config, out_dir)
    prep = prepare(config)
    quantum = quantum_table(prep)
    oracle = oracle_table(prep)
    tables = {"quantum": quantum, "oracle": oracle, "plan": plan_table(prep.plan), "noise": noise_table(prep.truth)}
    if prep.estimate is not prep.truth:
        tables["characterized"] = noise_table(prep.estimate)
    manifest = _manifest(
        config,
        resolved={
            "dt": prep.dt,
            "layers": prep.layer_counts,
            "device_noise": prep.truth.to_dict(),
            "planned_noise": prep.estimate.to_dict(),
            "plan": prep.plan.to_dict(),
            "shots": [r["shots"] for r in quantum[:: len(observables(config))]],
            "C_tot": [r["C_tot"] for r in quantum[:: len(observables(config))]],
        },
    )
    results = ResultSet(tables, manifest)
    if out_dir is not None:
        emit_results(results, out_dir)
    return results


def run_plan_only(config: ExperimentConfig, out_dir=None) -> ResultSet:
    prep = prepare(config)
    costs = [{"layers": d, "C_tot": prep.simulation.total_cost(d),
              "shots": shots_for(config, prep.simulation.total_cost(d))} for d in prep.layer_counts]
    results = ResultSet({"plan": plan_table(prep.plan), "cost": costs},
                        _manifest(config, resolved={"dt": prep.dt, "plan": prep.plan.to_dict()}))
    if out_dir is not None:
        emit_results(results, out_dir)
    return results


def run_oracle_only(config: ExperimentConfig, out_dir=None) -> ResultSet:
    prep = prepare(config)
    results = ResultSet({"oracle": oracle_table(prep)}, _manifest(config, resolved={"dt": prep.dt}))
    if out_dir is not None:
        emit_results(results, out_dir)
    return results


def run_characterization(config: ExperimentConfig, out_dir=None) -> ResultSet:
    char = config.section("device-noise").get("characterize") or {"shots": 100000, "depths": [2, 4, 8, 16]}
    truth = device_noise(config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(10**6,)))
    est = characterize(ChannelExecutor(truth, config.n), char["shots"], char["depths"], rng=rng)
    results = ResultSet({"noise": noise_table(truth), "characterized": noise_table(est)},
                        _manifest(config, resolved={"estimate": est.to_dict(), "characterization": char}))
    if out_dir is not None:
        emit_results(results, out_dir)
    return results


def run_scheme_comparison(config: ExperimentConfig, out_dir=None) -> ResultSet:
    """Scheme tables: eps_bar versus sigma, R over (n, eps_mean), circuits versus dt."""
    a = config.section("analysis")
    seed = config.seed
    tables = {}
    if config.kind == "scheme-compare":
        rows = compare_schemes(a["n"], a["eps_mean"], a["sigma_ratios"], a["samples"], a["lambda"], a["dt"],
                               a["generators"], np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,))))
        ln10 = math.log(10)
        blind_w = a["n"] - 1
        cone_w = light_cone(1, a["k"], a["n"])
        for r in rows:
            for name in ("I", "II"):
                # per-layer circuits C**2 for blind and cone widths
                r[f"log10_circuits_blind_{name}"] = 2 * a["lambda"] * blind_w * r[f"eps_bar_{name}"] / ln10
                r[f"log10_circuits_cone_{name}"] = 2 * a["lambda"] * cone_w * r[f"eps_bar_{name}"] / ln10
        tables["sigma_sweep"] = rows
        grid = []
        for i, n in enumerate(a["grid_n"]):
            for j, e in enumerate(a["grid_eps_mean"]):
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, i, j)))
                row = compare_schemes(n, e, [a["grid_sigma_ratio"]], a["samples"], a["lambda"], a["dt"],
                                      a["generators"], rng)[0]
                grid.append({"n": n, "eps_mean": e, "sigma": row["sigma"], "eps_bar_I": row["eps_bar_I"],
                             "eps_bar_II": row["eps_bar_II"], "R": row["R"]})
        tables["cost_ratio_grid"] = grid
        extra = {}
    else:
        res = dt_scan(a["dts"], a["n"], a["lambda"], a["k"], a["t_final"], a["eps"], a["gamma_mean"],
                      a["gamma_sigma"], a["samples"], a["generators"],
                      np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,))))
        tables["dt_scan"] = res["rows"]
        extra = {"break_even_dt": res["break_even_dt"], "dt_max_mean": res["dt_max_mean"]}
    results = ResultSet(tables, _manifest(config, resolved=extra))
    if out_dir is not None:
        emit_results(results, out_dir)
    return results


def table_hash(rows: list[dict], columns: list) -> str:
    h = hashlib.sha256()
    h.update((",".join(columns) + "\n").encode())
    for r in rows:
        h.update((",".join(_fmt(r.get(c, "")) for c in columns) + "\n").encode())
    return h.hexdigest()


def default_out_dir(config: ExperimentConfig) -> str:
    return os.path.join("results", config.kind)
