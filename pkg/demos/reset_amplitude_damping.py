"""
Amplitude damping from stochastic resets
========================================

A Rabi-driven qubit (H = 2.1 pi X) decays towards |0> at rate 1 + tanh t on
top of unit Z dephasing. Dephasing is shaped from the device's own X-gate
noise. Decay is added by resetting the qubit to |0> with probability
1 - exp(-Gamma dt) per layer; a reset fails (does nothing) with
probability 1e-3. With damping switched off the Rabi oscillation keeps a
larger amplitude.
"""

import tempfile

from nasim.experiments import parse_config, preset, run_experiment

damped = preset("amplitude-damping")
raw = damped.to_dict()
raw["targets"]["reset"]["rate"] = {"kind": "constant", "value": 0.0}
undamped = parse_config(raw)

results = {}
for name, config in (("damped", damped), ("undamped", undamped)):
    result = run_experiment(config, tempfile.mkdtemp())
    q = [r for r in result.tables["quantum"] if r["observable"] == "1"]
    o = [r for r in result.tables["oracle"] if r["observable"] == "1"]
    results[name] = (q, o)

print("    t   P1 damped (exact)     P1 undamped (exact)")
for (qd, od), (qu, ou) in zip(zip(*results["damped"]), zip(*results["undamped"])):
    print(f"  {qd['t']:4.1f}  {qd['estimate']:6.3f} ({od['value']:6.3f})    {qu['estimate']:6.3f} ({ou['value']:6.3f})")
