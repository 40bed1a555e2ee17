"""
Eternal non-Markovian dephasing on a noisy device
=================================================

A single qubit driven by H = pi X relaxes under Pauli rates (1, 1, -tanh t).
The Z rate is negative for every t > 0, yet the map stays completely
positive. The device's own X-gate noise is reshaped layer by layer: positive
targets are reached by partially cancelling the device error, the negative
Z target by amplifying it. A Markovian model with rates (2, 2, 2) is run
alongside for contrast.
"""

import tempfile

from nasim.experiments import preset, run_experiment

for kind in ("eternal", "comp"):
    result = run_experiment(preset(kind), tempfile.mkdtemp())
    quantum = [r for r in result.tables["quantum"] if r["observable"] == "1"]
    oracle = [r for r in result.tables["oracle"] if r["observable"] == "1"]
    print(f"\n{kind}")
    print("    t   P1 circuit   stderr   P1 exact   C_tot")
    for q, o in zip(quantum, oracle):
        print(f"  {q['t']:4.1f}  {q['estimate']:9.4f}  {q['stderr']:7.4f}  {o['value']:9.4f}  {q['C_tot']:6.3f}")
