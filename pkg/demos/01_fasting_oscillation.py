"""
Ultradian oscillation without infusion
======================================

Simulate the model at the default delays, find the glucose peaks and
compare the oscillation with the equilibrium it circles around.
"""

import numpy as np

from ultradian.analysis import classify, peaks, post_transient, required_span
from ultradian.forcing import InfusionProtocol
from ultradian.model import ModelParams, equilibrium
from ultradian.simulation import simulate

p = ModelParams()
print("delays (tau_I, tau_G):", p.delays)

## The equilibrium
eq = equilibrium(p)
print(f"G* = {eq.G_star:.3f} mg/dl, I* = {eq.I_star:.3f} uU/ml")

## A long fasting run
span = required_span(None, p.delays)
tr = simulate(p, span=span)
print(f"{tr.values.shape[0]} nodes, dt = {tr.dt} min, span = {tr.span:g} min")

# the first 100 (tau_I + tau_G + 132) minutes are transient
win = post_transient(tr, None, p.delays, min_window=2000.0)
pk = peaks(win.G, win.times, prominence=1.0)
spacing = np.diff(pk[:, 0])
print(f"{len(pk)} peaks, spacing {spacing.mean():.2f} +- {spacing.std():.1e} min"
      f" = {spacing.mean() / 60:.3f} h")

s = classify(tr, None, p.delays)
print(s.report())

## Constant infusion kills the oscillation
prot = InfusionProtocol.constant(1.35)
tr = simulate(p, prot, span=required_span(prot, p.delays))
s = classify(tr, prot, p.delays)
eq = equilibrium(p, 1.35)
print(f"\nG_in = 1.35: {s.label}, final G = {tr.values[-1, 0]:.6f}, G* = {eq.G_star:.6f}")

## Inside the stable region the oscillation dies out as well
q = p.replace(tau_I=1.0, tau_G=1.0)
tr = simulate(q, span=3000.0)
print(f"delays (1, 1): G(3000) = {tr.values[-1, 0]:.6f}")
