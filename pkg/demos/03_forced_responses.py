"""
Periodic glucose pulses
=======================

Pulse trains at different periods and durations: quasi-periodic response,
1:1 locking, and how spreading the same dose over a longer pulse lowers the
glucose peak.
"""

from ultradian.analysis import amplitude_gain, classify, required_span, shift_residual
from ultradian.forcing import InfusionProtocol
from ultradian.model import ModelParams
from ultradian.simulation import simulate

p = ModelParams()


def respond(prot):
    tr = simulate(p, prot, span=required_span(prot, p.delays))
    return tr, classify(tr, prot, p.delays)


fasting_tr, fasting = respond(None)
T0 = fasting.period
print(f"T0 = {T0:.2f} min")

## One-hour pulses every two hours
tr, s = respond(InfusionProtocol.on_off(1.35, 60.0, 30.0))
print(f"\nT_in = 60: {s.label}, strobe range {s.strobe_range:.1f} mg/dl")

## Forcing at the natural period
prot = InfusionProtocol.on_off(1.0, T0, T0 / 2)
tr, s = respond(prot)
print(f"\nT_in = T0: {s.label} p={s.p} q={s.q}")
print(f"repeat error over one period: {shift_residual(tr, s.t_cut, prot.T_in):.1e} mg/dl")
print(f"peak-to-peak gain {amplitude_gain(s, fasting):.2f}, "
      f"max-G gain {amplitude_gain(s, fasting, 'maximum'):.2f}")

## Longer periods lock with 2 and 3 oscillations per pulse
for q in (2, 3):
    prot = InfusionProtocol.on_off(0.3, q * T0, q * T0 / 2)
    _, s = respond(prot)
    print(f"T_in = {q} T0: {s.label} p={s.p} q={s.q}")

## Same mean dose, different pulse lengths
for t_in in (5.0, 30.0, 60.0, 90.0):
    prot = InfusionProtocol.from_mean(0.4, 180.0, t_in)
    _, s = respond(prot)
    print(f"t_in = {t_in:4.0f} (G_max {prot.G_max:5.2f}): max G {s.G_max:6.1f} mg/dl, {s.label}")
