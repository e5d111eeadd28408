"""
Where oscillations start
========================

Linearise at the equilibrium, trace the curve of purely imaginary roots in
the (tau_I, tau_G) plane and see how constant infusion moves it.
"""

import numpy as np

from ultradian.linear import (
    char_coeffs, chi, diagonal_intercept, hopf_curve, hopf_curve_approx, hopf_family,
    hopf_tau_G_exact, omega_bounds,
)
from ultradian.model import ModelParams

p = ModelParams()
c = char_coeffs(p)
print(f"alpha0 = {c.alpha0:.4e}  alpha1 = {c.alpha1:.4e}")
print(f"beta1  = {c.beta1:.4e}  beta2  = {c.beta2:.4e}")

## The curve
cv = hopf_curve(c)
print(f"{len(cv)} samples, max |chi(i w)| = {cv.residual.max():.1e}")
b = omega_bounds(c)
print(f"meets tau_G = 0 at tau_I = {b.tau_I_at_omega_G:.3f} (period {2 * np.pi / b.omega_G:.1f} min)")
print(f"meets tau_I = 0 at tau_G = {b.tau_G_at_omega_I:.3f} (period {2 * np.pi / b.omega_I:.1f} min)")

# (5, 20) lies beyond the curve, (1, 1) before it
for pt in [(5.0, 20.0), (1.0, 1.0)]:
    print(pt, "oscillates" if cv.side(*pt) > 0 else "decays")

# direct check of one sample
j = len(cv) // 2
print("chi at a middle sample:", abs(chi(1j * cv.omega[j], c, cv.tau_I[j], cv.tau_G[j])))

## Small beta1 approximation
ti = np.linspace(0, 16, 9)
exact = np.array([hopf_tau_G_exact(c, x) for x in ti])
for order in ("zero", "printed", "consistent"):
    a = hopf_curve_approx(c, ti, order=order, strict=False)
    print(f"{order:>10}: max |error| = {np.nanmax(np.abs(a - exact)):.3f} min")

## Constant infusion moves the curve
g = np.round(np.arange(0, 1.61, 0.1), 2)
for gi, curve in zip(g, hopf_family(p, g, n=600)):
    print(f"G_in = {gi:4.1f}: intercept with tau_G = 4 tau_I at distance {diagonal_intercept(curve):6.2f}")
