"""
Coarse response maps
====================

Small versions of the sweeps: locked regions over forcing period and
amplitude, and period isocurves over the delay plane.  Writes SVG heatmaps
next to this script.  Takes a few minutes on one core.
"""

from pathlib import Path

import numpy as np

from ultradian.sweep import fasting_field_map, isocurves, resonance_map, tongue_roots

here = Path(__file__).resolve().parent

## Resonance map, 20 x 8
fm = resonance_map(T_in_range=(60.0, 420.0), G_max_range=(0.0, 0.7), resolution=(20, 8))
T0 = fm.provenance["T0"]
print(f"T0 = {T0:.2f} min")
labels = fm.labels()
for iy in reversed(range(fm.shape[0])):
    row = "".join({"locked": "L", "quasi-periodic": "q", "boundary": "b", "periodic": "-",
                   "steady": "s"}.get(v, "?") for v in labels[iy])
    print(f"G_max {fm.spec.y.values[iy]:4.2f} |{row}|")
for r in tongue_roots(fm):
    print(f"locked region q={r['q']}: root at T_in = {r['root_x']:.0f} ({r['root_x'] / T0:.2f} T0)")
fm.to_svg(here / "resonance.svg")

## Period over the delay plane, 12 x 12
fm = fasting_field_map(resolution=(12, 12))
per = fm.field("period")
print(f"\nperiods {np.nanmin(per) / 60:.2f} .. {np.nanmax(per) / 60:.2f} h, "
      f"{np.isnan(per).sum()} cells without oscillation")
for level, polys in isocurves(fm, ("period", [150.0, 200.0, 250.0])).items():
    for poly in polys:
        slope = np.polyfit(poly[:, 0], poly[:, 1], 1)[0]
        print(f"isocurve {level:.0f} min: {len(poly)} points, slope {slope:.2f}")
fm.to_svg(here / "fasting_period.svg", "period")
