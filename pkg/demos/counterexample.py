"""
Two gratings, one field
=======================

A plane wave hitting two zigzag gratings with different minimum periods can
produce exactly the same scattered field above both of them.
"""

import numpy as np

from qpgrating import counterexample_fixture, counterexample_total_field

fx = counterexample_fixture()
print("incident wave: k =", fx.wave.k, " theta =", fx.wave.theta)

# The total field is a sum of four plane waves and vanishes on both zigzags.
for name, curve in (("period 2 pi", fx.profile1), ("period 4 pi", fx.profile2)):
    pts = curve.sample(1000, periods=2, rng=np.random.default_rng(0))
    u = counterexample_total_field(pts[:, 0], pts[:, 1])
    print(f"{name}: max |u| on the curve = {np.abs(u).max():.2e}")

# The same field, read as a Rayleigh expansion with either period.
print("coefficients, L = 2 pi:", fx.expansion1.as_dict(1e-15))
print("coefficients, L = 4 pi:", fx.expansion2.as_dict(1e-15))

h = fx.expansion1.reference_height
X1, X2 = np.meshgrid(np.linspace(0, 4 * np.pi, 10), np.linspace(h, h + 3, 10))
gap = np.abs(fx.expansion1(X1, X2) - fx.expansion2(X1, X2)).max()
print(f"max difference of the two expansions above height {h:.3f}: {gap:.1e}")

# Intensity alone cannot tell the periods apart here: k sin(theta) L / pi is an
# integer for L = 2 pi.
print("k sin(theta) L / pi =", fx.wave.k * np.sin(fx.wave.theta) * 2)
