"""
Recovering a profile from multi-angle data
==========================================

Phased near-field data for several incident angles, a flat starting guess,
and Levenberg-Marquardt on the Fourier coefficients of the profile.
"""

import numpy as np

from qpgrating import CollocationConfig, GratingProfile
from qpgrating.inverse import DataSet, InversionConfig, linear_independence_gram, reconstruct

target = GratingProfile(2 * np.pi, cos=(0.03,), sin=(0.1,))
angles = tuple(np.linspace(-1.0, 1.0, 8) + 0.05)
x1 = np.linspace(0, 2 * np.pi, 40, endpoint=False)
solver = CollocationConfig(12)

data = DataSet.synthesize(target, 1.5, angles, x1, 0.5, solver)
res = reconstruct(data, GratingProfile.flat(), InversionConfig(dof=1, solver=solver))
print("misfit history:", ["%.2e" % f for f in res.history])
print("recovered cos, sin, offset:", res.profile.cos, res.profile.sin, res.profile.offset)
print(f"{res.iterations} accepted steps in {res.elapsed:.2f} s")

# Total fields for distinct angles are linearly independent on the segment.
seg = (0.0, 2 * np.pi, 0.5)
print("\nGram sigma_min, 5 angles:", linear_independence_gram(target, angles[:5], seg, 200, 1.5))
print("Gram sigma_min, repeated angle:",
      linear_independence_gram(target, angles[:4] + angles[3:4], seg, 200, 1.5))

# One angle fits the data but proves nothing about the profile.
one = DataSet.synthesize(target, 1.5, angles[:1], x1, 0.5, solver)
res1 = reconstruct(one, GratingProfile.flat(), InversionConfig(dof=1, solver=solver))
print("\nsingle angle: final misfit %.1e, profile %s" % (res1.history[-1], res1.profile))
