"""
Phases from intensities
=======================

The incident wave acts as a known reference: the intensity |u|^2 above the
grating is a sum of exponentials with known frequencies, and the cross terms
with the incident wave carry the complex Rayleigh coefficients.
"""

import numpy as np

from qpgrating import GratingProfile, PlaneWave
from qpgrating.retrieval import catalog_frequencies, estimate_period, roundtrip

profile = GratingProfile(2 * np.pi, sin=(0.1,))

for theta in (-0.7, 0.3, 1.1):
    r = roundtrip(profile, PlaneWave(1.5, theta))
    print(f"theta = {theta:+.1f}  window N = {r['window']}  coefficient error {r['coefficient_error']:.1e}"
          f"  rank-one defect {r['rank_one_defect']:.1e}")

# At k sin(theta) L / pi in Z two products share a frequency and uniqueness is lost.
cat = catalog_frequencies(2.0, -np.pi / 6, 2 * np.pi)
print("\nexcluded angle:", cat.excluded_angle)
print("roundtrip at the excluded angle:", roundtrip(profile, PlaneWave(2.0, -np.pi / 6)))

# With phased data on one line, the period can be read off the spectrum.
r = roundtrip(profile, PlaneWave(1.5, 0.3))
scat = r["solution"].expansion
x = np.arange(2048) * (16 * np.pi / 2048)
# evanescent harmonics below the detection threshold slightly bias the fit
est = estimate_period(x, scat(x, np.full_like(x, 0.5)), 1.5, 0.3, 4 * np.pi)
print("\ndetected harmonics:", np.round(est.frequencies, 8))
print("compatible periods:", np.round(est.periods, 8))
