"""
Bands and mu-eigenvalues of a periodic waveguide
================================================

The straight strip has closed-form bands, which makes it a good check for the
Galerkin discretisation. A curved cell then shows genuinely dispersive bands,
none of them flat.
"""

import numpy as np

from qpgrating import GratingProfile
from qpgrating.waveguide import (WaveguideCell, assemble_pencil, default_alpha_grid,
                                 dispersion_sweep, flat_band_scan, mu_eigenvalues,
                                 mu_from_dispersion, strip_dispersion)

strip = WaveguideCell.strip(np.pi, fourier_order=6, poly_count=16)
grid = default_alpha_grid(21)
curve = dispersion_sweep(strip, grid, 6)
exact = np.array([sorted(strip_dispersion(np.pi, a, n, m)
                         for n in range(-6, 7) for m in (1, 2, 3))[:6] for a in grid])
print("strip: max relative band error", np.abs(curve.bands / exact - 1).max())

# mu = sin(theta) values at which the cell problem has a nontrivial solution
spec = mu_eigenvalues(assemble_pencil(strip, 2.0))
print("\nstrip, k = 2")
for mu, m in zip(spec.real_eigs, spec.multiplicities):
    print(f"  mu = {mu:+.10f}  multiplicity {m}")
print("  same set from the bands:",
      np.round(mu_from_dispersion(dispersion_sweep(strip, grid, 12), 2.0), 10))

cell = WaveguideCell(GratingProfile(2 * np.pi, cos=(0.2,)),
                     GratingProfile(2 * np.pi, sin=(0.2,), offset=2.0),
                     fourier_order=6, poly_count=12)
bands = dispersion_sweep(cell, grid, 6)
report = flat_band_scan(bands)
print("\ncurved cell band variations:", np.round(report["variation"], 4))
print("flagged as flat:", report["flagged"])
print("mu at k = 2:", np.round(mu_eigenvalues(assemble_pencil(cell, 2.0)).real_eigs, 6))
