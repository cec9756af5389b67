"""
Free-space propagation of a Gaussian beam
=========================================

Propagate a Gaussian beam with the angular-spectrum method and compare the
second-moment radius with the analytic Gaussian-beam envelope.
"""

import numpy as np

from modeforge import GridSpec, beam_radius, gaussian_beam, propagate, rayleigh_range

grid = GridSpec(384, 384, 24e-6, 1550e-9)
w0 = 0.5e-3
beam = gaussian_beam(grid, w0)
zr = rayleigh_range(w0, grid.wavelength)
print(f"Rayleigh range: {zr * 1e3:.1f} mm")

for m in (0.0, 0.5, 1.0, 2.0):
    out = propagate(beam, m * zr)
    expected = w0 * np.sqrt(1 + m ** 2)
    print(f"z = {m:3.1f} zR   w = {beam_radius(out) * 1e3:.4f} mm   "
          f"analytic {expected * 1e3:.4f} mm   power {out.power:.12f}")

# propagating back with -z undoes the step (the two operators are adjoint)
there = propagate(beam, 0.2)
back = propagate(there, -0.2)
print("round-trip error:", np.max(np.abs(back.amplitudes - beam.amplitudes)) / np.max(np.abs(beam.amplitudes)))
