"""
Robustness to SLM and alignment imperfections
=============================================

Freeze a trained stack and sweep grayscale depth, Zernike distortion and
lateral and axial offsets.
"""

from modeforge import DESK_GRID, TrainConfig, standard_gate
from modeforge.protocols import SweepBase, run_sweep

base = SweepBase(standard_gate("X1"), DESK_GRID, pad=1.5,
                 train=TrainConfig(epochs=300, precision="single"))
base.frozen_stack()

sweeps = {
    "gray_levels": [4, 8, 16, 32, 64, 256],
    "zernike_amp": [0.0, 0.25, 0.5, 1.0],
    "dx": [0.0, 24e-6, 48e-6, 96e-6],
    "dz": [-2e-3, -1e-3, 0.0, 1e-3, 2e-3],
    "pixels_fix_aperture": [64, 128, 256],
}
for axis, points in sweeps.items():
    rep = run_sweep(axis, points, base)
    rep.write_csv(f"sweep_{axis}.csv")
    print(axis)
    for p, v, e in zip(rep.points, rep.mean_visibility(), rep.mean_energy_loss()):
        print(f"   {p:10.4g}  visibility {v:.4f}  energy loss {e:.4f}")
