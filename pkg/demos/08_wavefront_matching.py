"""
Gradient training against wavefront matching
============================================

Train the same X1 instance with Adam and with wavefront matching, then add
an energy-loss term to the Adam loss and watch the trade-off.
"""

from modeforge import DESK_GRID, GateProblem, PhaseLayerStack, TrainConfig, default_basis, standard_gate
from modeforge.trainer import phase_smoothness, train_d2nn, wfm_train

gate = standard_gate("X1")
problem = GateProblem.build(gate, default_basis(3, DESK_GRID))
fresh = PhaseLayerStack.zeros(DESK_GRID, 4, 41e-3, 1.5)

wfm_stack, wfm = wfm_train(None, None, fresh, iterations=50, problem=problem)
print(f"WFM        visibility {wfm.final.mean_visibility:.5f}  "
      f"energy loss {wfm.final.mean_energy_loss:.4f}  smoothness {phase_smoothness(wfm_stack):.3f}")

for w in (0.0, 0.25, 1.0):
    stack, hist = train_d2nn(None, None, fresh, TrainConfig(epochs=500, energy_weight=w,
                                                            precision="single"), problem=problem)
    print(f"Adam w={w:<4} visibility {hist.final.mean_visibility:.5f}  "
          f"energy loss {hist.final.mean_energy_loss:.4f}  smoothness {phase_smoothness(stack):.3f}")
