"""
Training phase layers for a qutrit gate
=======================================

Four phase layers, 41 mm apart, are trained with Adam so that all 12 MUB
probe states come out as their images under X1.
"""

import time

from modeforge import DESK_GRID, PhaseLayerStack, TrainConfig, default_basis, standard_gate, train_d2nn

EPOCHS = 300

gate = standard_gate("X1")
basis = default_basis(3, DESK_GRID)
stack0 = PhaseLayerStack.zeros(DESK_GRID, n_layers=4, spacing=41e-3, pad=1.5)


def progress(epoch, loss, m):
    if epoch % 50 == 0:
        print(f"epoch {epoch:4d}  loss {loss:.4f}  visibility {m.mean_visibility:.5f}")


t0 = time.time()
stack, hist = train_d2nn(gate, basis, stack0, TrainConfig(epochs=EPOCHS, precision="single"),
                         callback=progress)
print(f"trained in {time.time() - t0:.0f} s")
print(hist.final.summary())

stack.save("x1_stack")
hist.write_csv("x1_history.csv")
print("saved x1_stack/ and x1_history.csv")
