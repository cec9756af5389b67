"""
Qudits in Laguerre-Gaussian modes
=================================

Encode qutrit and two-qubit states in LG modes, check that the modes are
orthonormal, and look at the standard gates and probe sets.
"""

import numpy as np

from modeforge import (DESK_GRID, compose, decode, default_basis, encode, mub_states,
                       overcomplete_4d, standard_gate)

qutrit = default_basis(3, DESK_GRID)
print("qutrit modes:", qutrit.labels)
print("Gram matrix deviation:", np.max(np.abs(qutrit.gram() - np.eye(3))))

# the 12 MUB states: overlaps are 0/1 inside a basis and 1/3 across
s = mub_states(3)
ov = np.abs(s.matrix().conj().T @ s.matrix()) ** 2
print("distinct overlaps:", np.unique(np.round(ov, 12)))

x1, x2 = standard_gate("X1"), standard_gate("X2")
print("X1 then X2 is the identity:", np.allclose(compose([x1, x2]).matrix, np.eye(3)))

# a state survives encode -> decode
psi = s[5]
field = encode(psi, qutrit)
print("decoded:", np.round(decode(field, qutrit).coefficients, 6))
print("expected:", np.round(psi.coefficients, 6))

two_qubit = default_basis(4, DESK_GRID)
print("two-qubit modes:", two_qubit.labels)
print("overcomplete set:", len(overcomplete_4d()), "states in", len(overcomplete_4d().group_indices()), "bases")
print(standard_gate("CNOT").matrix.real.astype(int))
