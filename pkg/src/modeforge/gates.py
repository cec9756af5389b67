"""Target unitaries, mutually unbiased bases and spatial-mode encodings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .field import ComplexField, ModeSpec, lg_mode, overlap

DEFAULT_WAIST = 0.3e-3

UNITARY_TOL = 1e-12

_W = np.exp(2j * np.pi / 3)


class UnknownGateError(KeyError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GateSpec:
    matrix: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        u = np.array(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("gate matrix must be square")
        err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
        if err > UNITARY_TOL:
            raise ValueError(f"gate {self.name!r} is not unitary (max deviation {err:.3g})")
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __call__(self, state):
        return StateVector(self.matrix @ state.coefficients)

    def to_json(self):
        return json.dumps({"name": self.name,
                           "matrix": [[[z.real, z.imag] for z in row] for row in self.matrix]})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        m = np.array([[complex(re, im) for re, im in row] for row in obj["matrix"]])
        return cls(m, obj.get("name", "custom"))


@dataclass(frozen=True, eq=False)
class StateVector:
    coefficients: np.ndarray
    label: str = ""

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).ravel()
        n = np.linalg.norm(c)
        if abs(n - 1) > 1e-12:
            raise ValueError(f"state vector must have unit norm, got {n!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def dim(self):
        return self.coefficients.size

    def density(self):
        c = self.coefficients
        return np.outer(c, c.conj())


def _unitarise(m):
    # re-orthonormalise rows that are unitary up to float rounding
    u, _, vh = np.linalg.svd(np.asarray(m, dtype=complex))
    return u @ vh


_X1 = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)
_H = {
    0: np.eye(3),
    1: np.array([[1, 1, 1], [1, _W, _W ** 2], [1, _W ** 2, _W]]) / np.sqrt(3),
    2: np.array([[1, 1, 1], [_W, _W ** 2, 1], [_W, 1, _W ** 2]]) / np.sqrt(3),
    3: np.array([[1, 1, 1], [_W ** 2, 1, _W], [_W ** 2, _W, 1]]) / np.sqrt(3),
}
_H2 = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

# two-dimensional MUB columns: |0>, |1>, |+>, |->, |+i>, |-i>
_C = np.array([[1, 0, 1, 1, 1, 1],
               [0, 1, 1, -1, 1j, -1j]], dtype=complex) * np.array([1, 1] + [2 ** -0.5] * 4)


def _standard_matrices():
    mats = {
        "X0": np.eye(3, dtype=complex),
        "X1": _X1,
        "X2": _X1 @ _X1,
        "CNOT": _CNOT,
        "I4": np.eye(4, dtype=complex),
        "I2": np.eye(2, dtype=complex),
    }
    for k, m in _H.items():
        mats[f"H{k}"] = _unitarise(m)
    mats["H2D"] = _unitarise(_H2)
    return mats


STANDARD_GATES = _standard_matrices()


def standard_gate(name):
    try:
        return GateSpec(STANDARD_GATES[name], name)
    except KeyError:
        raise UnknownGateError(f"unknown gate {name!r}") from None


def compose(gates):
    """Compose gates given in application order (first applied first)."""
    gates = list(gates)
    if not gates:
        raise ValueError("nothing to compose")
    dims = {g.dim for g in gates}
    if len(dims) != 1:
        raise DimensionMismatchError(f"cannot compose gates of dims {sorted(dims)}")
    m = reduce(lambda acc, g: g.matrix @ acc, gates[1:], gates[0].matrix)
    return GateSpec(_unitarise(m), "*".join(g.name for g in reversed(gates)))


def tensor(a, b):
    return GateSpec(_unitarise(np.kron(a.matrix, b.matrix)), f"{a.name}(x){b.name}")


@dataclass(frozen=True)
class StateSet:
    """Probe/analysis states grouped into complete orthonormal bases."""

    states: tuple
    groups: tuple  # group index of each state

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def dim(self):
        return self.states[0].dim

    def matrix(self):
        """States as columns of a ``(d, n)`` array."""
        return np.stack([s.coefficients for s in self.states], axis=1)

    def group_indices(self):
        g = np.asarray(self.groups)
        return [np.flatnonzero(g == k) for k in np.unique(g)]


def mub_states(d):
    """All states of the standard complete MUB set in dimension 2 or 3.

    For d=3 the states are the columns of H0..H3 (12 states, 4 bases); for
    d=2 they are the columns of the six-state qubit set.
    """
    if d == 3:
        cols = [(b, j) for b in range(4) for j in range(3)]
        return StateSet(tuple(StateVector(_H[b][:, j], f"H{b}[{j}]") for b, j in cols),
                        tuple(b for b, _ in cols))
    if d == 2:
        labels = ["0", "1", "+", "-", "+i", "-i"]
        return StateSet(tuple(StateVector(_C[:, j], labels[j]) for j in range(6)),
                        tuple(j // 2 for j in range(6)))
    raise ValueError(f"MUB states are provided for d in {{2, 3}}, got {d}")


def overcomplete_4d():
    """The 36 columns of C (x) C, grouped into 9 orthonormal two-qubit bases."""
    q = mub_states(2)
    states, groups = [], []
    for a in range(6):
        for b in range(6):
            v = np.kron(q[a].coefficients, q[b].coefficients)
            states.append(StateVector(v / np.linalg.norm(v), f"{q[a].label},{q[b].label}"))
            groups.append(3 * (a // 2) + b // 2)
    return StateSet(tuple(states), tuple(groups))


def training_states(d):
    if d == 3:
        return mub_states(3)
    if d == 4:
        return overcomplete_4d()
    if d == 2:
        return mub_states(2)
    raise ValueError(f"no standard state set for dimension {d}")


def computational_state(d, k):
    v = np.zeros(d, dtype=complex)
    v[k] = 1
    return StateVector(v, str(k))


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Spatial modes carrying the computational basis states."""

    modes: tuple
    labels: tuple = field(default=())

    @property
    def dim(self):
        return len(self.modes)

    @property
    def grid(self):
        return self.modes[0].grid

    def stacked(self):
        return np.stack([m.amplitudes for m in self.modes])

    def gram(self):
        return np.array([[overlap(a, b) for b in self.modes] for a in self.modes])

    @classmethod
    def from_specs(cls, specs, grid):
        return cls(tuple(lg_mode(s, grid) for s in specs), tuple(s.label for s in specs))


def qutrit_specs(waist=DEFAULT_WAIST):
    """LG_0^-2, LG_1^0, LG_0^2 carrying |0>, |1>, |2>."""
    return [ModeSpec(-2, 0, waist), ModeSpec(0, 1, waist), ModeSpec(2, 0, waist)]


def two_qubit_specs(waist=DEFAULT_WAIST):
    """OAM -1, +1, -3, +3 carrying |00>, |01>, |10>, |11>."""
    return [ModeSpec(l, 0, waist) for l in (-1, 1, -3, 3)]


def default_basis(d, grid, waist=DEFAULT_WAIST):
    if d == 3:
        return ModeBasis.from_specs(qutrit_specs(waist), grid)
    if d == 4:
        return ModeBasis.from_specs(two_qubit_specs(waist), grid)
    raise ValueError(f"no default mode basis for dimension {d}")


def encode(state, basis):
    """Field sum_k c_k * mode_k for the state's coefficients c."""
    coeffs = getattr(state, "coefficients", state)
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.size != basis.dim:
        raise DimensionMismatchError(f"state dim {coeffs.size} != basis dim {basis.dim}")
    return ComplexField(basis.grid, np.tensordot(coeffs, basis.stacked(), axes=1))


@dataclass(frozen=True)
class Decoded:
    coefficients: np.ndarray
    residual_power: float

    def state(self):
        return StateVector(self.coefficients / np.linalg.norm(self.coefficients))


def decode(f, basis):
    """Project a field onto the basis modes.

    ``residual_power`` is the part of the field's power outside the span.
    """
    if f.grid != basis.grid:
        raise DimensionMismatchError("field and basis grids differ")
    c = project_array(f.amplitudes[None], basis)[0]
    return Decoded(c, max(f.power - float(np.sum(np.abs(c) ** 2)), 0.0))


def project_array(a, basis):
    """Projection coefficients ``<mode_k|a_s>`` for a batch ``a`` of shape (S, ny, nx)."""
    m = basis.stacked().reshape(basis.dim, -1)
    return (a.reshape(a.shape[0], -1) @ m.conj().T) * basis.grid.pitch ** 2
