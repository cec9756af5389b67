"""Simulated quantum process tomography with maximum-likelihood Choi reconstruction."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gates import DimensionMismatchError, GateSpec, StateSet, project_array
from .layers import PhaseLayerStack, forward_array

P_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class TomographyRecord:
    """Frequencies ``f[m, n]`` of projector ``n`` for probe ``m``.

    Each row is normalised within every projective basis and then divided by
    the number of bases, so a row sums to one.
    """

    probes: StateSet
    projectors: StateSet
    frequencies: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if f.shape != (len(self.probes), len(self.projectors)):
            raise ValueError(f"frequency table {f.shape} does not match "
                             f"{len(self.probes)} probes x {len(self.projectors)} projectors")
        if np.any(f < 0):
            raise ValueError("frequencies must be non-negative")
        f.setflags(write=False)
        object.__setattr__(self, "frequencies", f)

    @property
    def dim(self):
        return self.probes.dim

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["probe_index", "projector_index", "frequency"])
            for m, row in enumerate(self.frequencies):
                for n, v in enumerate(row):
                    w.writerow([m, n, repr(float(v))])

    @classmethod
    def read_csv(cls, path, probes, projectors):
        f = np.zeros((len(probes), len(projectors)))
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                f[int(row["probe_index"]), int(row["projector_index"])] = float(row["frequency"])
        return cls(probes, projectors, f)


def _normalise_rows(raw, projectors):
    f = np.zeros_like(raw)
    groups = projectors.group_indices()
    for idx in groups:
        s = raw[:, idx].sum(axis=1, keepdims=True)
        f[:, idx] = np.where(s > 0, raw[:, idx] / np.where(s > 0, s, 1), 1.0 / len(idx))
    return f / len(groups)


def _sample(prob, projectors, shots, rng):
    counts = np.zeros_like(prob)
    for idx in projectors.group_indices():
        for m in range(prob.shape[0]):
            p = prob[m, idx]
            p = p / p.sum()
            counts[m, idx] = rng.multinomial(shots, p)
    return counts


def ideal_probabilities(gate, probes, projectors):
    """Born probabilities ``|<pi_n| U |psi_m>|^2``."""
    out = gate.matrix @ probes.matrix()  # (d, M)
    return np.abs(projectors.matrix().conj().T @ out).T ** 2


def optical_probabilities(stack, basis, probes, projectors, blur_sigma=0.0):
    """Probabilities from encoding each probe, running the optics and decoding."""
    if stack.grid != basis.grid:
        raise DimensionMismatchError("stack and mode basis live on different grids")
    modes = basis.stacked()
    inputs = np.tensordot(probes.matrix().T, modes, axes=1)
    out = forward_array(stack, inputs, blur_sigma)
    c = project_array(out, basis)  # (M, d)
    return np.abs(c @ projectors.matrix().conj()) ** 2


def simulate_tomography(source, probes, projectors=None, basis=None, shots=None, seed=0,
                        blur_sigma=0.0):
    """Tomography table for a GateSpec (ideal, no optics) or a PhaseLayerStack.

    With ``shots`` set, each (probe, projective basis) pair is sampled from a
    multinomial with that many trials.
    """
    projectors = probes if projectors is None else projectors
    if probes.dim != projectors.dim:
        raise DimensionMismatchError("probe and projector dimensions differ")
    if isinstance(source, GateSpec):
        if source.dim != probes.dim:
            raise DimensionMismatchError(f"gate dim {source.dim} != probe dim {probes.dim}")
        raw = ideal_probabilities(source, probes, projectors)
    elif isinstance(source, PhaseLayerStack):
        if basis is None:
            raise ValueError("optical tomography needs the mode basis")
        if basis.dim != probes.dim:
            raise DimensionMismatchError(f"basis dim {basis.dim} != probe dim {probes.dim}")
        raw = optical_probabilities(source, basis, probes, projectors, blur_sigma)
    else:
        raise TypeError(f"cannot run tomography on {type(source).__name__}")
    if shots is not None:
        raw = _sample(raw, projectors, int(shots), np.random.default_rng(seed))
    return TomographyRecord(probes, projectors, _normalise_rows(raw, projectors))


def tomography_mse(a, b):
    if a.frequencies.shape != b.frequencies.shape:
        raise ValueError("records have different shapes")
    return float(np.mean((a.frequencies - b.frequencies) ** 2))


# -- Choi operators -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChoiOperator:
    """Choi operator on H (x) K with ``rho_out = Tr_H[E (rho^T (x) I_K)]``."""

    matrix: np.ndarray
    dim_in: int
    dim_out: int
    iterations: int = 0
    converged: bool = True

    def partial_trace_out(self):
        """Tr_K(E), an operator on H."""
        e = self.matrix.reshape(self.dim_in, self.dim_out, self.dim_in, self.dim_out)
        return np.einsum("ikjk->ij", e)

    def apply(self, rho):
        e = self.matrix.reshape(self.dim_in, self.dim_out, self.dim_in, self.dim_out)
        return np.einsum("ikjl,ij->kl", e, rho)

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.matrix).min())

    def trace_error(self):
        return float(np.max(np.abs(self.partial_trace_out() - np.eye(self.dim_in))))


def choi_from_unitary(u):
    m = u.matrix if isinstance(u, GateSpec) else np.asarray(u, dtype=complex)
    d = m.shape[0]
    vec = m.T.reshape(-1)  # component (i, k) = <k|U|i>
    return ChoiOperator(np.outer(vec, vec.conj()), d, d)


def _measurement_operators(probes, projectors):
    rho_t = np.einsum("im,jm->mji", probes.matrix(), probes.matrix().conj())  # rho_m^T
    pis = np.einsum("in,jn->nij", projectors.matrix(), projectors.matrix().conj())
    a = np.einsum("mab,ncd->mnacbd", rho_t, pis)
    d_h, d_k = probes.dim, projectors.dim
    return a.reshape(len(probes) * len(projectors), d_h * d_k, d_h * d_k)


def _inv_sqrt(h):
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v / np.sqrt(w)) @ v.conj().T


def mle_reconstruct(rec, max_iters=5000, tol=1e-10, callback=None):
    """Iterate ``E <- L^-1 R E R L^-1`` from ``E0 = I / d_K``.

    ``R = sum_mn (f_mn / p_mn) rho_m^T (x) Pi_n`` and
    ``L = (Tr_K(R E R))^(1/2) (x) I_K``. Stops when the largest entry change
    falls below ``tol``. Probabilities under ``1e-12`` are clamped.
    ``callback(i, E)`` sees every iterate.
    """
    d_h, d_k = rec.probes.dim, rec.projectors.dim
    D = d_h * d_k
    ops = _measurement_operators(rec.probes, rec.projectors)
    f = rec.frequencies.reshape(-1)
    used = f > 0
    ops_t = ops[used]
    fu = f[used]
    ops_flat = ops_t.transpose(0, 2, 1).reshape(len(fu), -1)  # p = sum E_ij A_ji
    e = np.eye(D, dtype=complex) / d_k
    eye_k = np.eye(d_k)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        p = np.real(ops_flat @ e.reshape(-1))
        p = np.maximum(p, P_FLOOR)
        r = np.tensordot(fu / p, ops_t, axes=1)
        rer = r @ e @ r
        lam = np.einsum("ikjk->ij", rer.reshape(d_h, d_k, d_h, d_k))
        inv = np.kron(_inv_sqrt(lam), eye_k)
        new = inv @ rer @ inv
        new = 0.5 * (new + new.conj().T)
        delta = np.max(np.abs(new - e))
        e = new
        if callback is not None:
            callback(it, ChoiOperator(e, d_h, d_k, it))
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"MLE did not reach tol={tol:g} in {max_iters} iterations", RuntimeWarning)
    return ChoiOperator(e, d_h, d_k, it, converged)


# -- operator bases and chi matrices -------------------------------------------

@lru_cache(maxsize=None)
def gell_mann_basis(d=3):
    """Scaled identity followed by the d^2-1 generalised Gell-Mann matrices,
    all scaled to unit Hilbert-Schmidt norm."""
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    sym, anti, diag = [], [], []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j, 1j
            sym.append((j, k, s))
            anti.append((j, k, a))
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        m[np.arange(l), np.arange(l)] = 1
        m[l, l] = -l
        diag.append(m * np.sqrt(2 / (l * (l + 1))))
    if d == 3:
        # standard lambda_1..lambda_8 order
        order = [sym[0][2], anti[0][2], diag[0], sym[1][2], anti[1][2], sym[2][2], anti[2][2], diag[1]]
    else:
        order = [s for *_, s in sym] + [a for *_, a in anti] + diag
    mats += [m / np.sqrt(2) for m in order]
    out = np.array(mats)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def pauli_basis(n_qubits=2):
    p = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    mats = [np.array([[1.0]])]
    for _ in range(n_qubits):
        mats = [np.kron(a, b) for a in mats for b in p]
    out = np.array(mats, dtype=complex) / np.sqrt(2 ** n_qubits)
    out.setflags(write=False)
    return out


def operator_basis(name, d):
    if name == "GellMann":
        return gell_mann_basis(d)
    if name == "TwoQubitPauli":
        if d != 4:
            raise DimensionMismatchError("two-qubit Pauli basis needs d = 4")
        return pauli_basis(2)
    raise ValueError(f"unknown operator basis {name!r}")


def default_basis_name(d):
    return "TwoQubitPauli" if d == 4 else "GellMann"


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    chi: np.ndarray
    basis: str

    @property
    def dim(self):
        return int(round(np.sqrt(self.chi.shape[0])))

    def to_json(self):
        return json.dumps({"basis": self.basis, "dim": self.dim,
                           "chi": [[[z.real, z.imag] for z in row] for row in self.chi]})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(np.array([[complex(a, b) for a, b in row] for row in obj["chi"]]), obj["basis"])


def chi_from_choi(e, basis=None):
    """chi_ab = <<B_a|E|B_b>> / d in the orthonormal operator basis, so Tr(chi) = 1."""
    d = e.dim_in
    if e.dim_out != d:
        raise DimensionMismatchError("chi matrices need equal input and output dimensions")
    basis = basis or default_basis_name(d)
    b = operator_basis(basis, d)
    if b.shape[1] != d:
        raise DimensionMismatchError(f"basis {basis} has dimension {b.shape[1]}, channel has {d}")
    v = np.stack([m.T.reshape(-1) for m in b], axis=1)
    chi = v.conj().T @ e.matrix @ v / d
    return ProcessMatrix(0.5 * (chi + chi.conj().T), basis)


def chi_from_unitary(u, basis=None):
    return chi_from_choi(choi_from_unitary(u), basis)


def process_fidelity(chi_t, chi_e):
    """F = Tr(chi_t chi_e)."""
    if chi_t.basis != chi_e.basis or chi_t.chi.shape != chi_e.chi.shape:
        raise ValueError("process matrices use different bases or dimensions")
    return float(np.real(np.trace(chi_t.chi @ chi_e.chi)))


def depolarizing_choi(d):
    return ChoiOperator(np.eye(d * d, dtype=complex) / d, d, d)
