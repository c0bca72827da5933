"""Pure-state linear algebra for N qubits.

States are 1-D ``complex128`` arrays of length ``2**n``. Site 0 is the most
significant bit of the basis-state index, so ``|q0 q1 ... q_{N-1}>`` maps to
index ``q0 * 2**(N-1) + ... + q_{N-1}``.

Functions that take a state also accept a 2-D array of shape ``(d, k)``; the
operation is then applied to each of the ``k`` columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qdesign.errors import CapacityError, ShapeError

PAULI_LABELS = ("I", "X", "Y", "Z")

# 2**MAX_QUBITS complex128 amplitudes is 512 MiB; dense unitaries stop far earlier.
MAX_QUBITS = 25

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, ``labels[k]`` acting on site ``k``."""

    labels: str

    def __post_init__(self):
        bad = set(self.labels) - set(PAULI_LABELS)
        if bad or not self.labels:
            raise ValueError(f"invalid Pauli string {self.labels!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def __str__(self):
        return self.labels


def n_qubits_of(psi: np.ndarray) -> int:
    d = psi.shape[0]
    n = d.bit_length() - 1
    if d < 2 or 1 << n != d:
        raise ShapeError(f"state dimension {d} is not a power of two >= 2")
    return n


def basis_state(n_qubits: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[index] = 1.0
    return psi


def random_state(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state: i.i.d. complex normal amplitudes, normalized."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if n_qubits > MAX_QUBITS:
        raise CapacityError(f"2**{n_qubits} amplitudes exceed the limit of {MAX_QUBITS} qubits")
    d = 1 << n_qubits
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return psi / np.linalg.norm(psi)


def apply_pauli(psi: np.ndarray, site: int, label: str) -> np.ndarray:
    """Return ``(label on site) (x) identity`` applied to ``psi``, in O(d)."""
    n = n_qubits_of(psi)
    if not 0 <= site < n:
        raise IndexError(f"site {site} out of range for {n} qubits")
    if label == "I":
        return psi.copy()
    v = psi.reshape(1 << site, 2, -1)
    out = np.empty_like(v)
    if label == "X":
        out[:, 0] = v[:, 1]
        out[:, 1] = v[:, 0]
    elif label == "Y":
        out[:, 0] = -1j * v[:, 1]
        out[:, 1] = 1j * v[:, 0]
    elif label == "Z":
        out[:, 0] = v[:, 0]
        out[:, 1] = -v[:, 1]
    else:
        raise ValueError(f"unknown Pauli label {label!r}")
    return out.reshape(psi.shape)


def apply_pauli_string(psi: np.ndarray, p: PauliString) -> np.ndarray:
    n = n_qubits_of(psi)
    if p.n_qubits != n:
        raise ShapeError(f"Pauli string of length {p.n_qubits} applied to {n}-qubit state")
    out = psi.copy()
    for site, label in enumerate(p.labels):
        if label != "I":
            out = apply_pauli(out, site, label)
    return out


def pauli_string_matrix(p: PauliString) -> np.ndarray:
    """Dense ``2**N x 2**N`` matrix of a Pauli string. Only for small-N oracles."""
    if p.n_qubits > 12:
        raise CapacityError("refusing to densify a Pauli string beyond 12 qubits")
    m = np.ones((1, 1), dtype=complex)
    for label in p.labels:
        m = np.kron(m, _PAULI_MATRICES[label])
    return m


def apply_dense(psi: np.ndarray, u: np.ndarray) -> np.ndarray:
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[1] != psi.shape[0]:
        raise ShapeError(f"unitary of shape {u.shape} applied to state of dimension {psi.shape[0]}")
    return u @ psi


def adjoint(u: np.ndarray) -> np.ndarray:
    return u.conj().T


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """``<a|b>``, conjugating the first argument."""
    if a.shape != b.shape:
        raise ShapeError(f"inner product of shapes {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def apply_unitary(psi: np.ndarray, u) -> np.ndarray:
    """Apply an ensemble member, either a :class:`PauliString` or a dense matrix."""
    if isinstance(u, PauliString):
        return apply_pauli_string(psi, u)
    return apply_dense(psi, u)


def apply_unitary_adjoint(psi: np.ndarray, u) -> np.ndarray:
    # Pauli strings carry no phase, so they are Hermitian.
    if isinstance(u, PauliString):
        return apply_pauli_string(psi, u)
    return apply_dense(psi, adjoint(u))


def as_dense(u) -> np.ndarray:
    if isinstance(u, PauliString):
        return pauli_string_matrix(u)
    return np.asarray(u)
