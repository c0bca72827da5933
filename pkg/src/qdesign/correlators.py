"""Single terms, batched samples and ensemble averages of 2-point functions and
4-point OTOCs, plus the QCSM sample-file format.

A sample for sites ``(i, j)`` sums ``m`` terms
``<sigma_n| A_i U_n^dag B_j U_n C_i U_n^dag D_j U_n |sigma_n>`` (4-point) or
``<sigma_n| A_i U_n^dag B_j U_n |sigma_n>`` (2-point), with a fresh random
state and ensemble member for each ``n``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from qdesign import ensembles
from qdesign.ensembles import EnsembleSpec
from qdesign.errors import FormatError, ShapeError
from qdesign.quantum import (
    PauliString,
    apply_pauli,
    apply_unitary,
    apply_unitary_adjoint,
    inner,
    n_qubits_of,
    random_state,
)

DEFAULT_BATCH_M = 5


@dataclass(frozen=True)
class TwoPoint:
    a: str
    b: str


@dataclass(frozen=True)
class Otoc4:
    a: str
    b: str
    c: str
    d: str


@dataclass(frozen=True)
class CorrelatorSpec:
    name: str
    form: TwoPoint | Otoc4

    def __post_init__(self):
        labels = (self.form.a, self.form.b) if isinstance(self.form, TwoPoint) else (
            self.form.a, self.form.b, self.form.c, self.form.d)
        for label in labels:
            if label not in ("X", "Y", "Z"):
                raise ValueError(f"correlator insertions must be non-identity Paulis, got {label!r}")


_CATALOG = {
    "xyxy": Otoc4("X", "Y", "X", "Y"),
    "xxyy": Otoc4("X", "X", "Y", "Y"),
    "xy2pt": TwoPoint("X", "Y"),
    "zz2pt": TwoPoint("Z", "Z"),
}
# Stable ids used in the QCSM header.
CORRELATOR_IDS = {"xyxy": 0, "xxyy": 1, "xy2pt": 2, "zz2pt": 3}
CORRELATOR_NAMES = tuple(CORRELATOR_IDS)


def catalog(name: str) -> CorrelatorSpec:
    try:
        return CorrelatorSpec(name, _CATALOG[name])
    except KeyError:
        raise KeyError(f"unknown correlator {name!r}; expected one of {CORRELATOR_NAMES}") from None


def sample_term(sigma: np.ndarray, u, spec: CorrelatorSpec, i: int, j: int) -> complex:
    """One term of the correlator sample, by sequential state updates."""
    n = n_qubits_of(sigma)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"sites ({i}, {j}) out of range for {n} qubits")
    f = spec.form
    psi = apply_unitary(sigma, u)
    if isinstance(f, Otoc4):
        psi = apply_pauli(psi, j, f.d)
        psi = apply_unitary_adjoint(psi, u)
        psi = apply_pauli(psi, i, f.c)
        psi = apply_unitary(psi, u)
    psi = apply_pauli(psi, j, f.b)
    psi = apply_unitary_adjoint(psi, u)
    # Paulis are Hermitian, so A_i^dag acting on the bra is A_i on the ket.
    return inner(apply_pauli(sigma, i, f.a), psi)


def _stack_paulis(psi: np.ndarray, label: str, n: int) -> np.ndarray:
    """Columns ``label_k |psi>`` for k = 0..n-1, shape (d, n)."""
    return np.stack([apply_pauli(psi, k, label) for k in range(n)], axis=1)


def _dense_terms(sigma: np.ndarray, u: np.ndarray, spec: CorrelatorSpec) -> np.ndarray:
    # All N^2 terms for a dense U using a handful of matrix products:
    #   left_i   = U A_i sigma
    #   w_j      = U^dag D_j U sigma
    #   right_ij = U C_i w_j
    #   term_ij  = <B_j left_i | right_ij>     (4-point)
    #   term_ij  = <left_i | B_j U sigma>      (2-point)
    n = n_qubits_of(sigma)
    f = spec.form
    phi = u @ sigma
    left = u @ _stack_paulis(sigma, f.a, n)
    out = np.empty((n, n), dtype=complex)
    if isinstance(f, TwoPoint):
        b_phi = _stack_paulis(phi, f.b, n)
        return left.T.conj() @ b_phi
    w = u.conj().T @ _stack_paulis(phi, f.d, n)
    cw = np.stack([_stack_paulis(w[:, jj], f.c, n) for jj in range(n)], axis=2)  # (d, i, j)
    right = (u @ cw.reshape(u.shape[0], -1)).reshape(cw.shape)
    for jj in range(n):
        b_right = apply_pauli(right[:, :, jj], jj, f.b)
        out[:, jj] = np.einsum("di,di->i", left.conj(), b_right)
    return out


def correlator_terms(sigma: np.ndarray, u, spec: CorrelatorSpec) -> np.ndarray:
    """``N x N`` matrix of single terms for one ``(sigma, U)`` draw, indexed ``(i, j)``."""
    n = n_qubits_of(sigma)
    if isinstance(u, PauliString):
        return np.array([[sample_term(sigma, u, spec, i, j) for j in range(n)] for i in range(n)])
    if u.shape != (sigma.shape[0], sigma.shape[0]):
        raise ShapeError(f"unitary of shape {u.shape} for a {n}-qubit state")
    return _dense_terms(sigma, u, spec)


@dataclass
class SampleMatrix:
    """Batched correlator sample for every site pair, with provenance."""

    entries: np.ndarray
    batch_m: int
    ensemble_tag: str
    seed: int
    correlator: str = ""

    @property
    def n_qubits(self) -> int:
        return self.entries.shape[0]


def sample_matrix(
    spec: CorrelatorSpec,
    ens: EnsembleSpec,
    m: int,
    seed: int,
    share_draws: bool = True,
) -> SampleMatrix:
    """Sum ``m`` correlator terms for every site pair ``(i, j)``.

    With ``share_draws`` (default) one set of ``m`` pairs ``(sigma_n, U_n)`` is
    drawn and used for every pixel; otherwise each pixel gets its own draws.
    """
    if m < 1:
        raise ValueError("batch number m must be >= 1")
    rng = np.random.default_rng(seed)
    n = ens.n_qubits
    entries = np.zeros((n, n), dtype=complex)
    if share_draws:
        for _ in range(m):
            sigma = random_state(n, rng)
            u = ensembles.sample(ens, rng)
            entries += correlator_terms(sigma, u, spec)
    else:
        for i in range(n):
            for j in range(n):
                for _ in range(m):
                    sigma = random_state(n, rng)
                    u = ensembles.sample(ens, rng)
                    entries[i, j] += sample_term(sigma, u, spec, i, j)
    return SampleMatrix(entries, m, ens.tag, int(seed), spec.name)


@dataclass(frozen=True)
class Estimate:
    mean: complex
    stderr_re: float
    stderr_im: float

    @property
    def stderr(self) -> float:
        return float(np.hypot(self.stderr_re, self.stderr_im))


def ensemble_average(
    spec: CorrelatorSpec,
    ens: EnsembleSpec,
    i: int,
    j: int,
    trials: int,
    rng: np.random.Generator,
) -> Estimate:
    """Monte-Carlo mean of single terms with a fresh Haar state and fresh U per trial."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    terms = np.empty(trials, dtype=complex)
    for t in range(trials):
        sigma = random_state(ens.n_qubits, rng)
        u = ensembles.sample(ens, rng)
        terms[t] = sample_term(sigma, u, spec, i, j)
    scale = np.sqrt(trials)
    return Estimate(
        complex(terms.mean()),
        float(terms.real.std(ddof=1) / scale),
        float(terms.imag.std(ddof=1) / scale),
    )


# --- QCSM sample files ------------------------------------------------------

QCSM_MAGIC = b"QCSM"
QCSM_VERSION = 1
_QCSM_HEADER = struct.Struct("<4sHBBHI")


@dataclass
class SampleFile:
    n_qubits: int
    correlator: str
    batch_m: int
    labels: np.ndarray  # (count,) uint8
    entries: np.ndarray  # (count, N, N) complex128

    def __len__(self):
        return len(self.labels)


def write_samples(path, sample_file: SampleFile) -> None:
    n = sample_file.n_qubits
    with open(path, "wb") as fh:
        fh.write(_QCSM_HEADER.pack(QCSM_MAGIC, QCSM_VERSION, n, CORRELATOR_IDS[sample_file.correlator],
                                   sample_file.batch_m, len(sample_file)))
        body = np.ascontiguousarray(sample_file.entries, dtype="<c16").reshape(len(sample_file), n * n)
        for label, row in zip(sample_file.labels, body):
            fh.write(struct.pack("<B", int(label)))
            fh.write(row.tobytes())


def read_samples(path) -> SampleFile:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _QCSM_HEADER.size:
        raise FormatError(f"{path}: truncated QCSM header at byte offset {len(data)}")
    magic, version, n, cid, batch_m, count = _QCSM_HEADER.unpack_from(data)
    if magic != QCSM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected {QCSM_MAGIC!r}")
    if version != QCSM_VERSION:
        raise FormatError(f"{path}: unsupported QCSM version {version} at byte offset 4")
    names = {v: k for k, v in CORRELATOR_IDS.items()}
    if cid not in names:
        raise FormatError(f"{path}: unknown correlator id {cid} at byte offset 7")
    record = 1 + 16 * n * n
    expected = _QCSM_HEADER.size + count * record
    if len(data) < expected:
        complete = (len(data) - _QCSM_HEADER.size) // record
        offset = _QCSM_HEADER.size + complete * record
        raise FormatError(f"{path}: truncated at byte offset {len(data)}; record {complete} "
                          f"starting at byte offset {offset} is incomplete ({count} declared)")
    if len(data) > expected:
        raise FormatError(f"{path}: {len(data) - expected} trailing bytes at byte offset {expected}")
    raw = np.frombuffer(data, dtype=np.uint8, count=count * record, offset=_QCSM_HEADER.size)
    raw = raw.reshape(count, record)
    labels = raw[:, 0].copy()
    entries = np.ascontiguousarray(raw[:, 1:]).view("<c16").reshape(count, n, n).astype(complex)
    return SampleFile(n, names[cid], batch_m, labels, entries)
