"""Samplers for the Pauli 1-design, brickwork approximate 2-design and Haar
ensembles, plus Monte-Carlo oracles that check their design order.

All ensembles are sampled uniformly. Pauli strings are drawn without a global
phase, which cancels in every correlator.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from qdesign.errors import CalibrationError, CapacityError
from qdesign.quantum import (
    PAULI_LABELS,
    PauliString,
    apply_pauli_string,
    as_dense,
)

# Brickwork depth used for N=10 when no calibration is run (4 layers per qubit).
DEFAULT_DEPTH_PER_QUBIT = 4
DEFAULT_EPSILON = 1e-3
MAX_DENSE_QUBITS = 14
MAX_FIRST_MOMENT_QUBITS = 6
MAX_SECOND_MOMENT_QUBITS = 3
MAX_EXACT_FRAME_QUBITS = 12


@dataclass(frozen=True)
class Pauli1Design:
    name = "pauli1"


@dataclass(frozen=True)
class Brickwork2Design:
    depth: int = 40
    epsilon_target: float = DEFAULT_EPSILON
    name = "brickwork"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("brickwork depth must be >= 1")
        if not 0 < self.epsilon_target < 1:
            raise ValueError("epsilon_target must lie in (0, 1)")


@dataclass(frozen=True)
class Haar:
    name = "haar"


EnsembleKind = Pauli1Design | Brickwork2Design | Haar

ENSEMBLE_NAMES = ("pauli1", "brickwork", "haar")


@dataclass(frozen=True)
class EnsembleSpec:
    kind: EnsembleKind
    n_qubits: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if isinstance(self.kind, Brickwork2Design) and self.n_qubits < 2:
            raise ValueError("brickwork circuits need at least 2 qubits")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def tag(self) -> str:
        return self.kind.name


def default_brickwork_depth(n_qubits: int) -> int:
    return DEFAULT_DEPTH_PER_QUBIT * n_qubits


def make_ensemble(name: str, n_qubits: int, depth: int | None = None) -> EnsembleSpec:
    """Build an :class:`EnsembleSpec` from its short name."""
    if name == "pauli1":
        kind = Pauli1Design()
    elif name == "haar":
        kind = Haar()
    elif name == "brickwork":
        kind = Brickwork2Design(depth=depth or default_brickwork_depth(n_qubits))
    else:
        raise ValueError(f"unknown ensemble {name!r}; expected one of {ENSEMBLE_NAMES}")
    return EnsembleSpec(kind, n_qubits)


def haar_unitary(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random ``d x d`` unitary (or a stack of ``size`` of them).

    QR of a complex Ginibre matrix, with each column of Q multiplied by the phase
    of the matching diagonal entry of R so that R's diagonal is real positive.
    """
    shape = (d, d) if size is None else (size, d, d)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    q *= (diag / np.abs(diag))[..., None, :]
    return q


def _apply_two_qubit_gate(mat: np.ndarray, gate: np.ndarray, site: int) -> np.ndarray:
    # left-multiply by gate on (site, site+1); mat has shape (d, k)
    v = mat.reshape(1 << site, 4, -1)
    return np.matmul(gate, v).reshape(mat.shape)


def brickwork_unitary(n_qubits: int, depth: int, rng: np.random.Generator) -> np.ndarray:
    """Dense unitary of ``depth`` brickwork layers of Haar 2-qubit gates on an open chain.

    Even layers act on pairs (0,1),(2,3),...; odd layers on (1,2),(3,4),...
    """
    d = 1 << n_qubits
    u = np.eye(d, dtype=complex)
    for layer in range(depth):
        for site in range(layer % 2, n_qubits - 1, 2):
            u = _apply_two_qubit_gate(u, haar_unitary(4, rng), site)
    return u


def random_pauli_string(n_qubits: int, rng: np.random.Generator) -> PauliString:
    idx = rng.integers(0, 4, size=n_qubits)
    return PauliString("".join(PAULI_LABELS[k] for k in idx))


def sample(spec: EnsembleSpec, rng: np.random.Generator):
    """Draw one ensemble member: a :class:`PauliString` or a dense unitary."""
    kind = spec.kind
    if isinstance(kind, Pauli1Design):
        return random_pauli_string(spec.n_qubits, rng)
    if spec.n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense unitaries are limited to {MAX_DENSE_QUBITS} qubits")
    if isinstance(kind, Haar):
        return haar_unitary(spec.dim, rng)
    return brickwork_unitary(spec.n_qubits, kind.depth, rng)


def all_pauli_strings(n_qubits: int):
    for labels in itertools.product(PAULI_LABELS, repeat=n_qubits):
        yield PauliString("".join(labels))


def _random_pure_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return psi / np.linalg.norm(psi)


# Twirls of a pure input |psi><psi| reduce to averaging outer products of
# transformed vectors, which keeps the cost at O(d^k) per draw.

def _first_moment(spec: EnsembleSpec, psi: np.ndarray, trials: int, rng) -> np.ndarray:
    d = spec.dim
    m = np.zeros((d, d), dtype=complex)
    for _ in range(trials):
        u = sample(spec, rng)
        v = apply_pauli_string(psi, u) if isinstance(u, PauliString) else u @ psi
        m += np.outer(v, v.conj())
    return m / trials


def _second_moment(spec: EnsembleSpec, psi2: np.ndarray, trials: int, rng) -> np.ndarray:
    # (U (x) U)|psi> == U X U^T with X the d x d reshaping of |psi>
    d = spec.dim
    x = psi2.reshape(d, d)
    m = np.zeros((d * d, d * d), dtype=complex)
    for _ in range(trials):
        u = as_dense(sample(spec, rng))
        v = (u @ x @ u.T).reshape(-1)
        m += np.outer(v, v.conj())
    return m / trials


def _haar_second_moment(d: int, psi2: np.ndarray, trials: int, rng, chunk: int = 2048) -> np.ndarray:
    x = psi2.reshape(d, d)
    m = np.zeros((d * d, d * d), dtype=complex)
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        us = haar_unitary(d, rng, size=k)
        vs = (us @ x @ us.transpose(0, 2, 1)).reshape(k, d * d)
        m += vs.T @ vs.conj()
        done += k
    return m / trials


def first_moment_twirl_error(spec: EnsembleSpec, trials: int, rng: np.random.Generator) -> float:
    """Frobenius distance between the sampled 1-fold twirl of a random pure state and I/d."""
    return twirl_error_with_floor(spec, 1, trials, rng)[0]


def second_moment_twirl_error(
    spec: EnsembleSpec, trials: int, rng: np.random.Generator, oracle_factor: int = 10
) -> float:
    """Frobenius distance between the sampled 2-fold twirl and a Haar Monte-Carlo reference.

    The input is a random pure state on the doubled space. The Haar reference
    uses ``oracle_factor * trials`` independent draws.
    """
    return twirl_error_with_floor(spec, 2, trials, rng, oracle_factor)[0]


def twirl_error_with_floor(
    spec: EnsembleSpec, k: int, trials: int, rng: np.random.Generator, oracle_factor: int = 10
) -> tuple[float, float]:
    """Twirl distance for ``k`` in {1, 2}, plus the RMS distance an exact design would show.

    The floor is the Monte-Carlo noise of a ``trials``-sample mean of pure-state
    projectors around the exact (k=1) or reference (k=2) twirl.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    d = spec.dim
    if k == 1:
        if spec.n_qubits > MAX_FIRST_MOMENT_QUBITS:
            raise CapacityError(f"first-moment twirl is limited to {MAX_FIRST_MOMENT_QUBITS} qubits")
        psi = _random_pure_vector(d, rng)
        m = _first_moment(spec, psi, trials, rng)
        return float(np.linalg.norm(m - np.eye(d) / d)), math.sqrt((1 - 1 / d) / trials)
    if k != 2:
        raise ValueError("k must be 1 or 2")
    if oracle_factor < 10:
        raise ValueError("the Haar reference needs at least 10x the ensemble trials")
    if spec.n_qubits > MAX_SECOND_MOMENT_QUBITS:
        raise CapacityError(f"second-moment twirl is limited to {MAX_SECOND_MOMENT_QUBITS} qubits")
    psi2 = _random_pure_vector(d * d, rng)
    oracle_rng, ens_rng = rng.spawn(2)
    ref = _haar_second_moment(d, psi2, oracle_factor * trials, oracle_rng)
    m = _second_moment(spec, psi2, trials, ens_rng)
    spread = max(0.0, 1 - float(np.linalg.norm(ref)) ** 2)
    floor = math.sqrt(spread * (1 + 1 / oracle_factor) / trials)
    return float(np.linalg.norm(m - ref)), floor


def frame_potential_samples(spec: EnsembleSpec, k: int, pairs: int, rng: np.random.Generator) -> np.ndarray:
    """``|tr(U^dag V)|^(2k)`` for ``pairs`` independent draws."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if isinstance(spec.kind, Haar):
        if spec.n_qubits > MAX_DENSE_QUBITS:
            raise CapacityError(f"dense unitaries are limited to {MAX_DENSE_QUBITS} qubits")
        out = np.empty(pairs)
        chunk = max(1, min(pairs, 2**22 // spec.dim**2))
        for start in range(0, pairs, chunk):
            n = min(chunk, pairs - start)
            us = haar_unitary(spec.dim, rng, size=n)
            vs = haar_unitary(spec.dim, rng, size=n)
            out[start:start + n] = np.abs(np.einsum("kij,kij->k", us.conj(), vs)) ** (2 * k)
        return out
    if isinstance(spec.kind, Pauli1Design):
        # tr(P Q) = d if the strings agree, else 0
        out = np.empty(pairs)
        for t in range(pairs):
            p = random_pauli_string(spec.n_qubits, rng)
            q = random_pauli_string(spec.n_qubits, rng)
            out[t] = float(spec.dim) ** (2 * k) if p == q else 0.0
        return out
    out = np.empty(pairs)
    for t in range(pairs):
        u = sample(spec, rng)
        v = sample(spec, rng)
        out[t] = abs(np.vdot(u, v)) ** (2 * k)
    return out


def estimate_frame_potential(spec: EnsembleSpec, k: int, pairs: int, rng: np.random.Generator) -> float:
    """Monte-Carlo frame potential. Haar gives 1 for k=1 and 2 for k=2 (d >= 2)."""
    return float(frame_potential_samples(spec, k, pairs, rng).mean())


def exact_pauli_frame_potential(n_qubits: int, k: int) -> float:
    """Exhaustive average of ``|tr(P^dag Q)|^(2k)`` over all pairs of Pauli strings.

    Traces are taken from dense matrices, so this is independent of the
    closed form used by the sampler.
    """
    if n_qubits > 3:
        raise CapacityError("exact Pauli enumeration is limited to 3 qubits")
    mats = [as_dense(p) for p in all_pauli_strings(n_qubits)]
    total = 0.0
    for a in mats:
        for b in mats:
            total += abs(np.trace(a.conj().T @ b)) ** (2 * k)
    return total / len(mats) ** 2


_SITE_GRAM = np.array([[4.0, 2.0], [2.0, 4.0]])  # <<I|I>> = tr(1) = 4, <<I|S>> = tr(SWAP) = 2


def _gate_transfer() -> np.ndarray:
    """Two-fold twirl of a Haar 2-qubit gate on the {identity, swap} span of each site.

    Returned as a 4x4 matrix on ``(a, b)`` label pairs. Outputs are confined to
    equal labels on both sites; inputs are weighted by single-site overlaps.
    """
    dim = 4
    wg = np.array([[1.0, -1.0 / dim], [-1.0 / dim, 1.0]]) / (dim * dim - 1)
    t = np.zeros((2, 2, 2, 2))
    for s in range(2):
        t[s, s] = np.einsum("t,ta,tb->ab", wg[s], _SITE_GRAM, _SITE_GRAM)
    return t.reshape(4, 4)


def _local(m: np.ndarray, op: np.ndarray, site: int, width: int) -> np.ndarray:
    """Apply ``op`` to ``width`` adjacent row-index sites starting at ``site``."""
    k = op.shape[0]
    return np.matmul(op, m.reshape(1 << site, k, -1)).reshape(m.shape)


def brickwork_frame_potentials(n_qubits: int, max_depth: int):
    """Yield the exact ``F^(2)`` of the brickwork ensemble for depths 1..max_depth.

    Each layer's moment operator is an orthogonal projector that keeps the span
    of per-site identity/swap permutations, so with ``N`` the layer product in
    that (non-orthogonal) basis and ``G`` its Gram matrix,
    ``F^(2) = tr(M^dag M) = tr(G^-1 N^T G N)``. ``F^(2) - 2`` is the squared
    Frobenius distance from the Haar moment operator.
    """
    if n_qubits < 2 or max_depth < 1:
        raise ValueError("need n_qubits >= 2 and depth >= 1")
    if n_qubits > MAX_EXACT_FRAME_QUBITS:
        raise CapacityError(f"exact brickwork frame potential is limited to {MAX_EXACT_FRAME_QUBITS} qubits")
    t = _gate_transfer()
    ginv = np.linalg.inv(_SITE_GRAM)
    dim = 1 << n_qubits
    n_mat = np.eye(dim)
    touched: set[int] = set()
    for layer in range(max_depth):
        for a in range(layer % 2, n_qubits - 1, 2):
            n_mat = _local(n_mat, t, a, 2)
            touched |= {a, a + 1}
        gn, right = n_mat, n_mat.T
        for site in range(n_qubits):
            gn = _local(gn, _SITE_GRAM, site, 1)
            right = _local(right, ginv, site, 1)
        # a site no gate touches carries its full 16-dim identity instead of the 2-dim span
        yield float(np.sum(gn * right.T)) * 8.0 ** (n_qubits - len(touched))


def brickwork_frame_potential(n_qubits: int, depth: int) -> float:
    """Exact ``F^(2)`` of the brickwork ensemble at one depth, no sampling."""
    for value in brickwork_frame_potentials(n_qubits, depth):
        pass
    return value


@dataclass
class BrickworkCalibration:
    """Outcome of :func:`calibrate_brickwork`, with enough detail to audit it."""

    n_qubits: int
    epsilon_target: float
    depth: int
    gaps: list[float] = field(default_factory=list)

    def as_metadata(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "epsilon_target": self.epsilon_target,
            "depth": self.depth,
            "measure": "exact frame potential gap F2 - 2",
            "gaps_by_depth": self.gaps,
        }


def calibrate_brickwork(n_qubits: int, epsilon_target: float, depth_cap: int = 128) -> BrickworkCalibration:
    """Shallowest brickwork depth whose exact frame potential is within ``epsilon_target`` of Haar.

    The gap ``F^(2) - 2`` is the squared Frobenius distance between the
    brickwork and Haar 2-fold moment operators; it never increases with depth.
    """
    if n_qubits < 2:
        raise ValueError("brickwork calibration needs at least 2 qubits")
    if epsilon_target <= 0:
        raise ValueError("epsilon_target must be positive")
    gaps = []
    for depth, f2 in enumerate(brickwork_frame_potentials(n_qubits, depth_cap), 1):
        gaps.append(f2 - 2.0)
        if gaps[-1] <= epsilon_target:
            return BrickworkCalibration(n_qubits, epsilon_target, depth, gaps)
    raise CalibrationError(
        f"brickwork frame potential gap did not reach {epsilon_target} within the cap of "
        f"{depth_cap} layers (last gap {gaps[-1]:.4g})"
    )


def calibrate_brickwork_depth(n_qubits: int, epsilon_target: float, depth_cap: int = 128) -> int:
    return calibrate_brickwork(n_qubits, epsilon_target, depth_cap).depth
