from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdesign import ensembles as E
from qdesign.errors import CalibrationError, CapacityError
from qdesign.quantum import PauliString, apply_pauli_string, as_dense


def rng(seed=0):
    return np.random.default_rng(seed)


def test_pauli_sampling_uniform_single_qubit():
    spec = E.make_ensemble("pauli1", 1)
    r = rng()
    counts = Counter(str(E.sample(spec, r)) for _ in range(10_000))
    assert set(counts) == {"I", "X", "Y", "Z"}
    for c in counts.values():
        assert abs(c / 10_000 - 0.25) < 0.02


def test_haar_mean_abs_u00_squared():
    r = rng(1)
    vals = [abs(E.sample(E.make_ensemble("haar", 2), r)[0, 0]) ** 2 for _ in range(10_000)]
    assert abs(np.mean(vals) - 0.25) < 0.01


def test_haar_trace_second_moment():
    r = rng(2)
    vals = [abs(np.trace(E.haar_unitary(4, r))) ** 2 for _ in range(10_000)]
    assert abs(np.mean(vals) - 1) < 0.1


def test_haar_qr_phase_fix_makes_r_diagonal_positive():
    # Without the fix, Q's phases are biased; with it, U = Q' has E[U_00] = 0.
    r = rng(3)
    u = E.haar_unitary(4, r, size=20_000)
    assert abs(u[:, 0, 0].mean()) < 0.02


@pytest.mark.parametrize("name,n,depth", [("haar", 3, None), ("brickwork", 2, 1), ("brickwork", 4, 5)])
def test_sampled_unitaries_are_unitary(name, n, depth):
    r = rng(4)
    spec = E.make_ensemble(name, n, depth=depth)
    for _ in range(20):
        u = E.sample(spec, r)
        assert np.linalg.norm(u @ u.conj().T - np.eye(2**n)) < 1e-8


def test_brickwork_depth_one_on_two_qubits_is_a_single_gate():
    a = E.brickwork_unitary(2, 1, rng(5))
    b = E.haar_unitary(4, rng(5))
    np.testing.assert_array_equal(a, b)


def test_brickwork_layers_touch_alternating_pairs():
    # one layer on 3 qubits leaves site 2 untouched: U = G (x) I
    u = E.brickwork_unitary(3, 1, rng(6))
    g = u.reshape(4, 2, 4, 2)
    np.testing.assert_allclose(g[:, 0, :, 1], 0, atol=1e-14)
    np.testing.assert_allclose(g[:, 0, :, 0], g[:, 1, :, 1], atol=1e-14)


@pytest.mark.parametrize("name", ["pauli1", "brickwork", "haar"])
def test_sampling_is_deterministic(name):
    spec = E.make_ensemble(name, 3, depth=3)
    r1, r2 = rng(12), rng(12)
    for _ in range(5):
        x, y = E.sample(spec, r1), E.sample(spec, r2)
        if isinstance(x, PauliString):
            assert x == y
        else:
            assert np.array_equal(x, y)


def test_ensemble_spec_validation():
    with pytest.raises(ValueError):
        E.EnsembleSpec(E.Brickwork2Design(depth=3), 1)
    with pytest.raises(ValueError):
        E.Brickwork2Design(depth=0)
    with pytest.raises(ValueError):
        E.Brickwork2Design(epsilon_target=1.5)
    with pytest.raises(ValueError):
        E.make_ensemble("clifford", 2)


def test_exact_pauli_twirl_is_maximally_mixed():
    # oracle: average P rho P over all 16 strings
    r = rng(7)
    psi = r.standard_normal(4) + 1j * r.standard_normal(4)
    psi /= np.linalg.norm(psi)
    m = np.zeros((4, 4), complex)
    for p in E.all_pauli_strings(2):
        v = apply_pauli_string(psi, p)
        m += np.outer(v, v.conj())
    assert np.linalg.norm(m / 16 - np.eye(4) / 4) < 1e-12


@pytest.mark.parametrize("name", ["pauli1", "brickwork", "haar"])
def test_first_moment_twirl(name):
    spec = E.make_ensemble(name, 2, depth=2)
    assert E.first_moment_twirl_error(spec, 4000, rng(8)) <= 0.05


def test_first_moment_single_trial_equals_distance_of_rotated_state():
    spec = E.make_ensemble("haar", 2)
    err = E.first_moment_twirl_error(spec, 1, rng(9))
    # any pure state is at distance sqrt(1 - 1/d) from I/d
    assert abs(err - np.sqrt(1 - 1 / 4)) < 1e-12


def test_second_moment_separates_designs():
    r = rng(10)
    assert E.second_moment_twirl_error(E.make_ensemble("haar", 2), 5000, r) <= 0.05
    assert E.second_moment_twirl_error(E.make_ensemble("pauli1", 2), 5000, r) > 0.1
    assert E.second_moment_twirl_error(E.make_ensemble("brickwork", 2), 5000, r) <= 0.05


def test_twirl_capacity_guards():
    with pytest.raises(CapacityError):
        E.first_moment_twirl_error(E.make_ensemble("haar", 7), 10, rng())
    with pytest.raises(CapacityError):
        E.second_moment_twirl_error(E.make_ensemble("haar", 4), 10, rng())


def test_haar_frame_potentials():
    spec = E.make_ensemble("haar", 3)
    assert abs(E.estimate_frame_potential(spec, 1, 10_000, rng(13)) - 1) <= 0.1
    assert abs(E.estimate_frame_potential(spec, 2, 10_000, rng(14)) - 2) <= 0.5


def test_exact_pauli_frame_potential():
    assert E.exact_pauli_frame_potential(2, 2) == 16.0
    assert E.exact_pauli_frame_potential(2, 1) == 1.0


def test_sampled_pauli_frame_potential_uses_trace_identity():
    # closed form in the sampler agrees with dense traces
    r = rng(15)
    for _ in range(50):
        p, q = E.random_pauli_string(2, r), E.random_pauli_string(2, r)
        t = abs(np.trace(as_dense(p).conj().T @ as_dense(q)))
        assert t == (4.0 if p == q else 0.0)
    f2 = E.estimate_frame_potential(E.make_ensemble("pauli1", 2), 2, 20_000, r)
    assert abs(f2 - 16) < 2


def test_frame_potential_brickwork_approaches_haar():
    f2 = E.estimate_frame_potential(E.make_ensemble("brickwork", 2, depth=1), 2, 5000, rng(16))
    assert abs(f2 - 2) < 0.3


def test_frame_potential_argument_checks():
    with pytest.raises(ValueError):
        E.estimate_frame_potential(E.make_ensemble("haar", 2), 3, 10, rng())
    with pytest.raises(ValueError):
        E.estimate_frame_potential(E.make_ensemble("haar", 2), 1, 0, rng())


def test_exact_brickwork_frame_potential_closed_cases():
    # two qubits: one Haar 4x4 gate per even layer, already Haar on the whole chain
    for depth in (1, 2, 5):
        assert E.brickwork_frame_potential(2, depth) == pytest.approx(2.0, abs=1e-12)
    # three qubits, one layer: U = G (x) I, so |tr(U^dag V)|^4 = 16 |tr(G^dag G')|^4
    assert E.brickwork_frame_potential(3, 1) == pytest.approx(32.0, abs=1e-9)


@pytest.mark.parametrize("n,depth", [(3, 2), (4, 3)])
def test_exact_brickwork_frame_potential_matches_sampling(n, depth):
    vals = E.frame_potential_samples(E.make_ensemble("brickwork", n, depth), 2, 15_000, rng(21 + n))
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - E.brickwork_frame_potential(n, depth)) <= 4 * se


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 7), st.integers(1, 12))
def test_exact_brickwork_frame_potential_monotone(n, depth):
    a, b = E.brickwork_frame_potential(n, depth), E.brickwork_frame_potential(n, depth + 1)
    assert a >= 2 - 1e-9 and b <= a + 1e-9


def test_calibration():
    assert E.calibrate_brickwork_depth(2, 1e-3) == 1
    cal = E.calibrate_brickwork(6, 1e-3)
    assert cal.gaps[-1] <= 1e-3 < cal.gaps[-2]
    assert len(cal.gaps) == cal.depth
    assert cal.as_metadata()["depth"] == cal.depth
    # looser targets never need more layers
    assert E.calibrate_brickwork_depth(6, 0.1) <= cal.depth


def test_calibration_limits():
    with pytest.raises(CalibrationError):
        E.calibrate_brickwork_depth(4, 1e-3, depth_cap=1)
    with pytest.raises(CapacityError):
        E.brickwork_frame_potential(13, 2)
    with pytest.raises(ValueError):
        E.calibrate_brickwork(1, 1e-3)