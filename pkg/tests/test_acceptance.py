"""Acceptance criteria, each at its stated tolerance.

One PASS/FAIL line per criterion is printed in the terminal summary. The N=10
classification runs cache their generated sample matrices in the pytest cache
directory; criterion 7 (full scale, multi-hour) runs only with
``QDESIGN_FULL_SCALE=1``.
"""
import os
import time

import numpy as np
import pytest

from conftest import record
from qdesign import cnn, ensembles, pipeline
from qdesign.config import ExperimentConfig
from qdesign.correlators import SampleFile, catalog, ensemble_average
from qdesign.ensembles import make_ensemble

pytestmark = pytest.mark.slow

FULL_SCALE = os.environ.get("QDESIGN_FULL_SCALE") == "1"


# --- 1. design order -----------------------------------------------------------

@pytest.fixture(scope="module")
def calibrated_depth_n2():
    return ensembles.calibrate_brickwork(2, 1e-3)


def test_c1_design_order(calibrated_depth_n2):
    depth = calibrated_depth_n2.depth
    lines, ok = [], True
    for offset, name in enumerate(ensembles.ENSEMBLE_NAMES):
        spec = make_ensemble(name, 2, depth)
        e1, _ = ensembles.twirl_error_with_floor(spec, 1, 5000, np.random.default_rng(110 + offset))
        e2, _ = ensembles.twirl_error_with_floor(spec, 2, 5000, np.random.default_rng(120 + offset))
        ok &= e1 <= 0.05
        ok &= (e2 >= 0.1) if name == "pauli1" else (e2 <= 0.05)
        lines.append(f"{name} t1={e1:.4f} t2={e2:.4f}")
    record(1, ok, f"brickwork depth {depth}; " + "; ".join(lines)
           + " (need t1<=0.05; t2<=0.05 brickwork/haar, >=0.1 pauli1)")
    assert ok


# --- 2. frame potentials -----------------------------------------------------------

def test_c2_frame_potentials():
    haar = make_ensemble("haar", 3)
    f1 = ensembles.estimate_frame_potential(haar, 1, 10_000, np.random.default_rng(201))
    f2 = ensembles.estimate_frame_potential(haar, 2, 10_000, np.random.default_rng(202))
    exact = ensembles.exact_pauli_frame_potential(2, 2)
    ok = abs(f1 - 1) <= 0.1 and abs(f2 - 2) <= 0.5 and exact == 16
    record(2, ok, f"haar N=3 F1={f1:.4f} F2={f2:.4f}; pauli1 N=2 exact F2={exact:g}")
    assert ok


# --- 3 and 4. large-N limits -----------------------------------------------------

@pytest.fixture(scope="module")
def depth_n6():
    return ensembles.calibrate_brickwork(6, 1e-3).depth


def test_c3_two_point_factorises(depth_n6):
    depth = depth_n6
    spec = catalog("xy2pt")
    lines, ok = [], True
    for offset, name in enumerate(ensembles.ENSEMBLE_NAMES):
        est = ensemble_average(spec, make_ensemble(name, 6, depth), 0, 3, 2000,
                               np.random.default_rng(310 + offset))
        ratio = abs(est.mean) / est.stderr
        ok &= ratio <= 3
        lines.append(f"{name} |mean|={abs(est.mean):.4f} se={est.stderr:.4f}")
    record(3, ok, "xy2pt N=6 i=0 j=3 2000 trials; " + "; ".join(lines) + " (need |mean|<=3se)")
    assert ok


def test_c4_otoc_decays(depth_n6):
    depth = depth_n6
    spec = catalog("xyxy")
    lines, ok = [], True
    for offset, name in enumerate(("haar", "brickwork")):
        est = ensemble_average(spec, make_ensemble(name, 6, depth), 0, 3, 2000,
                               np.random.default_rng(410 + offset))
        ok &= abs(est.mean) <= 0.05
        lines.append(f"{name} |mean|={abs(est.mean):.4f}")
    pauli = ensemble_average(spec, make_ensemble("pauli1", 6), 0, 3, 2000, np.random.default_rng(420))
    ok &= abs(pauli.mean - 1) < 1e-12
    lines.append(f"pauli1 mean={pauli.mean.real:.6f}{pauli.mean.imag:+.1e}j")
    record(4, ok, "xyxy N=6 i=0 j=3 2000 trials; " + "; ".join(lines) + " (need <=0.05; pauli1 == 1)")
    assert ok


# --- 5. gradients ----------------------------------------------------------------

def test_c5_gradient_check():
    rng = np.random.default_rng(501)
    model = cnn.init_model(cnn.CnnConfig(precision="float64"), (10, 10, 3), rng)
    x = rng.random((4, 10, 10, 3))
    y = np.array([0, 1, 1, 0])
    _, grads, _ = cnn.loss_and_gradients(model, x, y)
    # small enough that no probe pushes a pre-activation across the ReLU kink
    step = 1e-6
    worst = {}
    for k, param in enumerate(model.params):
        flat = param.reshape(-1)
        for idx in rng.choice(flat.size, size=min(40, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + step
            up = cnn.cross_entropy(model.predict_proba(x), y).mean()
            flat[idx] = old - step
            down = cnn.cross_entropy(model.predict_proba(x), y).mean()
            flat[idx] = old
            num, ana = (up - down) / (2 * step), grads[k].reshape(-1)[idx]
            scale = max(abs(num), abs(ana))
            err = 0.0 if scale < 1e-10 else abs(num - ana) / scale
            worst[k] = max(worst.get(k, 0.0), err)
    top = max(worst.values())
    ok = top < 1e-4 and len(worst) == len(model.params)
    record(5, ok, f"worst relative error {top:.2e} over {len(worst)} parameter tensors (need <1e-4)")
    assert ok


# --- 6, 8, 9. desk-scale classification ---------------------------------------------

DESK = dict(n_qubits=10, correlator="xxyy", images_per_class=600, batch_m=5, train_count=960, seed=2024)


def cached_class(cache, cfg: ExperimentConfig, label: int, name: str) -> np.ndarray:
    """Sample matrices for one class, reusing a cached array when the inputs match."""
    params = dict(n=cfg.n_qubits, corr=cfg.correlator, count=cfg.images_per_class, m=cfg.batch_m,
                  seed=cfg.seed, label=label, ensemble=name, share=cfg.share_draws,
                  depth=pipeline.resolve_brickwork_depth(cfg)[0] if name == "brickwork" else None)
    path = cache("class", params)
    if path.exists():
        return np.load(path)
    ens = make_ensemble(name, cfg.n_qubits, params["depth"])
    entries = pipeline.generate_class(cfg, label, ens)
    np.save(path, entries)
    return entries


def run_classification(cache, **overrides):
    cfg = ExperimentConfig(**{**DESK, **overrides}).validate()
    parts = [cached_class(cache, cfg, label, name) for label, name in enumerate((cfg.ensemble_a, cfg.ensemble_b))]
    labels = np.repeat(np.arange(2, dtype=np.uint8), cfg.images_per_class)
    samples = SampleFile(cfg.n_qubits, cfg.correlator, cfg.batch_m, labels, np.concatenate(parts))
    dataset = pipeline.encode_samples(samples)
    _, report, _, val = pipeline.train_on(cfg, dataset)
    return report, len(val)


@pytest.fixture(scope="module")
def desk_run(sample_cache):
    return run_classification(sample_cache, ensemble_a="pauli1", ensemble_b="haar")


def test_c6_desk_scale_classification(desk_run):
    report, n_val = desk_run
    acc = report.final_accuracy()
    ok = acc >= 0.90 and len(report.rows) <= 200
    record(6, ok, f"pauli1 vs haar xxyy N=10 600/class, {len(report.rows)} epochs, "
                  f"{n_val} validation images: last-10 mean val acc {acc:.4f} (need >=0.90)")
    assert ok


def test_c8_same_ensemble_is_chance(sample_cache):
    report, n_val = run_classification(sample_cache, ensemble_a="haar", ensemble_b="haar")
    acc = report.final_accuracy()
    ok = abs(acc - 0.5) <= 0.05
    record(8, ok, f"haar vs haar xxyy N=10 600/class, {n_val} validation images: "
                  f"last-10 mean val acc {acc:.4f} (need 0.50+-0.05)")
    assert ok


def test_c9_training_wall_clock(desk_run):
    report, _ = desk_run
    minutes = report.wall_seconds / 60
    ok = minutes < 10
    record(9, ok, f"criterion 6 training took {minutes:.2f} min (need single-digit minutes)")
    assert ok


# --- 7. full paper scale (opt-in) -------------------------------------------------------

FULL_PAIRS = [(corr, a, b) for corr in ("xyxy", "xxyy", "xy2pt", "zz2pt")
              for a, b in (("pauli1", "brickwork"), ("brickwork", "haar"))]


@pytest.mark.skipif(not FULL_SCALE, reason="full-scale run is multi-hour; set QDESIGN_FULL_SCALE=1")
@pytest.mark.parametrize("corr,a,b", FULL_PAIRS)
def test_c7_full_scale(sample_cache, corr, a, b):
    start = time.perf_counter()
    report, n_val = run_classification(sample_cache, correlator=corr, ensemble_a=a, ensemble_b=b,
                                       images_per_class=3125, train_count=5000, seed=7)
    acc = report.final_accuracy()
    need = 0.90 if corr == "zz2pt" else 0.97
    ok = acc >= need
    record(7, ok, f"{corr} {a} vs {b} 3125/class: last-10 mean val acc {acc:.4f} (need >={need}); "
                  f"{(time.perf_counter() - start) / 3600:.2f} h")
    assert ok


def test_c7_gate():
    if not FULL_SCALE:
        record(7, None, "full paper scale not run (multi-hour); set QDESIGN_FULL_SCALE=1 to enable")
