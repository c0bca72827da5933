"""End-to-end stages: sample generation, image encoding, training, verification.

Every random choice is driven by a seed derived from the master seed, so any
single image can be regenerated from ``(seed, class, index)`` alone.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from qdesign import __version__, cnn, ensembles
from qdesign.config import (
    STAGE_SPLIT,
    ExperimentConfig,
    derive_seed,
    image_seed,
)
from qdesign.correlators import SampleFile, catalog, sample_matrix
from qdesign.errors import CapacityError, ConfigError
from qdesign.imaging import Dataset, encode_entries, split_dataset

log = logging.getLogger(__name__)


def resolve_brickwork_depth(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Depth from the config, from calibration, or the per-qubit default."""
    if cfg.brickwork_depth is not None:
        return cfg.brickwork_depth, {"source": "config"}
    if cfg.calibrate_brickwork:
        cal = ensembles.calibrate_brickwork(cfg.n_qubits, cfg.epsilon_target)
        return cal.depth, {"source": "calibration", **cal.as_metadata()}
    depth = ensembles.default_brickwork_depth(cfg.n_qubits)
    return depth, {"source": "default", "rule": f"{ensembles.DEFAULT_DEPTH_PER_QUBIT} * n_qubits"}


def _class_ensembles(cfg: ExperimentConfig, depth: int | None = None):
    if depth is None and "brickwork" in (cfg.ensemble_a, cfg.ensemble_b):
        depth = resolve_brickwork_depth(cfg)[0]
    return [ensembles.make_ensemble(name, cfg.n_qubits, depth) for name in (cfg.ensemble_a, cfg.ensemble_b)]


def _generate_chunk(args):
    corr, ens, m, share, seeds = args
    spec = catalog(corr)
    return [sample_matrix(spec, ens, m, s, share_draws=share).entries for s in seeds]


def generate_class(cfg: ExperimentConfig, class_index: int, ens, count: int | None = None,
                   executor=None) -> np.ndarray:
    """``(count, N, N)`` sample matrices for one class, in image-index order."""
    count = cfg.images_per_class if count is None else count
    seeds = [image_seed(cfg.seed, class_index, k) for k in range(count)]
    if executor is None:
        return np.stack(_generate_chunk((cfg.correlator, ens, cfg.batch_m, cfg.share_draws, seeds)))
    size = max(1, len(seeds) // (4 * cfg.threads))
    jobs = [(cfg.correlator, ens, cfg.batch_m, cfg.share_draws, seeds[s:s + size])
            for s in range(0, len(seeds), size)]
    return np.stack([e for chunk in executor.map(_generate_chunk, jobs) for e in chunk])


def generate_samples(cfg: ExperimentConfig, depth: int | None = None) -> SampleFile:
    """Sample matrices for both classes; ``ensemble_a`` is label 0, ``ensemble_b`` label 1."""
    cfg.validate()
    ens = _class_ensembles(cfg, depth)
    parts = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            for label, e in enumerate(ens):
                parts.append(generate_class(cfg, label, e, executor=pool))
    else:
        for label, e in enumerate(ens):
            parts.append(generate_class(cfg, label, e))
    labels = np.repeat(np.arange(2, dtype=np.uint8), cfg.images_per_class)
    return SampleFile(cfg.n_qubits, cfg.correlator, cfg.batch_m, labels, np.concatenate(parts))


def encode_samples(samples: SampleFile, metadata: dict | None = None) -> Dataset:
    images = np.stack([encode_entries(e, samples.batch_m) for e in samples.entries]) if len(samples) else \
        np.zeros((0, samples.n_qubits, samples.n_qubits, 3), np.uint8)
    meta = {"correlator": samples.correlator, "n_qubits": samples.n_qubits, "batch_m": samples.batch_m}
    meta.update(metadata or {})
    return Dataset(images, samples.labels.copy(), meta)


def split_for(cfg: ExperimentConfig, dataset: Dataset) -> tuple[Dataset, Dataset]:
    return split_dataset(dataset, cfg.train_count, np.random.default_rng(derive_seed(cfg.seed, STAGE_SPLIT)))


def train_on(cfg: ExperimentConfig, dataset: Dataset, progress=None):
    """Split ``dataset`` per the config and train; returns ``(model, report, train, val)``."""
    counts = dataset.class_counts()
    if len(counts) < 2:
        raise ConfigError(f"dataset contains a single class {sorted(counts)}; need both labels 0 and 1")
    if not 0 < cfg.train_count < len(dataset):
        raise ConfigError(f"train_count={cfg.train_count} must lie in (0, {len(dataset)}) for this dataset")
    train_set, val_set = split_for(cfg, dataset)
    ccfg = cfg.cnn_config()
    model, report = cnn.train(train_set, val_set, ccfg, np.random.default_rng(ccfg.seed), log=progress)
    return model, report, train_set, val_set


# --- ensemble verification ----------------------------------------------------

VERIFY_METRICS = ("first_moment_twirl_error", "second_moment_twirl_error", "frame_potential_1", "frame_potential_2")


def verify(ensemble: str, n_qubits: int, trials: int, seed: int, exact: bool = False,
           metrics=VERIFY_METRICS, depth: int | None = None) -> list[tuple[str, float, float]]:
    """Rows ``(metric, value, stderr)``; for twirl errors the stderr column is the noise floor."""
    spec = ensembles.make_ensemble(ensemble, n_qubits, depth)
    limits = {"first_moment_twirl_error": ensembles.MAX_FIRST_MOMENT_QUBITS,
              "second_moment_twirl_error": ensembles.MAX_SECOND_MOMENT_QUBITS}
    for name in metrics:
        if name not in VERIFY_METRICS:
            raise ValueError(f"unknown metric {name!r}")
        if name in limits and n_qubits > limits[name]:
            raise CapacityError(f"{name} needs n_qubits <= {limits[name]}, got {n_qubits}")
    if exact and ensemble != "pauli1":
        raise ValueError("exact enumeration is only available for pauli1")
    rows = []
    streams = dict(zip(VERIFY_METRICS, np.random.default_rng(seed).spawn(len(VERIFY_METRICS))))
    for name in metrics:
        rng = streams[name]
        if name.startswith("first"):
            rows.append((name, *ensembles.twirl_error_with_floor(spec, 1, trials, rng)))
        elif name.startswith("second"):
            rows.append((name, *ensembles.twirl_error_with_floor(spec, 2, trials, rng)))
        else:
            k = int(name[-1])
            if exact:
                rows.append((name, float(ensembles.exact_pauli_frame_potential(n_qubits, k)), 0.0))
            else:
                vals = ensembles.frame_potential_samples(spec, k, trials, rng)
                rows.append((name, float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))
                             if len(vals) > 1 else float("nan")))
    return rows


def write_metric_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value", "stderr"])
        for name, value, err in rows:
            w.writerow([name, repr(float(value)), repr(float(err))])


# --- manifests ------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest.json")


def write_manifest(command: str, cfg: ExperimentConfig | None, outputs: list, started: float,
                   seeds: dict | None = None, extra: dict | None = None) -> Path:
    """Record config, derived seeds and output digests next to the first output file."""
    outputs = [Path(p) for p in outputs]
    manifest = {
        "tool": "qdesign",
        "version": __version__,
        "command": command,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.as_dict() if cfg is not None else None,
        "seeds": seeds or {},
        "files": {str(p): sha256_file(p) for p in outputs},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest.update(extra)
    out = manifest_path(outputs[0])
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def check_manifest(path) -> bool:
    """True when every digest in the manifest matches the file on disk."""
    data = json.loads(Path(path).read_text())
    return all(Path(p).exists() and sha256_file(p) == digest for p, digest in data["files"].items())
