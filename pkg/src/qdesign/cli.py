"""Command-line entry point: ``qdesign {generate,encode,train,eval,verify}``.

Failures print a single line ``error: <Kind>: <message>`` to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
import typing
from pathlib import Path

from qdesign import cnn, pipeline
from qdesign.config import (
    STAGE_SPLIT,
    STAGE_TRAIN,
    ExperimentConfig,
    derive_seed,
    dump_config,
    field_names,
    field_type,
    load_config,
    parse_value,
)
from qdesign.correlators import read_samples, write_samples
from qdesign.ensembles import ENSEMBLE_NAMES
from qdesign.imaging import export_png, read_dataset, write_dataset

log = logging.getLogger("qdesign")


def _add_config_overrides(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value experiment config file")
    p.add_argument("--threads", type=int, help="worker processes for generation")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    group = p.add_argument_group("config overrides")
    for name in field_names():
        if name in ("threads", "seed"):
            continue
        tp = field_type(name)
        meta = typing.get_args(tp)[0].__name__ if typing.get_args(tp) else tp.__name__
        group.add_argument("--" + name.replace("_", "-"), dest=name, metavar=meta.upper())


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for name in field_names():
        value = getattr(args, name, None)
        if value is None:
            continue
        setattr(cfg, name, parse_value(name, str(value)))
    return cfg.validate()


def cmd_generate(args) -> int:
    started = time.time()
    cfg = _config_from_args(args)
    out = Path(args.out or cfg.samples_path)
    depth, depth_info = None, None
    if "brickwork" in (cfg.ensemble_a, cfg.ensemble_b):
        depth, depth_info = pipeline.resolve_brickwork_depth(cfg)
    samples = pipeline.generate_samples(cfg, depth)
    write_samples(out, samples)
    seeds = {"image_seed_rule": "numpy SeedSequence([seed, 1, class, index]).generate_state(1, uint64)"}
    extra = {"records": len(samples), "brickwork_depth": depth, "brickwork": depth_info}
    pipeline.write_manifest("generate", cfg, [out], started, seeds, extra)
    print(f"wrote {len(samples)} records to {out}")
    return 0


def cmd_encode(args) -> int:
    started = time.time()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    src = Path(args.samples or cfg.samples_path)
    out = Path(args.out or cfg.images_path)
    samples = read_samples(src)
    dataset = pipeline.encode_samples(samples, {"source": str(src)})
    write_dataset(out, dataset)
    if args.png_dir:
        export_png(dataset, args.png_dir)
    pipeline.write_manifest("encode", None, [out, Path(str(out) + ".json")], started,
                            extra={"source": str(src), "source_sha256": pipeline.sha256_file(src)})
    print(f"wrote {len(dataset)} images to {out}")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    cfg = _config_from_args(args)
    src = Path(args.dataset or cfg.images_path)
    dataset = read_dataset(src)
    out = Path(args.out or cfg.model_path)
    metrics = Path(cfg.metrics_path)

    def progress(row):
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", *row)

    model, report, _, val = pipeline.train_on(cfg, dataset, progress)
    cnn.save_checkpoint(out, model)
    report.write_csv(metrics)
    seeds = {"split": derive_seed(cfg.seed, STAGE_SPLIT), "train": derive_seed(cfg.seed, STAGE_TRAIN)}
    extra = {"dataset": str(src), "dataset_sha256": pipeline.sha256_file(src), "validation_size": len(val),
             "wall_seconds": report.wall_seconds}
    pipeline.write_manifest("train", cfg, [out, metrics], started, seeds, extra)
    if report.rows:
        print(f"final val_acc {report.rows[-1][3]:.4f}; last-10 mean {report.final_accuracy():.4f}")
    print(f"wrote {out} and {metrics}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    ckpt = Path(args.checkpoint or cfg.model_path)
    src = Path(args.dataset or cfg.images_path)
    model = cnn.load_checkpoint(ckpt)
    dataset = read_dataset(src)
    if args.split != "all":
        train_set, val_set = pipeline.split_for(cfg, dataset)
        dataset = val_set if args.split == "validation" else train_set
    acc = cnn.evaluate(model, dataset)
    print(f"accuracy {acc:.4f}")
    path = Path(args.out or cfg.eval_path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["checkpoint", "dataset", "split", "images", "accuracy"])
        w.writerow([str(ckpt), str(src), args.split, len(dataset), f"{acc:.4f}"])
    return 0


def cmd_verify(args) -> int:
    started = time.time()
    depth = args.brickwork_depth
    cal_info = None
    if args.ensemble == "brickwork" and depth is None and args.calibrate:
        cfg = ExperimentConfig(n_qubits=args.n_qubits, seed=args.seed, calibrate_brickwork=True,
                               epsilon_target=args.epsilon_target)
        depth, cal_info = pipeline.resolve_brickwork_depth(cfg)
    rows = pipeline.verify(args.ensemble, args.n_qubits, args.trials, args.seed, exact=args.exact,
                           metrics=args.metrics.split(",") if args.metrics else pipeline.VERIFY_METRICS,
                           depth=depth)
    out = Path(args.out)
    pipeline.write_metric_rows(out, rows)
    pipeline.write_manifest("verify", None, [out], started, {"verify": args.seed},
                            {"ensemble": args.ensemble, "n_qubits": args.n_qubits, "trials": args.trials,
                             "exact": args.exact, "brickwork_depth": depth, "calibration": cal_info})
    for name, value, err in rows:
        print(f"{name},{float(value)!r},{float(err)!r}")
    return 0


def cmd_show_config(args) -> int:
    sys.stdout.write(dump_config(_config_from_args(args)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample correlator matrices for both classes (QCSM)")
    _add_config_overrides(p)
    p.add_argument("--out", help="samples file (default: samples_path)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("encode", help="render a QCSM file as a QCIM image dataset")
    p.add_argument("--config")
    p.add_argument("--samples", help="input QCSM file (default: samples_path)")
    p.add_argument("--out", help="output QCIM file (default: images_path)")
    p.add_argument("--png-dir", help="also export one PNG per image here")
    p.add_argument("--threads", type=int, help="accepted for symmetry; encoding is single-threaded")
    p.add_argument("--seed", type=int, help="accepted for symmetry; encoding is deterministic")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="split a QCIM dataset and train the CNN")
    _add_config_overrides(p)
    p.add_argument("--dataset", help="QCIM dataset (default: images_path)")
    p.add_argument("--out", help="checkpoint path (default: model_path)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset")
    _add_config_overrides(p)
    p.add_argument("--checkpoint", help="QCNN checkpoint (default: model_path)")
    p.add_argument("--dataset", help="QCIM dataset (default: images_path)")
    p.add_argument("--split", choices=("all", "train", "validation"), default="all",
                   help="evaluate on the config's train/validation split instead of the whole file")
    p.add_argument("--out", help="CSV to append to (default: eval_path)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="design-order oracles for one ensemble")
    p.add_argument("--ensemble", choices=ENSEMBLE_NAMES, required=True)
    p.add_argument("--n-qubits", type=int, default=2)
    p.add_argument("--trials", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="exhaustive Pauli enumeration for frame potentials")
    p.add_argument("--metrics", help="comma-separated subset of " + ",".join(pipeline.VERIFY_METRICS))
    p.add_argument("--brickwork-depth", type=int)
    p.add_argument("--calibrate", action="store_true", help="calibrate the brickwork depth first")
    p.add_argument("--epsilon-target", type=float, default=1e-3)
    p.add_argument("--out", default="verify.csv")
    p.add_argument("--threads", type=int, help="accepted for symmetry; oracles are single-threaded")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("show-config", help="print the effective configuration")
    _add_config_overrides(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (Exception, KeyboardInterrupt) as exc:  # noqa: BLE001 - top-level reporter
        if args.verbose:
            log.exception("command failed")
        msg = " ".join(str(exc).split()) or repr(exc)
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
