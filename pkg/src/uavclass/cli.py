"""Command-line pipeline: generate -> train -> classify/evaluate/sweep-noise.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numeric
divergence. Flags override config-file values, which override defaults; the
resolved configuration is persisted next to every subcommand's outputs. Logs
go to stderr; machine-readable results go to files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    NOISE_LEVELS,
    Report,
    SoftmaxConfig,
    classify,
    classify_all,
    pca_project,
    report as build_report,
)
from .dataset import (
    build_dataset,
    fit_normalizer,
    load_dataset,
    load_trajectory,
    save_dataset,
    save_trajectory,
    split_dataset,
)
from .errors import (
    CheckpointError,
    DataFormatError,
    DivergedTrainingError,
    GimbalSingularityError,
    IntegrationDivergedError,
    ParameterFileError,
    ScenarioInfeasibleError,
)
from .network import load_checkpoint, save_checkpoint
from .training import TrainConfig, fit
from .classify import noise_sweep
from .vehicles import CLASS_NAMES, UavClass

log = logging.getLogger("uavclass")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (
    DataFormatError,
    CheckpointError,
    ParameterFileError,
    ScenarioInfeasibleError,
    FileNotFoundError,
    NotADirectoryError,
    ValueError,
)
_NUMERIC_ERRORS = (
    DivergedTrainingError,
    IntegrationDivergedError,
    GimbalSingularityError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


_DEFAULTS = {
    "generate": {
        "n_per_class": 100, "duration": 10.0, "dt": 0.01, "seed": 0,
        "fractions": [0.8, 0.1, 0.1], "split_seed": 0, "threads": 1,
    },
    "train": {
        "seed": 0, "epochs": 100, "batch": 256, "lambda_data": 1.0,
        "lambda_phys": 0.2, "lr": 1e-3, "patience": 30, "delta": 1e-5,
        "phys_window": 32, "phys_windows": 8,
    },
    "classify": {"gamma": 10.0, "index": 0},
    "evaluate": {"gamma": 10.0, "split": "test"},
    "sweep-noise": {
        "gamma": 10.0, "seed": 0, "split": "test",
        "levels": ",".join(f"{a:g}:{b:g}" for a, b in NOISE_LEVELS),
    },
    "report": {},
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="uavclass", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file with per-subcommand flag values")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("generate", help="simulate and persist a dataset")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--n-per-class", type=int, dest="n_per_class")
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--fractions", type=float, nargs=3, metavar=("TR", "VA", "TE"))
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--threads", type=int, help="parallel simulation workers")

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lambda-data", type=float, dest="lambda_data")
    p.add_argument("--lambda-phys", type=float, dest="lambda_phys")
    p.add_argument("--lr", type=float, help="phase-1 learning rate")
    p.add_argument("--patience", type=int)
    p.add_argument("--delta", type=float, help="early-stop improvement threshold")
    p.add_argument("--phys-window", type=int, dest="phys_window")
    p.add_argument("--phys-windows", type=int, dest="phys_windows")

    p = sub.add_parser("classify", help="classify one trajectory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trajectory", help="single-trajectory .bin file")
    p.add_argument("--dataset", help="dataset directory to pick a trajectory from")
    p.add_argument("--index", type=int, help="trajectory index within --dataset")
    p.add_argument("--gamma", type=float)
    p.add_argument("--export", help="also save the selected trajectory here")

    p = sub.add_parser("evaluate", help="classification report on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("sweep-noise", help="classification under noise levels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--levels", help="comma list of sx:sxdot percent pairs")
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("report", help="re-render a results.csv as a report")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(_DEFAULTS.get(args.command, {}))
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"config file: {exc}") from exc
        section = file_cfg.get(args.command, {})
        if not isinstance(section, dict):
            raise DataFormatError(f"config section {args.command!r} must be an object")
        unknown = set(section) - set(resolved)
        if unknown:
            raise DataFormatError(f"config keys not valid for {args.command}: {sorted(unknown)}")
        resolved.update(section)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        resolved[key] = value
    return resolved


def _write_config(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **{k: v for k, v in cfg.items()}}
    (out_dir / "config.json").write_text(json.dumps(payload, indent=1, default=str))


def _parse_levels(text: str):
    levels = []
    for chunk in text.split(","):
        sx, _, sxd = chunk.partition(":")
        levels.append((float(sx), float(sxd)))
    return levels


def _result_row(index, res) -> dict:
    row = {
        "index": index,
        "true": res.true_label,
        "predicted": res.predicted,
        "tie": int(res.tie),
    }
    for c in range(3):
        row[f"loss_{c}"] = repr(float(res.per_class_loss[c]))
        row[f"conf_{c}"] = repr(float(res.confidence[c]))
    return row


def _write_results_csv(path: Path, results) -> None:
    rows = [_result_row(i, r) for i, r in enumerate(results)]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _write_report_files(out: Path, rep: Report, stem: str = "report") -> None:
    (out / f"{stem}.txt").write_text(rep.to_text() + "\n")
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "f1", "support"])
        for c in range(3):
            writer.writerow([
                CLASS_NAMES[UavClass(c)], repr(float(rep.precision[c])),
                repr(float(rep.recall[c])), repr(float(rep.f1[c])),
                int(rep.support[c]),
            ])
        writer.writerow(["accuracy", repr(rep.accuracy), "", "", int(rep.support.sum())])
    np.savetxt(out / "confusion.csv", rep.confusion, fmt="%d", delimiter=",")


def _classification_line(res) -> str:
    conf = ", ".join(
        f"{CLASS_NAMES[UavClass(c)]} {100.0 * res.confidence[c]:.2f}%"
        for c in range(3)
    )
    line = f"confidence: {conf} | prediction: {CLASS_NAMES[UavClass(res.predicted)]}"
    if res.true_label is not None:
        line = (
            f"true: {CLASS_NAMES[UavClass(res.true_label)]} | " + line +
            f" | correct: {res.predicted == res.true_label}"
        )
    if res.tie:
        line += " | tie"
    return line


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_generate(cfg: dict) -> int:
    out = Path(cfg["out"])
    log.info("generate: %d/class, %.3g s @ dt=%.3g, seed=%d, threads=%d",
             cfg["n_per_class"], cfg["duration"], cfg["dt"], cfg["seed"],
             cfg["threads"])
    ds = build_dataset(cfg["n_per_class"], cfg["duration"], cfg["dt"],
                       cfg["seed"], workers=cfg["threads"])
    train, _, _ = split_dataset(ds, tuple(cfg["fractions"]), cfg["split_seed"])
    ds.norm = fit_normalizer(train)
    save_dataset(ds, out)
    _write_config(out, "generate", cfg)
    log.info("wrote %d trajectories to %s", len(ds), out)
    return EXIT_OK


def _cmd_train(cfg: dict) -> int:
    ds = load_dataset(cfg["dataset"])
    if ds.split_labels is None or ds.norm is None:
        raise DataFormatError("dataset was saved without splits/normalization")
    out = Path(cfg["out"])
    tcfg = TrainConfig(
        lambda_data=cfg["lambda_data"], lambda_phys=cfg["lambda_phys"],
        batch_train=cfg["batch"], epochs=cfg["epochs"],
        patience=cfg["patience"], early_stop_delta=cfg["delta"],
        lr_phase1=cfg["lr"], lr_phase2=cfg["lr"] / 10.0,
        lr_phase3=cfg["lr"] / 100.0, phys_window=cfg["phys_window"],
        phys_windows=cfg["phys_windows"], seed=cfg["seed"],
    )
    log.info("train: %d epochs, batch %d, seed %d on %s",
             tcfg.epochs, tcfg.batch_train, tcfg.seed, cfg["dataset"])
    params, tlog = fit(ds.subset("train"), ds.subset("val"), ds.norm, tcfg)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, ds.norm, out / "checkpoint")
    tlog.to_csv(out / "train_log.csv")
    _write_config(out, "train", cfg)
    log.info("best validation loss %.6g after %d epochs",
             min(tlog.val_loss), len(tlog.epoch))
    return EXIT_OK


def _load_model(path):
    params, stats = load_checkpoint(path)
    return params, stats


def _cmd_classify(cfg: dict) -> int:
    params, stats = _load_model(cfg["checkpoint"])
    if cfg.get("trajectory"):
        traj = load_trajectory(cfg["trajectory"])
    elif cfg.get("dataset"):
        ds = load_dataset(cfg["dataset"])
        index = cfg["index"]
        if not 0 <= index < len(ds):
            raise ValueError(f"index {index} outside dataset of {len(ds)}")
        traj = ds.trajectories[index]
    else:
        raise _UsageError("classify needs --trajectory or --dataset")
    if cfg.get("export"):
        save_trajectory(traj, cfg["export"])
        log.info("exported trajectory to %s", cfg["export"])
    res = classify(params, stats, traj, SoftmaxConfig(cfg["gamma"]))
    print(_classification_line(res))
    return EXIT_OK


def _split_trajs(ds, split_name):
    if ds.split_labels is None:
        raise DataFormatError("dataset was saved without split assignments")
    return ds.subset(split_name)


def _cmd_evaluate(cfg: dict) -> int:
    params, stats = _load_model(cfg["checkpoint"])
    ds = load_dataset(cfg["dataset"])
    trajs = _split_trajs(ds, cfg["split"])
    log.info("evaluate: %d %s trajectories", len(trajs), cfg["split"])
    results = classify_all(params, stats, trajs, SoftmaxConfig(cfg["gamma"]))
    rep = build_report(results)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_results_csv(out / "results.csv", results)
    _write_report_files(out, rep)

    states = np.vstack([stats.normalize_states(t.states) for t in trajs])
    labels = np.concatenate([
        np.full(t.states.shape[0], t.class_id, dtype=int) for t in trajs
    ])
    proj, ratio = pca_project(states, k=2)
    with open(out / "pca.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pc1", "pc2", "class",
                         f"evr1={ratio[0]:.6f}", f"evr2={ratio[1]:.6f}"])
        for row, lab in zip(proj, labels):
            writer.writerow([repr(float(row[0])), repr(float(row[1])), int(lab)])

    _write_config(out, "evaluate", cfg)
    print(rep.to_text())
    return EXIT_OK


def _cmd_sweep_noise(cfg: dict) -> int:
    params, stats = _load_model(cfg["checkpoint"])
    ds = load_dataset(cfg["dataset"])
    trajs = _split_trajs(ds, cfg["split"])
    levels = _parse_levels(cfg["levels"])
    log.info("sweep-noise: %d trajectories, levels %s", len(trajs), levels)
    reports = noise_sweep(params, stats, trajs, levels, cfg["seed"],
                          SoftmaxConfig(cfg["gamma"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "noise_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma_x_pct", "sigma_xdot_pct", "class",
                         "precision", "recall", "f1", "support", "accuracy"])
        for (sx, sxd), rep in zip(levels, reports):
            for c in range(3):
                writer.writerow([
                    sx, sxd, CLASS_NAMES[UavClass(c)],
                    repr(float(rep.precision[c])), repr(float(rep.recall[c])),
                    repr(float(rep.f1[c])), int(rep.support[c]), "",
                ])
            writer.writerow([sx, sxd, "accuracy", "", "", "", int(rep.support.sum()),
                             repr(rep.accuracy)])
    _write_config(out, "sweep-noise", cfg)
    for (sx, sxd), rep in zip(levels, reports):
        print(f"noise ({sx:g}%, {sxd:g}%): accuracy {rep.accuracy:.3f}")
    return EXIT_OK


def _cmd_report(cfg: dict) -> int:
    from .classify import ClassificationResult

    path = Path(cfg["results"])
    results = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            losses = np.array([float(row[f"loss_{c}"]) for c in range(3)])
            conf = np.array([float(row[f"conf_{c}"]) for c in range(3)])
            results.append(ClassificationResult(
                per_class_loss=losses, confidence=conf,
                predicted=int(row["predicted"]), true_label=int(row["true"]),
                tie=bool(int(row["tie"])),
            ))
    if not results:
        raise DataFormatError(f"{path}: no result rows")
    rep = build_report(results)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        _write_report_files(out, rep)
        _write_config(out, "report", cfg)
    print(rep.to_text())
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "classify": _cmd_classify,
    "evaluate": _cmd_evaluate,
    "sweep-noise": _cmd_sweep_noise,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except _UsageError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
