# denots/cli.py
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .__about__ import __version__
from .config import (AttackKind, AttackSpec, ExperimentConfig, FieldKind, SweepAxis, apply_overrides,
                     config_hash, load_config, save_config, substream, worker_count)
from .datagen import attack_all
from .errors import ConfigError, DenotsError, DomainError, StudyAssertionError
from .logs import configure_logging
from .storage import (SPLIT_NAMES, HistoryWriter, load_splits, load_weights, render_svg, save_weights,
                      verify_manifest, write_dataset_csv, write_json, write_manifest, write_study)
from .studies import STUDIES, default_config, run_study, sweep
from .training import evaluate, prepare_splits, run_experiment

logger = logging.getLogger(__name__)

WEIGHTS_NAME = "model.dntw"


# ---------- helpers ----------
def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _fields(text: str) -> list[FieldKind]:
    try:
        return [FieldKind(k) for k in text.replace(" ", "").split(",") if k]
    except ValueError:
        known = ", ".join(k.value for k in FieldKind)
        raise ConfigError(f"unknown field in {text!r}; known: {known}", key="fields") from None


def _load(args: argparse.Namespace, fallback: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif fallback is not None:
        cfg = fallback
    else:
        raise ConfigError("--config is required for this command", key="config")
    return apply_overrides(cfg, {
        "seed": args.seed,
        "out_dir": args.out,
        "scale.D": getattr(args, "scale", None),
        "verify.iterations": getattr(args, "iterations", None),
    })


def run_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir) / f"run-{config_hash(cfg)}"


def _svg(args: argparse.Namespace, path: Path, curves: dict, **labels: Any) -> None:
    if getattr(args, "svg", False) and curves:
        render_svg(path, curves, **labels)
        print(f"chart: {path}")


def write_dataset(cfg: ExperimentConfig) -> Path:
    """CSV splits plus manifest under the run directory; a valid manifest is a no-op."""
    data_dir = run_dir(cfg) / "data"
    manifest = data_dir / "manifest.json"
    if verify_manifest(manifest):
        logger.info("dataset already present at %s", data_dir)
        return manifest
    digest = config_hash(cfg)
    splits = dict(zip(SPLIT_NAMES, prepare_splits(cfg)))
    files = {}
    for name, part in splits.items():
        files[name] = write_dataset_csv(data_dir / f"{name}.csv", part, cfg.task_kind,
                                        {"split": name, "config_hash": digest})
    sizes = {name: len(part) for name, part in splits.items()}
    return write_manifest(manifest, cfg.dataset.model_dump(mode="json"), cfg.dataset_seed, files, sizes, digest)


# ---------- subcommands ----------
def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    manifest = write_dataset(cfg)
    print(f"manifest: {manifest}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load(args)
    out = run_dir(cfg)
    digest = config_hash(cfg)
    splits = load_splits(write_dataset(cfg))
    save_config(cfg, out / "config.json")
    history = HistoryWriter(out / "history.jsonl", digest)
    exp = run_experiment(cfg, sink=history, splits=splits)
    save_weights(out / WEIGHTS_NAME, exp.model, digest)
    metrics = {
        exp.test.metric_name: exp.test.metric,
        "metric": exp.test.metric_name,
        "nfe_mean": exp.test.nfe_mean,
        "gate_mean": exp.test.gate_mean,
        "best_epoch": exp.best_epoch,
        "epochs": len(exp.history),
        "field": cfg.model.field.value,
        "D": cfg.scale.D,
    }
    write_json(out / "metrics.json", metrics, digest)
    print(f"{exp.test.metric_name}: {exp.test.metric:.4f}  mean NFE: {exp.test.nfe_mean:.1f}")
    print(f"run: {out}")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    trained = _load(args)
    overrides = {"attack.kind": args.kind, "attack.seeds": args.seeds,
                 "attack.fractions": _floats(args.fractions) if args.fractions else None}
    cfg = apply_overrides(trained, overrides)
    digest = config_hash(cfg)
    # the run directory belongs to the training config, before attack overrides
    weights = load_weights(Path(args.model) if args.model else run_dir(trained) / WEIGHTS_NAME)
    model = weights.model
    if model.task is not cfg.task_kind:
        raise DomainError(f"model was trained for {model.task.value}, dataset is {cfg.task_kind.value}")
    _, _, test = prepare_splits(cfg)
    if test[0].u != model.raw_input_size:
        raise DomainError(f"model expects {model.raw_input_size} features, dataset has {test[0].u}")

    mean = model.transform.mean if model.transform is not None else None
    std = model.transform.std if model.transform is not None else None
    base_seed = int(substream(cfg.seed, "attack").integers(2**31))
    rows = []
    for fraction in cfg.attack.fractions:
        scores = []
        for k in range(cfg.attack.seeds):
            spec = AttackSpec(kind=cfg.attack.kind, fraction=fraction, seed=base_seed + k)
            scores.append(evaluate(model, attack_all(test, spec, mean=mean, std=std)).metric)
        rows.append({"fraction": fraction, "metric_mean": float(np.mean(scores)),
                     "metric_std": float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0,
                     "seeds": len(scores)})
        print(f"{cfg.attack.kind.value} {fraction:g}: {rows[-1]['metric_mean']:.4f} ± {rows[-1]['metric_std']:.4f}")
    name = f"attack-{cfg.attack.kind.value.lower()}"
    csv_path, _ = write_study(Path(cfg.out_dir), name, digest, rows,
                              {"kind": cfg.attack.kind.value, "model_config_hash": weights.config_hash})
    _svg(args, csv_path.with_suffix(".svg"),
         {cfg.attack.kind.value: ([r["fraction"] for r in rows], [r["metric_mean"] for r in rows])},
         xlabel="fraction", ylabel="test metric", title=name)
    print(f"results: {csv_path}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    if args.study not in STUDIES:
        print(f"unknown study {args.study!r}; available: {', '.join(STUDIES)}", file=sys.stderr)
        return 1
    cfg = _load(args, default_config(args.study))
    digest = config_hash(cfg)
    report = run_study(args.study, cfg, worker_count(args.workers))
    csv_path, json_path = write_study(Path(cfg.out_dir), args.study, digest, report.rows, report.summary)
    if report.chart is not None:
        _svg(args, csv_path.with_suffix(".svg"), report.chart.curves, xlabel=report.chart.xlabel,
             ylabel=report.chart.ylabel, title=args.study, logx=report.chart.logx)
    print(f"{args.study}: {'passed' if report.passed else 'FAILED'}")
    print(f"summary: {json_path}")
    if not report.passed:
        raise StudyAssertionError(f"study {args.study} failed its checks")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    axis = SweepAxis(args.axis)
    grid = _floats(args.grid) if args.grid else list(cfg.verify.scales if axis is SweepAxis.SCALE
                                                     else cfg.verify.tolerances)
    if not grid:
        raise ConfigError("sweep grid is empty", key="grid")
    kinds = _fields(args.fields) if args.fields else [cfg.model.field]
    digest = config_hash(cfg)
    store = run_dir(cfg) / f"sweep-{axis.value}"
    rows, summary = sweep(cfg, axis, grid, kinds, worker_count(args.workers), store)
    name = f"sweep-{axis.value}"
    csv_path, json_path = write_study(Path(cfg.out_dir), name, digest, rows,
                                      {"axis": axis.value, "grid": grid, "correlations": summary})
    curves = {k.value: ([r["nfe"] for r in rows if r["field"] == k.value and r["status"] == "ok"],
                        [r["metric"] for r in rows if r["field"] == k.value and r["status"] == "ok"])
              for k in kinds}
    _svg(args, csv_path.with_suffix(".svg"), curves, xlabel="mean NFE", ylabel="test metric", title=name, logx=True)
    for kind, stats in summary.items():
        print(f"{kind}: pearson={stats['pearson']:.3f} spearman={stats['spearman']:.3f} "
              f"selected={stats['selected_value']} "
              f"({stats['points'] - stats['diverged']}/{stats['points']} points)")
    print(f"summary: {json_path}")
    return 0


# ---------- parser ----------
def _add_common_args(p: argparse.ArgumentParser, *, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    p.add_argument("--out", default=None, help="output directory (overrides out_dir)")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: $DENOTS_WORKERS or 1)")
    p.add_argument("--svg", action="store_true", help="also render an SVG chart (needs matplotlib)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="denots",
        description="Scaled neural CDEs with negative-feedback vector fields",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: $DENOTS_LOG)")

    sp = p.add_subparsers(dest="cmd")

    pg = sp.add_parser("generate", help="write dataset splits and a manifest")
    _add_common_args(pg)
    pg.set_defaults(func=cmd_generate)

    pt = sp.add_parser("train", help="train one model and score it on the test split")
    _add_common_args(pt)
    pt.add_argument("--scale", type=float, default=None, help="time scale D")
    pt.set_defaults(func=cmd_train)

    pa = sp.add_parser("attack", help="metric of a trained model under drop or change attacks")
    _add_common_args(pa)
    pa.add_argument("--model", default=None, help="weights file (default: the run directory's model)")
    pa.add_argument("--kind", choices=[k.value for k in AttackKind], default=None)
    pa.add_argument("--fractions", default=None, help='e.g. "0,0.25,0.5,0.85"')
    pa.add_argument("--seeds", type=int, default=None, help="attack seeds per fraction")
    pa.add_argument("--svg", action="store_true", help="also render an SVG chart (needs matplotlib)")
    pa.set_defaults(func=cmd_attack)

    pv = sp.add_parser("verify", help=f"run a verification study ({', '.join(STUDIES)})")
    pv.add_argument("study", help="study name")
    _add_common_args(pv, config_required=False)
    pv.add_argument("--iterations", type=int, default=None, help="Monte Carlo iterations")
    _add_run_args(pv)
    pv.set_defaults(func=cmd_verify)

    pw = sp.add_parser("sweep", help="train across a scale or tolerance grid and correlate NFE with the metric")
    _add_common_args(pw)
    pw.add_argument("--axis", choices=[a.value for a in SweepAxis], default=SweepAxis.SCALE.value)
    pw.add_argument("--grid", default=None, help='e.g. "1,2,5,10,20"')
    pw.add_argument("--fields", default=None, help='e.g. "AntiNF,NoNF" (default: the config field)')
    _add_run_args(pw)
    pw.set_defaults(func=cmd_sweep)

    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    if not getattr(args, "cmd", None):
        parser.print_help()
        return 0

    try:
        return args.func(args)
    except DenotsError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
