"""Command-line entry point: generate, train, gamma, extract, report (plus a synth helper)."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Any

import numpy as np

from . import automl, dataset, extraction, netparams
from .config import ConfigError, RunConfig, load_config
from .dataset import TARGETS, Dataset
from .features import FeaturePipeline
from .fixture import MEASURED
from .models import load_model, save_model
from .physics import MaterialParams, band_grid
from .seeding import derive_seed

log = logging.getLogger("cpw_automl")

EXIT_OK, EXIT_ERROR, EXIT_FAILED_CHECK = 0, 2, 3


class StageError(RuntimeError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash, "run_id": cfg.run_id, "seed": cfg.seed}


def _update_manifest(cfg: RunConfig, run_dir: Path, stage: str, entry: dict) -> None:
    path = run_dir / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.is_file() else {}
    if manifest.get("config_hash") not in (None, cfg.config_hash):
        manifest = {}
    manifest.update(_provenance(cfg))
    manifest.setdefault("stages", {})[stage] = entry
    _write_json(path, manifest)


def _prepare_run_dir(cfg: RunConfig) -> Path:
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_json(run_dir / "config.json", {**_provenance(cfg), "config": json.loads(cfg.canonical_json())})
    return run_dir


# --- stages --------------------------------------------------------------------


def cmd_generate(cfg: RunConfig, dry_run: bool = False) -> int:
    sweep = cfg.sweep_config()
    aug = cfg.augmentation
    if dry_run:
        n_aug = sweep.size * aug.multiplier
        print(f"combinations={sweep.n_combinations} frequencies={sweep.freq_points} "
              f"grid_rows={sweep.size} augmented_rows={n_aug} total_rows={sweep.size + n_aug}")
        return EXIT_OK
    grid = dataset.clean(dataset.generate(sweep))
    full = dataset.augment(grid, aug.noise_rel, aug.multiplier, derive_seed(cfg.seed, "augment"))
    run_dir = _prepare_run_dir(cfg)
    csv_path = run_dir / "dataset.csv"
    full.to_csv(csv_path)
    counts = {
        "grid_rows": int(np.sum(full.provenance == dataset.GRID)),
        "augmented_rows": int(np.sum(full.provenance == dataset.AUGMENTED)),
        "total_rows": len(full),
    }
    _update_manifest(cfg, run_dir, "generate", {**counts, "dataset_sha256": _sha256(csv_path)})
    print(f"wrote {csv_path} ({counts['total_rows']} rows, {counts['grid_rows']} grid)")
    if sweep.declared_size is not None and counts["grid_rows"] != sweep.declared_size:
        log.error("cleaning left %d grid rows, expected %d", counts["grid_rows"], sweep.declared_size)
        return EXIT_FAILED_CHECK
    return EXIT_OK


def cmd_train(cfg: RunConfig, dataset_path: Path | None = None, workers: int = 1, dry_run: bool = False) -> int:
    run_dir = cfg.run_dir()
    path = Path(dataset_path) if dataset_path else run_dir / "dataset.csv"
    if not path.is_file():
        raise StageError(f"dataset not found: {path} (run `generate` first or pass --dataset)")
    space = cfg.search_space()
    if dry_run:
        per_target = len(automl.sample_trials(space, TARGETS[0]))
        print(f"families={len(space.families)} trials_per_target={per_target} targets={len(TARGETS)}")
        return EXIT_OK
    ds = Dataset.from_csv(path)
    part = dataset.partition(ds, cfg.partition, derive_seed(cfg.seed, "partition"))
    pipeline = FeaturePipeline().fit(ds.inputs[part.train])
    boards = automl.search(space, ds, part, pipeline, workers=workers)
    run_dir = _prepare_run_dir(cfg)
    models_dir = run_dir / "models"
    models_dir.mkdir(exist_ok=True)
    pipeline.save(models_dir / "pipeline.json")
    selected = {}
    for target, board in boards.items():
        save_model(board.selected.model, models_dir / f"{target}.json")
        selected[target] = {"trial_id": board.selected_id, "family": board.selected.trial.family}
    md, _ = automl.report(boards)
    _write_text(run_dir / "report.md", md)
    _write_text(run_dir / "leaderboard.json", automl.leaderboard_json(boards, _provenance(cfg)) + "\n")
    _write_text(run_dir / "trials.jsonl", "\n".join(automl.trial_log_lines(boards)) + "\n")
    _update_manifest(cfg, run_dir, "train", {
        "dataset_sha256": _sha256(path),
        "partition": {"scheme": part.scheme.value, "groups": list(part.group_counts),
                      "rows": [int(part.train.size), int(part.validation.size), int(part.test.size)]},
        "features": pipeline.output_names,
        "selected": selected,
        "leaderboard_sha256": _sha256(run_dir / "leaderboard.json"),
    })
    print(md)
    return EXIT_OK


def cmd_gamma(cfg: RunConfig, lines: list[tuple[str, float]], output: Path | None = None) -> int:
    if len(lines) < 2:
        raise StageError("multiline extraction needs at least two --line PATH LENGTH_M entries")
    loaded = []
    for p, length in lines:
        try:
            loaded.append((Path(p), float(length), netparams.read_touchstone(p)))
        except OSError as exc:
            raise StageError(f"cannot read {p}: {exc}") from None
    ref_path, _, ref = loaded[0]
    ref_f = np.array([r.frequency for r in ref])
    for p, _, recs in loaded[1:]:
        f = np.array([r.frequency for r in recs])
        if f.shape != ref_f.shape or not np.allclose(f, ref_f, rtol=1e-12, atol=0.0):
            raise StageError(f"frequency grid of {p} differs from {ref_path}")
    trace = netparams.multiline_gamma([(length, recs) for _, length, recs in loaded])
    if output is None:
        output = _prepare_run_dir(cfg) / "gamma.csv"
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    netparams.gamma_to_csv(trace, output)
    if output.parent == cfg.run_dir():
        _update_manifest(cfg, output.parent, "gamma", {
            "lines": [{"file": p.name, "length_m": length, "sha256": _sha256(p)} for p, length, _ in loaded],
            "gamma_sha256": _sha256(output),
        })
    print(f"wrote {output} ({len(trace)} frequencies from {len(loaded)} lines)")
    return EXIT_OK


def load_models(models_dir: Path) -> tuple[FeaturePipeline, dict]:
    pipe_path = models_dir / "pipeline.json"
    if not pipe_path.is_file():
        raise StageError(f"missing model artifact: {pipe_path}")
    models = {}
    for t in TARGETS:
        p = models_dir / f"{t}.json"
        if not p.is_file():
            raise StageError(f"missing model artifact: {p}")
        models[t] = load_model(p)
    return FeaturePipeline.load(pipe_path), models


def cmd_extract(cfg: RunConfig, gamma_path: Path | None = None, models_dir: Path | None = None,
                reference: MaterialParams | None = None) -> int:
    run_dir = cfg.run_dir()
    models_dir = Path(models_dir) if models_dir else run_dir / "models"
    gamma_path = Path(gamma_path) if gamma_path else run_dir / "gamma.csv"
    if not gamma_path.is_file():
        raise StageError(f"gamma trace not found: {gamma_path}")
    pipeline, models = load_models(models_dir)
    trace = netparams.gamma_from_csv(gamma_path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", extraction.OutOfBandWarning)
        est = extraction.extract(trace, pipeline, models)
    for w in est.warnings:
        log.warning(w)
    report = extraction.verify(est, cfg.geometry_obj(), trace, cfg.extraction.threshold_np_m)
    run_dir = _prepare_run_dir(cfg)
    prov = _provenance(cfg)
    _write_json(run_dir / "estimate.json", {**prov, **est.to_dict()})
    _write_json(run_dir / "verification.json", {**prov, **report.to_dict()})
    _write_text(run_dir / "traces.csv", extraction.trace_csv(est))
    _write_text(run_dir / "residuals.csv", extraction.residual_csv(report))
    entry = {
        "gamma_sha256": _sha256(gamma_path),
        "estimate_sha256": _sha256(run_dir / "estimate.json"),
        "verification_passed": report.passed,
        "max_residual_np_m": report.max_residual,
    }
    for t in TARGETS:
        print(f"{t:10s} {est.aggregates[t]:.6g}  (IQR {est.dispersion[t]:.3g})")
    if reference is not None:
        table = extraction.compare_table(est, reference)
        _write_json(run_dir / "comparison.json", {**prov, **table})
        _write_text(run_dir / "comparison.md", extraction.compare_markdown(table) + "\n")
        print(extraction.compare_markdown(table))
        entry["comparison"] = True
    _update_manifest(cfg, run_dir, "extract", entry)
    status = "PASS" if report.passed else "FAIL"
    print(f"verification {status}: max |dalpha| = {report.max_residual:.4g} Np/m (threshold {report.threshold:g})")
    return EXIT_OK if report.passed else EXIT_FAILED_CHECK


def cmd_report(cfg: RunConfig, run_dir: Path | None = None) -> int:
    run_dir = Path(run_dir) if run_dir else cfg.run_dir()
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise StageError(f"no manifest in {run_dir}; run `generate`, `train` or `extract` first")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    out = ["# Run summary", "", f"- run id: `{manifest.get('run_id')}`",
           f"- config hash: `{manifest.get('config_hash')}`", f"- seed: {manifest.get('seed')}", ""]
    stages = manifest.get("stages", {})
    gen = stages.get("generate")
    if gen:
        out += ["## Dataset", "", f"- grid rows: {gen['grid_rows']}", f"- augmented rows: {gen['augmented_rows']}",
                f"- total rows: {gen['total_rows']}", ""]
    if (run_dir / "report.md").is_file():
        out += [(run_dir / "report.md").read_text(encoding="utf-8").rstrip(), ""]
    est_path = run_dir / "estimate.json"
    if est_path.is_file():
        est = json.loads(est_path.read_text(encoding="utf-8"))
        out += ["## Extracted parameters", "", "| Parameter | Aggregate | IQR |", "|---|---:|---:|"]
        out += [f"| {t} | {est['aggregates'][t]:.4g} | {est['iqr'][t]:.3g} |" for t in TARGETS]
        out.append("")
    ver_path = run_dir / "verification.json"
    if ver_path.is_file():
        ver = json.loads(ver_path.read_text(encoding="utf-8"))
        verdict = "pass" if ver["passed"] else "fail"
        out += ["## Verification", "",
                f"max |Δα| = {ver['max_residual_np_m']:.4g} Np/m, threshold {ver['threshold_np_m']:g} Np/m: {verdict}", ""]
    if (run_dir / "comparison.md").is_file():
        out += ["## Reference comparison", "", (run_dir / "comparison.md").read_text(encoding="utf-8").rstrip(), ""]
    text = "\n".join(out)
    _write_text(run_dir / "summary.md", text)
    print(text)
    return EXIT_OK


def cmd_synth(cfg: RunConfig, out_dir: Path, params: MaterialParams, points: int, noise: float) -> int:
    """Write synthetic line files for every fixture length (a stand-in for measurements)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = extraction.synthesize_lines(cfg.geometry_obj(), params, band_grid(points), noise,
                                        derive_seed(cfg.seed, "synth"))
    args = []
    for i, (length, recs) in enumerate(lines):
        p = out_dir / f"line{i + 1}.s2p"
        netparams.write_touchstone(p, recs, comment=f"synthetic line, length {length!r} m")
        args.append(f"--line {p} {length!r}")
    print(" ".join(args))
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------------


def _material(values: list[float] | None) -> MaterialParams:
    return MEASURED if values is None else MaterialParams(*values)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--workers", type=int, default=1, help="maximum concurrent trials")
    common.add_argument("--output-dir", help="artifact root (overrides the config)")
    common.add_argument("--dry-run", action="store_true", help="validate and print counts without writing")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")

    parser = argparse.ArgumentParser(prog="cpw-automl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="synthesize the training dataset")
    p = sub.add_parser("train", parents=[common], help="run the model search and save selected models")
    p.add_argument("--dataset", type=Path, help="dataset CSV (default: <run dir>/dataset.csv)")
    p = sub.add_parser("gamma", parents=[common], help="multiline propagation-constant extraction")
    p.add_argument("--line", nargs=2, action="append", metavar=("PATH", "LENGTH_M"), default=[],
                   help="Touchstone file and physical length in metres; repeat per line")
    p.add_argument("--output", type=Path, help="gamma CSV path (default: <run dir>/gamma.csv)")
    p = sub.add_parser("extract", parents=[common], help="estimate material parameters and verify")
    p.add_argument("--gamma", type=Path, help="gamma CSV (default: <run dir>/gamma.csv)")
    p.add_argument("--models", type=Path, help="model directory (default: <run dir>/models)")
    p.add_argument("--reference", action="store_true", help="compare against the fixture's reference values")
    p.add_argument("--reference-values", nargs=4, type=float, metavar=("SIGMA", "EPS_FS", "EPS_DS", "TAN_D"),
                   help="explicit reference values for the comparison table")
    p = sub.add_parser("report", parents=[common], help="collate run artifacts into summary.md")
    p.add_argument("--run-dir", type=Path, help="run directory (default: from the config hash)")
    p = sub.add_parser("synth", parents=[common], help="write synthetic .s2p line files")
    p.add_argument("--out", type=Path, required=True, help="directory for line1..6.s2p")
    p.add_argument("--params", nargs=4, type=float, metavar=("SIGMA", "EPS_FS", "EPS_DS", "TAN_D"),
                   help="material to synthesize (default: the measured fixture values)")
    p.add_argument("--points", type=int, default=200, help="frequency points across the band")
    p.add_argument("--noise", type=float, default=0.0, help="complex Gaussian noise std on each S entry")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config, seed=args.seed, output_dir=args.output_dir)
        if args.command == "generate":
            return cmd_generate(cfg, args.dry_run)
        if args.command == "train":
            return cmd_train(cfg, args.dataset, args.workers, args.dry_run)
        if args.dry_run:
            print(f"config ok: run id {cfg.run_id}")
            return EXIT_OK
        if args.command == "gamma":
            return cmd_gamma(cfg, [(p, float(l)) for p, l in args.line], args.output)
        if args.command == "extract":
            ref = None
            if args.reference_values is not None:
                ref = MaterialParams(*args.reference_values)
            elif args.reference:
                ref = MEASURED
            return cmd_extract(cfg, args.gamma, args.models, ref)
        if args.command == "report":
            return cmd_report(cfg, args.run_dir)
        if args.command == "synth":
            return cmd_synth(cfg, args.out, _material(args.params), args.points, args.noise)
    except (ConfigError, StageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
