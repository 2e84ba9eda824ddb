"""Command-line entry point: ``scenefit <command> ...``.

Exit codes: 0 success, 2 configuration or input-data error, 3 backend
error, 4 pipeline error (including empty datasets). Every command that
writes files writes only below ``--output-dir`` and leaves a
``provenance.json`` there describing how to reproduce the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib import metadata
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from scenefit import fixtures
from scenefit.compositing import BLEND_MODES, insert_object
from scenefit.config import RunConfig
from scenefit.errors import (
    BackendError,
    ConfigError,
    DatasetError,
    EmptyInput,
    ScenefitError,
    StageError,
)
from scenefit.evaluation.ablation import parse_grid, run_ablation
from scenefit.evaluation.runner import STRATEGIES, CannedPrediction, canned_report, live_report
from scenefit.placement import predict_placement
from scenefit.scene_model import (
    PlacementBox,
    SceneImage,
    dataset_summary,
    load_dataset,
    load_sponsor_registry,
)
from scenefit.sponsor import run_sponsor_pipeline
from scenefit.suggestion import single_stage_suggest, two_stage_suggest

log = logging.getLogger("scenefit")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_PIPELINE = 4


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "unknown"


def file_sha256(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def parse_box(text: str) -> PlacementBox:
    try:
        values = [float(v) for v in text.split(",")]
        return PlacementBox(*values)
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"expected x_min,y_min,x_max,y_max: {exc}") from None


def load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config)
    return config.with_overrides(
        seed=getattr(args, "seed", None),
        blend_mode=getattr(args, "blend_mode", None),
        prompting=getattr(args, "prompting", None),
        box_source=getattr(args, "box_source", None),
    )


def output_dir(args: argparse.Namespace, config: RunConfig | None = None) -> Path:
    out = args.output_dir or (config.output_dir if config else None)
    if out is None:
        raise ConfigError("--output-dir is required (or set output_dir in the config)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def provenance(command: str, config: RunConfig | None, backends=None, **inputs: Any) -> dict[str, Any]:
    record: dict[str, Any] = {"command": command, "version": _version(), "inputs": inputs}
    if config is not None:
        record.update(config.provenance())
    if backends is not None:
        record["backends"] = backends.descriptors()
    return record


def _dump_stages(out: Path, stages: dict[str, SceneImage]) -> list[str]:
    stage_dir = out / "stages"
    stage_dir.mkdir(exist_ok=True)
    names = []
    for name, image in stages.items():
        image.save(stage_dir / f"{name}.png")
        names.append(f"stages/{name}.png")
    return names


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------


def cmd_insert(args: argparse.Namespace) -> int:
    config = load_config(args)
    out = output_dir(args, config)
    backends = config.build_backends()
    taxonomy, templates = config.load_taxonomy(), config.load_templates()
    image = SceneImage.load(args.image)
    if config.box_source == "gt" and args.box is None:
        raise ConfigError("--box is required with --box-source gt")
    gt_box = args.box if config.box_source == "gt" else None
    strategy = two_stage_suggest if config.prompting == "two-stage" else single_stage_suggest
    suggestion = strategy(image, taxonomy, backends.vlm, templates, box=gt_box)
    if gt_box is None:
        try:
            box, confidence = predict_placement(image, suggestion.chosen_category, backends.detector, taxonomy)
        except Exception as exc:
            raise StageError("placement", exc) from exc
    else:
        box, confidence = gt_box, None
    settings = config.eval_settings()
    result = insert_object(
        image, suggestion, box, backends.generator, config.blend_mode, config.seed, settings.generation_size,
        threshold=settings.matte_threshold, feather=settings.feather, eps=settings.solver_eps,
        max_sweeps=settings.solver_max_sweeps, templates=templates,
    )
    result.image.save(out / "composite.png")
    meta = {
        **result.metadata,
        "suggestion": suggestion.to_dict(),
        "box_source": config.box_source,
        "box_confidence": confidence,
        "stages": _dump_stages(out, result.stage_artifacts) if args.dump_stages else [],
    }
    _write_json(out / "metadata.json", meta)
    _write_json(out / "provenance.json", provenance("insert", config, backends, image=file_sha256(args.image),
                                                    box=args.box.to_dict() if args.box else None))
    print(f"{suggestion.chosen_category}: {suggestion.object_phrase} -> {out / 'composite.png'}")
    return EXIT_OK


def cmd_sponsor(args: argparse.Namespace) -> int:
    config = load_config(args)
    out = output_dir(args, config)
    try:
        sponsors = load_sponsor_registry(args.registry)
    except FileNotFoundError as exc:
        raise ConfigError(f"sponsor registry not found: {exc.filename}") from None
    backends = config.build_backends()
    image = SceneImage.load(args.image)
    result = run_sponsor_pipeline(image, sponsors, backends, config.blend_mode, config.sponsor_settings(),
                                  config.load_templates())
    result.image.save(out / "final.png")
    meta = {**result.to_dict(), "stages": _dump_stages(out, result.stage_artifacts) if args.dump_stages else []}
    _write_json(out / "decision.json", meta)
    _write_json(out / "provenance.json", provenance("sponsor", config, backends, image=file_sha256(args.image),
                                                    registry=file_sha256(args.registry)))
    log.info("sponsor decision: present=%s %s", result.decision.present, result.decision.note)
    print(f"present={result.decision.present} sponsor={result.decision.sponsor_id} -> {out / 'final.png'}")
    return EXIT_OK


def _load_predictions(path: Path) -> dict[str, CannedPrediction]:
    preds = {}
    for num, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            box = row.get("box")
            preds[row["image_path"]] = CannedPrediction(
                row["image_path"], row.get("category"), tuple(row.get("objects", ())),
                PlacementBox.from_dict(box) if box else None,
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{num}: bad prediction record: {exc}") from None
    return preds


def _load_grid(path: str):
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read ablation grid {path}: {exc}") from None
    return parse_grid(data)


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args)
    out = output_dir(args, config)
    taxonomy, templates = config.load_taxonomy(), config.load_templates()
    records = load_dataset(args.dataset, "A", taxonomy)
    if not records:
        raise EmptyInput(f"dataset {args.dataset} has no records")
    inputs = {"dataset": file_sha256(args.dataset)}
    if args.predictions:
        inputs["predictions"] = file_sha256(args.predictions)
        report = canned_report(records, _load_predictions(Path(args.predictions)), taxonomy,
                               provenance("evaluate", config, **inputs))
        backends = None
    else:
        backends = config.build_backends()
        sponsor_records, sponsors = [], []
        if args.sponsor_dataset:
            if not args.registry:
                raise ConfigError("--sponsor-dataset needs --registry")
            sponsor_records = load_dataset(args.sponsor_dataset, "B")
            sponsors = load_sponsor_registry(args.registry)
            inputs.update(sponsor_dataset=file_sha256(args.sponsor_dataset), registry=file_sha256(args.registry))
        prov = provenance("evaluate", config, backends, **inputs)
        report = live_report(records, taxonomy, backends, config.eval_settings(args.jobs), prov, templates,
                             sponsor_records, sponsors, config.sponsor_settings())
    if args.ablate:
        backends = backends or config.build_backends()
        report.provenance["inputs"]["ablation_grid"] = file_sha256(args.ablate)
        run_ablation(_load_grid(args.ablate), records, taxonomy, backends, config.build_vlms(),
                     config.eval_settings(args.jobs), report.provenance, templates, report)
    report.write(out)
    _write_json(out / "provenance.json", report.provenance)
    print(report.render_text(), end="")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = load_config(args)
    out = output_dir(args, config)
    taxonomy, templates = config.load_taxonomy(), config.load_templates()
    records = load_dataset(args.dataset, "A", taxonomy)
    if not records:
        raise EmptyInput(f"dataset {args.dataset} has no records")
    backends = config.build_backends()
    prov = provenance("ablate", config, backends, dataset=file_sha256(args.dataset), grid=file_sha256(args.grid))
    report = run_ablation(_load_grid(args.grid), records, taxonomy, backends, config.build_vlms(),
                          config.eval_settings(args.jobs), prov, templates)
    report.tables = {"ablation": report.tables["ablation"]}
    report.write(out)
    _write_json(out / "provenance.json", report.provenance)
    print(report.render_text(), end="")
    return EXIT_OK


def cmd_dataset_summary(args: argparse.Namespace) -> int:
    taxonomy = RunConfig.load(args.config).load_taxonomy() if args.config else None
    records = load_dataset(args.dataset, args.schema, taxonomy)
    summary = dataset_summary(records).to_dict()
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.output_dir:
        out = output_dir(args)
        (out / "summary.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_fixtures(args: argparse.Namespace) -> int:
    paths = fixtures.build_all(output_dir(args))
    print(f"fixtures written to {paths.root}")
    print(f"  config: {paths.config}")
    print(f"  dataset A: {paths.dataset_a}\n  dataset B: {paths.dataset_b}\n  sponsors: {paths.sponsors}")
    return EXIT_OK


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenefit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="run config (YAML)")
        p.add_argument("--output-dir", help="directory for all outputs")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--blend-mode", choices=BLEND_MODES)
        p.add_argument("--prompting", choices=STRATEGIES)
        p.add_argument("--box-source", choices=("gt", "predicted"))

    p = sub.add_parser("insert", help="suggest, place, generate and composite one object")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--box", type=parse_box, help="ground-truth box x_min,y_min,x_max,y_max")
    p.add_argument("--dump-stages", action="store_true", help="write the four stage images")
    p.set_defaults(func=cmd_insert)

    p = sub.add_parser("sponsor", help="detect a sponsor product and blend its logo")
    common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--registry", required=True, help="sponsor registry (JSON Lines)")
    p.add_argument("--dump-stages", action="store_true", help="write the stage images")
    p.set_defaults(func=cmd_sponsor)

    p = sub.add_parser("evaluate", help="run the experiments over a dataset and write a report")
    common(p)
    p.add_argument("--dataset", required=True, help="Dataset A (JSON Lines)")
    p.add_argument("--predictions", help="score stored predictions instead of calling backends")
    p.add_argument("--sponsor-dataset", help="Dataset B (JSON Lines) for the sponsor experiment")
    p.add_argument("--registry", help="sponsor registry for --sponsor-dataset")
    p.add_argument("--ablate", metavar="GRID", help="also run an ablation grid (YAML)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run an ablation grid only")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dataset-summary", help="validate a dataset and print its statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", choices=("A", "B"), required=True)
    p.add_argument("--config", help="config providing the taxonomy")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_dataset_summary)

    p = sub.add_parser("fixtures", help="write the synthetic fixture corpus and a mock config")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_fixtures)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError) and isinstance(exc.cause, BackendError):
        return EXIT_BACKEND
    if isinstance(exc, (ConfigError, DatasetError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, BackendError):
        return EXIT_BACKEND
    return EXIT_PIPELINE


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenefitError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        stage = f" [stage {exc.stage}]" if isinstance(exc, StageError) else ""
        print(f"error{stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
