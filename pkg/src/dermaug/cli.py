"""Pipeline orchestration: each stage reads and writes file artifacts under
one output directory, so a run can pause for human curation and resume.

Exit codes: 1 validation failure, 2 missing stage inputs, 3 backend failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import curation, fixtures, genclient, splitter
from .errors import (
    BackendError,
    DermaugError,
    DigestMismatch,
    MissingInput,
    PipelineError,
)
from .manifest import (
    DatasetManifest,
    FSTGroup,
    filter_conditions,
    load_manifest,
    register_synthetic,
    retag_provenance,
    save_manifest,
)
from .trainer import TrainingConfig

STAGES = (
    "ingest",
    "sample-seeds",
    "generate",
    "curate-serve",
    "curate-auto",
    "compose",
    "dose",
    "spillover",
    "train",
    "evaluate",
    "report",
    "all",
)

EXTREMES = (FSTGroup.I_II, FSTGroup.V_VI)


@dataclass(frozen=True)
class PipelineConfig:
    """All protocol parameters; the defaults reproduce the study protocol."""

    manifest_path: str
    output_dir: str
    conditions: tuple[str, ...] = fixtures.SEVEN_CONDITIONS
    augmented_conditions: tuple[str, ...] = fixtures.AUGMENTED_CONDITIONS
    seed_count: int = 8
    candidate_count: int = 8
    doses: tuple[int, ...] = (2, 8, 16, 32)
    rng_seed: int = 0
    backend: str = "stub"
    backend_endpoint: str = ""
    dose_train_group: str = "I-II"
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self) -> None:
        if self.backend not in ("stub", "remote"):
            raise PipelineError(f"backend must be stub or remote, got {self.backend!r}")
        if not set(self.augmented_conditions) <= set(self.conditions):
            raise PipelineError("augmented_conditions must be a subset of conditions")
        if self.seed_count < 1 or self.candidate_count < 1:
            raise PipelineError("seed_count and candidate_count must be >= 1")
        if self.dose_train_group not in ("I-II", "V-VI"):
            raise PipelineError(
                f"dose_train_group must be I-II or V-VI, got {self.dose_train_group!r}"
            )

    def to_json_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "output_dir": self.output_dir,
            "conditions": list(self.conditions),
            "augmented_conditions": list(self.augmented_conditions),
            "seed_count": self.seed_count,
            "candidate_count": self.candidate_count,
            "doses": list(self.doses),
            "rng_seed": self.rng_seed,
            "backend": self.backend,
            "backend_endpoint": self.backend_endpoint,
            "dose_train_group": self.dose_train_group,
            "training": self.training.to_json_dict(),
        }

    def digest(self) -> str:
        """Protocol digest: covers every parameter that shapes artifacts,
        but not storage locations, so re-runs in fresh directories match."""
        doc = self.to_json_dict()
        doc.pop("manifest_path")
        doc.pop("output_dir")
        payload = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PipelineConfig":
        known = dict(doc)
        training = known.pop("training", None)
        kwargs = {}
        for key in (
            "manifest_path",
            "output_dir",
            "seed_count",
            "candidate_count",
            "rng_seed",
            "backend",
            "backend_endpoint",
            "dose_train_group",
        ):
            if key in known:
                kwargs[key] = known.pop(key)
        for key in ("conditions", "augmented_conditions", "doses"):
            if key in known:
                kwargs[key] = tuple(known.pop(key))
        if known:
            raise PipelineError(f"unknown config keys: {', '.join(sorted(known))}")
        if training is not None:
            kwargs["training"] = TrainingConfig.from_json_dict(
                {**TrainingConfig().to_json_dict(), **training}
            )
        missing = {"manifest_path", "output_dir"} - set(kwargs)
        if missing:
            raise PipelineError(f"config missing required keys: {', '.join(sorted(missing))}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise MissingInput(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            return cls.from_dict(json.loads(text))
        if path.suffix == ".toml":
            try:
                import tomllib as toml
            except ImportError:
                import tomli as toml
            return cls.from_dict(toml.loads(text))
        raise PipelineError(f"config must be .toml or .json, got {path.suffix!r}")


class Paths:
    """Layout of a pipeline output directory."""

    def __init__(self, output_dir: str | Path):
        self.root = Path(output_dir)
        self.run_record = self.root / "run_record.json"
        self.lock = self.root / "run.lock"
        self.manifest_csv = self.root / "manifest" / "manifest.csv"
        self.augmented_csv = self.root / "manifest" / "augmented.csv"
        self.counts_json = self.root / "manifest" / "counts.json"
        self.seeds_json = self.root / "seeds" / "seeds.json"
        self.candidates_dir = self.root / "candidates"
        self.genlog = self.root / "candidates" / "requests.jsonl"
        self.curation_dir = self.root / "curation"
        self.plans_dir = self.root / "plans"
        self.models_dir = self.root / "models"
        self.predictions_dir = self.root / "predictions"
        self.report_dir = self.root / "report"


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _record_stage(paths: Paths, config: PipelineConfig, stage: str, **extra) -> None:
    record = {}
    if paths.run_record.exists():
        record = json.loads(paths.run_record.read_text(encoding="utf-8"))
    record.setdefault("config", config.to_json_dict())
    record["config_digest"] = config.digest()
    stages = record.setdefault("stages", {})
    stages[stage] = {"completed_at": _utcnow(), **extra}
    paths.run_record.parent.mkdir(parents=True, exist_ok=True)
    paths.run_record.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingInput(f"{path} not found — run `{hint}` first")
    return path


def _stage_complete(paths: Paths, config: PipelineConfig, stage: str) -> bool:
    if not paths.run_record.exists():
        return False
    record = json.loads(paths.run_record.read_text(encoding="utf-8"))
    return (
        record.get("config_digest") == config.digest()
        and stage in record.get("stages", {})
    )


def _load_working_manifest(paths: Paths, config: PipelineConfig, augmented: bool = False) -> DatasetManifest:
    path = paths.augmented_csv if augmented else paths.manifest_csv
    hint = "compose" if augmented else "ingest"
    return load_manifest(_require(path, hint))


# ---- stages ----

def stage_ingest(config: PipelineConfig, paths: Paths) -> None:
    source = Path(config.manifest_path)
    if not source.exists():
        raise MissingInput(f"manifest not found: {source}")
    manifest = load_manifest(source)
    manifest = filter_conditions(manifest, config.conditions)
    save_manifest(manifest, paths.manifest_csv)

    counts: dict[str, dict[str, int]] = {}
    for condition in sorted(config.conditions):
        counts[condition] = {
            str(fst): sum(
                1 for rec in manifest.records if rec.condition == condition and rec.fst == fst
            )
            for fst in range(1, 7)
        }
    row_totals = {
        str(fst): sum(counts[c][str(fst)] for c in counts) for fst in range(1, 7)
    }
    column_totals = {c: sum(counts[c].values()) for c in counts}
    doc = {
        "cells": counts,
        "row_totals": row_totals,
        "column_totals": column_totals,
        "grand_total": len(manifest),
        "config_digest": config.digest(),
    }
    paths.counts_json.parent.mkdir(parents=True, exist_ok=True)
    paths.counts_json.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    conditions = sorted(config.conditions)
    print("FST | " + " | ".join(conditions) + " | total")
    for fst in range(1, 7):
        cells = [str(counts[c][str(fst)]) for c in conditions]
        print(f"{fst} | " + " | ".join(cells) + f" | {row_totals[str(fst)]}")
    print("total | " + " | ".join(str(column_totals[c]) for c in conditions) + f" | {len(manifest)}")
    _record_stage(paths, config, "ingest", manifest_digest=_file_digest(source), records=len(manifest))


def stage_sample_seeds(config: PipelineConfig, paths: Paths) -> None:
    manifest = _load_working_manifest(paths, config)
    doc: dict[str, dict[str, list[str]]] = {}
    for condition in config.augmented_conditions:
        doc[condition] = {}
        for extreme in EXTREMES:
            seeds = splitter.sample_seeds(
                manifest, condition, extreme, config.seed_count, config.rng_seed
            )
            doc[condition][extreme.value] = [rec.image_id for rec in seeds]
    payload = {"seeds": doc, "config_digest": config.digest()}
    paths.seeds_json.parent.mkdir(parents=True, exist_ok=True)
    paths.seeds_json.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    total = sum(len(ids) for per in doc.values() for ids in per.values())
    print(f"sampled {total} seeds across {len(doc)} conditions")
    _record_stage(paths, config, "sample-seeds", seeds=total)


def _load_seeds(paths: Paths, manifest: DatasetManifest) -> dict[str, dict[FSTGroup, list]]:
    doc = json.loads(_require(paths.seeds_json, "sample-seeds").read_text(encoding="utf-8"))
    by_id = manifest.by_id
    out: dict[str, dict[FSTGroup, list]] = {}
    for condition, per_group in doc["seeds"].items():
        out[condition] = {}
        for group_value, ids in per_group.items():
            records = []
            for image_id in ids:
                rec = by_id.get(image_id)
                if rec is None:
                    raise MissingInput(f"seed {image_id} not in the working manifest")
                records.append(retag_provenance(rec, "seed"))
            out[condition][FSTGroup(group_value)] = records
    return out


def _make_backend(config: PipelineConfig):
    if config.backend == "stub":
        return genclient.stub_backend(config.rng_seed)
    if not config.backend_endpoint:
        raise PipelineError("backend=remote requires backend_endpoint in the config")
    return genclient.RemoteBackend(config.backend_endpoint)


def stage_generate(config: PipelineConfig, paths: Paths) -> None:
    # a second pass would re-log every request and skew the attempts
    # bookkeeping, so a completed generate stage is never repeated
    if _stage_complete(paths, config, "generate"):
        print("generate already complete for this config; skipping")
        return
    manifest = _load_working_manifest(paths, config)
    seeds = _load_seeds(paths, manifest)
    backend = _make_backend(config)
    store = curation.CurationStore(paths.curation_dir)
    jobs = []
    for condition in sorted(seeds):
        for group in EXTREMES:
            for seed in seeds[condition][group]:
                parts = genclient.parts_for_seed(seed, config.rng_seed)
                request = genclient.build_request(
                    seed, parts, n_candidates=config.candidate_count
                )
                store.register_seed(
                    seed.image_id, condition, group, prompt=request.prompt, uri=seed.uri
                )
                jobs.append(request)
    batches = genclient.generate_batch(
        jobs, backend, output_dir=paths.candidates_dir, log_path=paths.genlog
    )
    produced = 0
    for request, candidates in zip(jobs, batches):
        store.register_request(request)
        store.register_candidates(candidates)
        produced += len(candidates)
    print(f"generated {produced} candidates into {paths.candidates_dir}")
    _record_stage(paths, config, "generate", candidates=produced)


def stage_curate_auto(config: PipelineConfig, paths: Paths) -> None:
    _require(paths.curation_dir / "events.jsonl", "generate")
    store = curation.CurationStore(paths.curation_dir)
    exported = 0
    for condition in config.augmented_conditions:
        for group in EXTREMES:
            manifest = curation.auto_curate(store, condition, group)
            exported += len(manifest.accepted_ids())
    print(f"auto-accepted {exported} candidates and exported selections")
    _record_stage(paths, config, "curate-auto", accepted=exported)


def stage_curate_serve(config: PipelineConfig, paths: Paths, host: str, port: int) -> None:
    _require(paths.curation_dir / "events.jsonl", "generate")
    store = curation.CurationStore(paths.curation_dir)
    static_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    print(f"curation service on http://{host}:{port}")
    curation.serve(store, host=host, port=port, static_dir=static_dir if static_dir.exists() else None)


def _finalized_selections(config: PipelineConfig, paths: Paths) -> list[curation.SelectionManifest]:
    store = curation.CurationStore(_require(paths.curation_dir, "generate"))
    selections = store.finalized_selections()
    needed = {
        (condition, group.value)
        for condition in config.augmented_conditions
        for group in EXTREMES
    }
    have = {(s.condition, s.target_group.value) for s in selections}
    missing = needed - have
    if missing:
        raise MissingInput(
            "curation incomplete; finalize selections for: "
            + ", ".join(f"{c}/{g}" for c, g in sorted(missing))
        )
    return [s for s in selections if (s.condition, s.target_group.value) in needed]


def _registered_manifest(config: PipelineConfig, paths: Paths) -> DatasetManifest:
    manifest = _load_working_manifest(paths, config)
    store = curation.CurationStore(paths.curation_dir)
    for selection in _finalized_selections(config, paths):
        images = curation.accepted_candidates(store, selection)
        manifest = register_synthetic(manifest, images, selection)
    return manifest


def _mode_specs(config: PipelineConfig) -> dict[str, splitter.SplitSpec]:
    specs = {}
    for side in EXTREMES:
        for mode in splitter.MODES:
            spec = splitter.SplitSpec(
                train_group=side,
                conditions=frozenset(config.conditions),
                mode=mode,
                dose=32 if mode == "dalle_and_seed" else 0,
                augmented_conditions=(
                    frozenset(config.augmented_conditions) if mode == "dalle_and_seed" else frozenset()
                ),
                rng_seed=config.rng_seed,
            )
            specs[f"{side.value}-{mode}"] = spec
    return specs


def _compose_and_save(
    manifest: DatasetManifest,
    spec: splitter.SplitSpec,
    seeds: dict[str, dict[FSTGroup, list]],
    path: Path,
    config: PipelineConfig,
) -> None:
    opposite = spec.train_group.opposite()
    seeds_map = {
        condition: per_group[opposite]
        for condition, per_group in seeds.items()
        if condition in spec.conditions and opposite in per_group
    }
    plan = splitter.compose_split(manifest, spec, seeds_map)
    splitter.save_plan(plan, path, config_digest=config.digest())


def stage_compose(config: PipelineConfig, paths: Paths) -> None:
    manifest = _registered_manifest(config, paths)
    save_manifest(manifest, paths.augmented_csv)
    seeds = _load_seeds(paths, manifest)
    out_dir = paths.plans_dir / "modes"
    for name, spec in _mode_specs(config).items():
        _compose_and_save(manifest, spec, seeds, out_dir / f"{name}.json", config)
    print(f"composed {len(_mode_specs(config))} mode plans into {out_dir}")
    _record_stage(paths, config, "compose", plans=len(_mode_specs(config)))


def stage_dose(config: PipelineConfig, paths: Paths) -> None:
    manifest = load_manifest(_require(paths.augmented_csv, "compose"))
    seeds = _load_seeds(paths, manifest)
    side = FSTGroup(config.dose_train_group)
    base = splitter.SplitSpec(
        train_group=side,
        conditions=frozenset(config.conditions),
        mode="dalle_and_seed",
        dose=32,
        augmented_conditions=frozenset(config.augmented_conditions),
        rng_seed=config.rng_seed,
    )
    out_dir = paths.plans_dir / "dose"
    series = splitter.dose_series(base, config.doses)
    for spec in series:
        _compose_and_save(manifest, spec, seeds, out_dir / f"{side.value}-dose-{spec.dose:03d}.json", config)
    print(f"composed {len(series)} dose plans into {out_dir}")
    _record_stage(paths, config, "dose", plans=len(series))


def stage_spillover(config: PipelineConfig, paths: Paths) -> None:
    manifest = load_manifest(_require(paths.augmented_csv, "compose"))
    seeds = _load_seeds(paths, manifest)
    side = FSTGroup(config.dose_train_group)
    base = splitter.SplitSpec(
        train_group=side,
        conditions=frozenset(config.conditions),
        mode="dalle_and_seed",
        dose=32,
        augmented_conditions=frozenset(config.augmented_conditions),
        rng_seed=config.rng_seed,
    )
    out_dir = paths.plans_dir / "spillover"
    specs = splitter.spillover_plans(base, config.augmented_conditions)
    for spec in specs:
        if spec.mode == "fitz_only":
            name = f"{side.value}-baseline"
        else:
            condition = next(iter(spec.augmented_conditions))
            name = f"{side.value}-aug-{condition.replace(' ', '_')}"
        _compose_and_save(manifest, spec, seeds, out_dir / f"{name}.json", config)
    print(f"composed {len(specs)} spillover plans into {out_dir}")
    _record_stage(paths, config, "spillover", plans=len(specs))


def _plan_files(paths: Paths, section: str) -> list[Path]:
    section_dir = paths.plans_dir / section
    if not section_dir.exists():
        return []
    return sorted(section_dir.glob("*.json"))


def _all_plan_files(paths: Paths) -> list[Path]:
    files = [f for section in ("modes", "dose", "spillover") for f in _plan_files(paths, section)]
    if not files:
        raise MissingInput(f"no plans under {paths.plans_dir} — run `compose` first")
    return files


def _check_plan_digest(plan_file: Path, config: PipelineConfig) -> dict:
    doc = json.loads(plan_file.read_text(encoding="utf-8"))
    if doc.get("config_digest") != config.digest():
        raise DigestMismatch(
            f"{plan_file} was produced by config {doc.get('config_digest')!r}, "
            f"current is {config.digest()!r}"
        )
    return doc


def stage_train(config: PipelineConfig, paths: Paths) -> None:
    from . import trainer

    manifest = load_manifest(_require(paths.augmented_csv, "compose"))
    trained = 0
    for plan_file in _all_plan_files(paths):
        _check_plan_digest(plan_file, config)
        digest = _file_digest(plan_file)
        model_dir = paths.models_dir / digest
        if (model_dir / "meta.json").exists():
            continue
        plan = splitter.load_plan(plan_file, manifest)
        training_set = trainer.build_training_set(plan, require_payloads=True)
        trainer.train(
            training_set,
            config.training,
            model_dir,
            log_path=model_dir / "training_log.jsonl",
        )
        (model_dir / "pipeline_digest.txt").write_text(config.digest() + "\n", encoding="utf-8")
        trained += 1
    print(f"trained {trained} new models under {paths.models_dir}")
    _record_stage(paths, config, "train", trained=trained)


def stage_evaluate(config: PipelineConfig, paths: Paths) -> None:
    from . import trainer

    manifest = load_manifest(_require(paths.augmented_csv, "compose"))
    evaluated = 0
    for plan_file in _all_plan_files(paths):
        _check_plan_digest(plan_file, config)
        digest = _file_digest(plan_file)
        prediction_file = paths.predictions_dir / f"{digest}.json"
        if prediction_file.exists():
            continue
        model_dir = paths.models_dir / digest
        artifact = trainer.load_artifact(_require(model_dir, "train"))
        marker = model_dir / "pipeline_digest.txt"
        if marker.exists() and marker.read_text().strip() != config.digest():
            raise DigestMismatch(f"{model_dir} was trained under a different pipeline config")
        plan = splitter.load_plan(plan_file, manifest)
        test_records = [rec for recs in plan.test_by_group.values() for rec in recs]
        labels = trainer.predict(artifact, test_records)
        predictions = {rec.image_id: label for rec, label in zip(test_records, labels)}
        prediction_file.parent.mkdir(parents=True, exist_ok=True)
        prediction_file.write_text(
            json.dumps(
                {"config_digest": config.digest(), "plan_digest": digest, "predictions": predictions},
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        evaluated += 1
    print(f"evaluated {evaluated} new plans into {paths.predictions_dir}")
    _record_stage(paths, config, "evaluate", evaluated=evaluated)


def _load_results(paths: Paths, config: PipelineConfig, section: str, manifest: DatasetManifest):
    results = []
    for plan_file in _plan_files(paths, section):
        _check_plan_digest(plan_file, config)
        digest = _file_digest(plan_file)
        prediction_file = _require(paths.predictions_dir / f"{digest}.json", "evaluate")
        doc = json.loads(prediction_file.read_text(encoding="utf-8"))
        if doc.get("config_digest") != config.digest():
            raise DigestMismatch(f"{prediction_file} carries a different config digest")
        plan = splitter.load_plan(plan_file, manifest)
        results.append((plan, doc["predictions"]))
    return results


def stage_report(config: PipelineConfig, paths: Paths) -> None:
    from . import evaluator

    manifest = load_manifest(_require(paths.augmented_csv, "compose"))
    report = evaluator.build_report(
        _load_results(paths, config, "modes", manifest),
        dose_results=_load_results(paths, config, "dose", manifest),
        spillover_results=_load_results(paths, config, "spillover", manifest),
    )
    written = evaluator.save_report(report, paths.report_dir, config_digest=config.digest())
    print(f"wrote {len(written)} report files under {paths.report_dir}")
    _record_stage(paths, config, "report", files=len(written))


def stage_all(config: PipelineConfig, paths: Paths) -> None:
    stage_ingest(config, paths)
    stage_sample_seeds(config, paths)
    stage_generate(config, paths)
    if config.backend == "stub":
        stage_curate_auto(config, paths)
    else:
        try:
            _finalized_selections(config, paths)
        except MissingInput:
            print(
                "halting at curation: review candidates via `dermaug curate-serve`, "
                "export selections, then re-run `all` to continue"
            )
            return
    stage_compose(config, paths)
    stage_dose(config, paths)
    stage_spillover(config, paths)
    stage_train(config, paths)
    stage_evaluate(config, paths)
    stage_report(config, paths)


# ---- entry point ----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dermaug",
        description="synthetic-augmentation pipeline for dermatology classifiers",
    )
    parser.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="pipeline config (.toml or .json)")
    parser.add_argument("--output-dir", help="override the config's output_dir")
    parser.add_argument("--rng-seed", type=int, help="override the config's rng_seed")
    parser.add_argument("--backend", choices=("stub", "remote"), help="override the backend")
    parser.add_argument("--host", default=curation.DEFAULT_HOST, help="curate-serve bind host")
    parser.add_argument("--port", type=int, default=curation.DEFAULT_PORT, help="curate-serve port")
    return parser


def run(args: argparse.Namespace) -> None:
    config = PipelineConfig.from_file(args.config)
    if args.output_dir:
        config = replace(config, output_dir=args.output_dir)
    if args.rng_seed is not None:
        config = replace(config, rng_seed=args.rng_seed)
    if args.backend:
        config = replace(config, backend=args.backend)
    paths = Paths(config.output_dir)
    paths.root.mkdir(parents=True, exist_ok=True)

    from filelock import FileLock, Timeout

    lock = FileLock(str(paths.lock))
    try:
        lock.acquire(timeout=0.5)
    except Timeout:
        raise PipelineError(f"another pipeline run holds {paths.lock}")
    try:
        if args.stage == "ingest":
            stage_ingest(config, paths)
        elif args.stage == "sample-seeds":
            stage_sample_seeds(config, paths)
        elif args.stage == "generate":
            stage_generate(config, paths)
        elif args.stage == "curate-serve":
            stage_curate_serve(config, paths, args.host, args.port)
        elif args.stage == "curate-auto":
            stage_curate_auto(config, paths)
        elif args.stage == "compose":
            stage_compose(config, paths)
        elif args.stage == "dose":
            stage_dose(config, paths)
        elif args.stage == "spillover":
            stage_spillover(config, paths)
        elif args.stage == "train":
            stage_train(config, paths)
        elif args.stage == "evaluate":
            stage_evaluate(config, paths)
        elif args.stage == "report":
            stage_report(config, paths)
        elif args.stage == "all":
            stage_all(config, paths)
    finally:
        lock.release()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        run(args)
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except DermaugError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
