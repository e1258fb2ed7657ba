"""Train/test split composition stratified by pooled skin-type groups.

Splits always train on one extreme group (I-II or V-VI) and test on the
other two groups. Seed images sampled from the opposite extreme are removed
from every test set in every mode, so test Ns are constant across the three
augmentation modes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .errors import (
    InsufficientPool,
    InsufficientSynthetics,
    SeedGroupMismatch,
    SplitError,
)
from .manifest import (
    GROUP_ORDER,
    DatasetManifest,
    FSTGroup,
    ImageRecord,
    retag_provenance,
)
from .rng import derive_seed, seeded_shuffle

if TYPE_CHECKING:
    from .curation import SelectionManifest

MODES = ("fitz_only", "seed", "dalle_and_seed")

#: Doses used in the dose-response experiments; other values are accepted
#: but flagged as off-protocol.
PAPER_DOSES = (0, 2, 8, 16, 32)


@dataclass(frozen=True)
class SplitSpec:
    """Declarative description of one train/test split."""

    train_group: FSTGroup
    conditions: frozenset[str]
    mode: str
    dose: int = 0
    augmented_conditions: frozenset[str] = frozenset()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.train_group is FSTGroup.III_IV:
            raise SplitError("training on the middle group III-IV is not supported")
        if self.mode not in MODES:
            raise SplitError(f"unknown mode {self.mode!r}")
        if self.dose < 0:
            raise SplitError("dose must be >= 0")
        if self.mode == "fitz_only" and (self.dose != 0 or self.augmented_conditions):
            raise SplitError("fitz_only implies dose=0 and no augmented conditions")
        if not self.augmented_conditions <= self.conditions:
            raise SplitError("augmented_conditions must be a subset of conditions")

    @property
    def is_paper_dose(self) -> bool:
        return self.dose in PAPER_DOSES

    def to_json_dict(self) -> dict:
        return {
            "train_group": self.train_group.value,
            "conditions": sorted(self.conditions),
            "mode": self.mode,
            "dose": self.dose,
            "augmented_conditions": sorted(self.augmented_conditions),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "SplitSpec":
        return cls(
            train_group=FSTGroup(doc["train_group"]),
            conditions=frozenset(doc["conditions"]),
            mode=doc["mode"],
            dose=int(doc["dose"]),
            augmented_conditions=frozenset(doc["augmented_conditions"]),
            rng_seed=int(doc["rng_seed"]),
        )


@dataclass(frozen=True)
class SplitPlan:
    """A fully materialized split: training records and per-group test sets."""

    train: tuple[ImageRecord, ...]
    test_by_group: Mapping[FSTGroup, tuple[ImageRecord, ...]]
    spec: SplitSpec
    seed_ids: frozenset[str]

    def train_ids(self) -> list[str]:
        return [rec.image_id for rec in self.train]

    def test_ids(self, group: FSTGroup) -> list[str]:
        return [rec.image_id for rec in self.test_by_group[group]]

    def all_test_ids(self) -> set[str]:
        return {rec.image_id for recs in self.test_by_group.values() for rec in recs}


def sample_seeds(
    manifest: DatasetManifest,
    condition: str,
    extreme: FSTGroup,
    k: int,
    rng_seed: int,
) -> list[ImageRecord]:
    """Sample k real images of (condition, extreme) to serve as seeds.

    Records are sorted by id before the seeded shuffle, so the draw is
    independent of manifest row order. Returned copies are re-tagged
    provenance=seed; the manifest itself is untouched.
    """
    if extreme is FSTGroup.III_IV:
        raise SeedGroupMismatch("seeds are drawn from the extremes, not III-IV")
    manifest.require_conditions([condition])
    pool = [
        rec
        for rec in manifest.records
        if rec.provenance == "real" and rec.condition == condition and rec.group is extreme
    ]
    if len(pool) < k:
        raise InsufficientPool(
            f"need {k} seeds for ({condition}, {extreme.value}) but only "
            f"{len(pool)} available (short by {k - len(pool)})"
        )
    pool.sort(key=lambda rec: rec.image_id)
    shuffled = seeded_shuffle(pool, derive_seed(rng_seed, "seeds", condition, extreme.value))
    return [retag_provenance(rec, "seed") for rec in shuffled[:k]]


def _accepted_for(
    selection: "SelectionManifest | Mapping[str, SelectionManifest] | None",
    condition: str,
) -> frozenset[str] | None:
    """Accepted candidate ids restricting the synthetic pool, or None for
    'anything registered in the manifest' (registration already requires
    acceptance)."""
    if selection is None:
        return None
    if isinstance(selection, Mapping):
        sel = selection.get(condition)
        return sel.accepted_ids() if sel is not None else None
    if selection.condition == condition:
        return selection.accepted_ids()
    return None


def _synthetic_pool(
    manifest: DatasetManifest,
    condition: str,
    group: FSTGroup,
    accepted: frozenset[str] | None,
) -> list[ImageRecord]:
    pool = [
        rec
        for rec in manifest.records
        if rec.provenance == "synthetic"
        and rec.condition == condition
        and rec.group is group
        and (accepted is None or rec.image_id in accepted)
    ]
    # (parent seed id, candidate id) ordering makes the seeded shuffle, and
    # therefore the nested dose subsets, independent of registration order.
    pool.sort(key=lambda rec: (rec.parent_seed_id or "", rec.image_id))
    return pool


def compose_split(
    manifest: DatasetManifest,
    spec: SplitSpec,
    seeds: Mapping[str, Sequence[ImageRecord]] | None = None,
    selection: "SelectionManifest | Mapping[str, SelectionManifest] | None" = None,
) -> SplitPlan:
    """Materialize a SplitPlan from the manifest under a SplitSpec.

    `seeds` maps condition -> seed records sampled from the group opposite
    the training group; they are added to training in seed and
    dalle_and_seed modes and removed from every test set in every mode.
    In dalle_and_seed mode, exactly `spec.dose` accepted synthetic records
    per augmented condition are added, chosen by a seeded shuffle so that
    ascending doses form nested subsets.
    """
    manifest.require_conditions(spec.conditions)
    seeds = dict(seeds or {})
    opposite = spec.train_group.opposite()

    seed_ids: set[str] = set()
    for condition, recs in seeds.items():
        if condition not in spec.conditions:
            raise SplitError(f"seed condition {condition!r} outside the split's conditions")
        for rec in recs:
            if rec.group is not opposite:
                raise SeedGroupMismatch(
                    f"seed {rec.image_id} is {rec.group.value}, expected {opposite.value}"
                )
            seed_ids.add(rec.image_id)

    train: list[ImageRecord] = [
        rec
        for rec in manifest.records
        if rec.provenance == "real"
        and rec.condition in spec.conditions
        and rec.group is spec.train_group
        and rec.image_id not in seed_ids
    ]

    if spec.mode in ("seed", "dalle_and_seed"):
        for condition in sorted(seeds):
            train.extend(seeds[condition])

    if spec.mode == "dalle_and_seed":
        for condition in sorted(spec.augmented_conditions):
            pool = _synthetic_pool(manifest, condition, opposite, _accepted_for(selection, condition))
            if len(pool) < spec.dose:
                raise InsufficientSynthetics(
                    f"({condition}, {opposite.value}): need {spec.dose} accepted "
                    f"synthetics, have {len(pool)}"
                )
            shuffled = seeded_shuffle(
                pool, derive_seed(spec.rng_seed, "dose", condition, opposite.value)
            )
            train.extend(shuffled[: spec.dose])

    test_by_group: dict[FSTGroup, tuple[ImageRecord, ...]] = {}
    for group in GROUP_ORDER:
        if group is spec.train_group:
            continue
        test_by_group[group] = tuple(
            rec
            for rec in manifest.records
            if rec.provenance == "real"
            and rec.condition in spec.conditions
            and rec.group is group
            and rec.image_id not in seed_ids
        )

    train.sort(key=lambda rec: rec.image_id)
    return SplitPlan(
        train=tuple(train),
        test_by_group=test_by_group,
        spec=spec,
        seed_ids=frozenset(seed_ids),
    )


def dose_series(spec: SplitSpec, doses: Iterable[int]) -> list[SplitSpec]:
    """One spec per dose, identical otherwise; the shared rng_seed makes the
    synthetic subsets nested across ascending doses."""
    if spec.mode != "dalle_and_seed":
        raise SplitError("dose_series requires a dalle_and_seed spec")
    return [replace(spec, dose=dose) for dose in doses]


def spillover_plans(base: SplitSpec, augmentable: Iterable[str]) -> list[SplitSpec]:
    """A fitz_only baseline plus one dose-32 spec per augmentable condition.

    Every returned spec trains and tests on `base.conditions`, so the test
    universe is identical across the series and accuracy differences for
    non-augmented conditions are attributable to the added synthetics.
    """
    baseline = replace(base, mode="fitz_only", dose=0, augmented_conditions=frozenset())
    series = [baseline]
    for condition in sorted(augmentable):
        if condition not in base.conditions:
            raise SplitError(f"augmentable condition {condition!r} outside base conditions")
        series.append(
            replace(
                base,
                mode="dalle_and_seed",
                dose=32,
                augmented_conditions=frozenset({condition}),
            )
        )
    return series


# ---- plan serialization (the contract consumed by trainer and evaluator) ----

def plan_to_json_dict(plan: SplitPlan, config_digest: str | None = None) -> dict:
    doc = {
        "spec": plan.spec.to_json_dict(),
        "train_ids": plan.train_ids(),
        "test_ids_by_group": {
            group.value: plan.test_ids(group) for group in GROUP_ORDER if group in plan.test_by_group
        },
        "seed_ids": sorted(plan.seed_ids),
    }
    if config_digest is not None:
        doc["config_digest"] = config_digest
    return doc


def save_plan(plan: SplitPlan, path: str | Path, config_digest: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(plan_to_json_dict(plan, config_digest), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def load_plan(path: str | Path, manifest: DatasetManifest) -> SplitPlan:
    """Rehydrate a plan from `plan.json`, resolving ids against the manifest.

    Seed records regain provenance=seed; everything else is looked up as-is.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = SplitSpec.from_json_dict(doc["spec"])
    seed_ids = frozenset(doc["seed_ids"])
    by_id = manifest.by_id

    def resolve(image_id: str) -> ImageRecord:
        rec = by_id.get(image_id)
        if rec is None:
            raise SplitError(f"plan references unknown image_id {image_id}")
        if image_id in seed_ids and rec.provenance == "real":
            rec = retag_provenance(rec, "seed")
        return rec

    train = tuple(resolve(i) for i in doc["train_ids"])
    test_by_group = {
        FSTGroup(key): tuple(resolve(i) for i in ids)
        for key, ids in doc["test_ids_by_group"].items()
    }
    return SplitPlan(train=train, test_by_group=test_by_group, spec=spec, seed_ids=seed_ids)
