"""Dermatology image manifest: ingestion, validation, counting, filtering.

The manifest is the single inventory of images the experiments draw from.
Records are immutable values; every operation returns a new manifest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .errors import (
    DuplicateId,
    InvalidFST,
    MissingColumn,
    UnacceptedCandidate,
    UnknownCondition,
    UnknownSeed,
)

if TYPE_CHECKING:  # avoid an import cycle; used for annotations only
    from .curation import SelectionManifest
    from .genclient import CandidateImage

CSV_COLUMNS = (
    "image_id",
    "uri",
    "condition",
    "fitzpatrick",
    "provenance",
    "parent_seed_id",
    "qc_flags",
)

PROVENANCES = ("real", "seed", "synthetic")

#: qc flag attached to synthetic records whose FST is the group extreme,
#: not an annotated value.
FST_IMPUTED_FLAG = "fst_imputed"


class FSTGroup(Enum):
    """Pooled Fitzpatrick skin-type groups used for splitting and reporting."""

    I_II = "I-II"
    III_IV = "III-IV"
    V_VI = "V-VI"

    @classmethod
    def from_fst(cls, fst: int) -> "FSTGroup":
        if fst in (1, 2):
            return cls.I_II
        if fst in (3, 4):
            return cls.III_IV
        if fst in (5, 6):
            return cls.V_VI
        raise InvalidFST(f"fitzpatrick value {fst} outside 1-6")

    @property
    def fst_values(self) -> tuple[int, int]:
        return {"I-II": (1, 2), "III-IV": (3, 4), "V-VI": (5, 6)}[self.value]

    @property
    def imputed_fst(self) -> int:
        """Extreme value stored for synthetic records of this group."""
        return {"I-II": 1, "III-IV": 3, "V-VI": 6}[self.value]

    def opposite(self) -> "FSTGroup":
        if self is FSTGroup.I_II:
            return FSTGroup.V_VI
        if self is FSTGroup.V_VI:
            return FSTGroup.I_II
        raise ValueError("the middle group III-IV has no opposite extreme")


#: Deterministic ordering for report rows: light to dark.
GROUP_ORDER = (FSTGroup.I_II, FSTGroup.III_IV, FSTGroup.V_VI)


@dataclass(frozen=True)
class ImageRecord:
    """One image with its condition label, skin-type value and provenance."""

    image_id: str
    uri: str
    condition: str
    fst: int
    provenance: str = "real"
    parent_seed_id: str | None = None
    qc_flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.fst not in (1, 2, 3, 4, 5, 6):
            raise InvalidFST(f"fitzpatrick value {self.fst!r} outside 1-6 for {self.image_id}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "synthetic" and not self.parent_seed_id:
            raise ValueError(f"synthetic record {self.image_id} lacks parent_seed_id")

    @property
    def group(self) -> FSTGroup:
        return FSTGroup.from_fst(self.fst)


@dataclass(frozen=True)
class DatasetManifest:
    """Immutable collection of image records plus the declared label vocabulary."""

    records: tuple[ImageRecord, ...]
    vocabulary: frozenset[str]
    source_note: str = ""

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise DuplicateId(f"duplicate image_id {rec.image_id}")
            seen.add(rec.image_id)
            if rec.condition not in self.vocabulary:
                raise UnknownCondition(
                    f"condition {rec.condition!r} of {rec.image_id} not in vocabulary"
                )

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def by_id(self) -> Mapping[str, ImageRecord]:
        return {rec.image_id: rec for rec in self.records}

    def require_conditions(self, conditions: Iterable[str]) -> None:
        unknown = sorted(set(conditions) - self.vocabulary)
        if unknown:
            raise UnknownCondition(f"conditions not in vocabulary: {', '.join(unknown)}")


def load_manifest(path: str | Path, vocabulary: Iterable[str] | None = None) -> DatasetManifest:
    """Load a manifest CSV (schema: `CSV_COLUMNS`, header required).

    When `vocabulary` is given, rows with other condition labels raise
    UnknownCondition; otherwise the vocabulary is the set of labels present.
    Errors carry the 1-based data row number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}")
        if tuple(header) != CSV_COLUMNS:
            raise MissingColumn(
                f"{path}: header {','.join(header)!r} does not match schema "
                f"{','.join(CSV_COLUMNS)!r}"
            )
        declared = frozenset(vocabulary) if vocabulary is not None else None
        records: list[ImageRecord] = []
        seen: set[str] = set()
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(CSV_COLUMNS):
                raise MissingColumn(f"{path} row {row_no}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            image_id, uri, condition, fst_raw, provenance, parent, flags_raw = row
            try:
                fst = int(fst_raw)
            except ValueError:
                raise InvalidFST(f"{path} row {row_no}: unparseable fitzpatrick {fst_raw!r}")
            if fst not in (1, 2, 3, 4, 5, 6):
                raise InvalidFST(f"{path} row {row_no}: fitzpatrick {fst} outside 1-6")
            if image_id in seen:
                raise DuplicateId(f"{path} row {row_no}: duplicate image_id {image_id}")
            seen.add(image_id)
            if declared is not None and condition not in declared:
                raise UnknownCondition(f"{path} row {row_no}: unknown condition {condition!r}")
            records.append(
                ImageRecord(
                    image_id=image_id,
                    uri=uri,
                    condition=condition,
                    fst=fst,
                    provenance=provenance,
                    parent_seed_id=parent or None,
                    qc_flags=frozenset(f for f in flags_raw.split(";") if f),
                )
            )
    vocab = declared if declared is not None else frozenset(r.condition for r in records)
    return DatasetManifest(records=tuple(records), vocabulary=vocab, source_note=str(path))


def save_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    """Write the manifest back out in the documented CSV schema."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in manifest.records:
            writer.writerow(
                [
                    rec.image_id,
                    rec.uri,
                    rec.condition,
                    rec.fst,
                    rec.provenance,
                    rec.parent_seed_id or "",
                    ";".join(sorted(rec.qc_flags)),
                ]
            )
    return path


def load_fitzpatrick17k(
    path: str | Path, vocabulary: Iterable[str] | None = None
) -> DatasetManifest:
    """Shim for the public Fitzpatrick 17k CSV (hash / label / fitzpatrick columns).

    Maps rows into the internal schema with provenance=real. Rows with a
    fitzpatrick value outside 1-6 (the public file uses -1 for unlabeled)
    are dropped; the drop count is noted in `source_note`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        hash_col = next((c for c in ("md5hash", "hash", "image_id") if c in cols), None)
        label_col = next((c for c in ("label", "condition") if c in cols), None)
        fst_col = next((c for c in ("fitzpatrick", "fitzpatrick_scale") if c in cols), None)
        if not (hash_col and label_col and fst_col):
            raise MissingColumn(
                f"{path}: need hash/label/fitzpatrick columns, found {','.join(cols)}"
            )
        records: list[ImageRecord] = []
        dropped = 0
        declared = frozenset(vocabulary) if vocabulary is not None else None
        for row in reader:
            try:
                fst = int(row[fst_col])
            except (TypeError, ValueError):
                dropped += 1
                continue
            if fst not in (1, 2, 3, 4, 5, 6):
                dropped += 1
                continue
            condition = row[label_col].strip()
            if declared is not None and condition not in declared:
                continue
            records.append(
                ImageRecord(
                    image_id=row[hash_col],
                    uri=row.get("url", "") or "",
                    condition=condition,
                    fst=fst,
                    provenance="real",
                )
            )
    vocab = declared if declared is not None else frozenset(r.condition for r in records)
    note = f"{path} (fitzpatrick17k shim, {dropped} rows without a valid FST dropped)"
    return DatasetManifest(records=tuple(records), vocabulary=vocab, source_note=note)


def count_by(
    manifest: DatasetManifest,
    condition: str | None = None,
    group: FSTGroup | None = None,
) -> dict[tuple[str, int], int]:
    """Count records keyed by (condition, fst), optionally filtered.

    `condition` restricts to one label; `group` restricts to a pooled
    skin-type group. Keys always carry the raw FST value so callers can
    re-aggregate either way; values over all keys sum to the filtered total.
    """
    if condition is not None:
        manifest.require_conditions([condition])
    counts: dict[tuple[str, int], int] = {}
    for rec in manifest.records:
        if condition is not None and rec.condition != condition:
            continue
        if group is not None and rec.group is not group:
            continue
        key = (rec.condition, rec.fst)
        counts[key] = counts.get(key, 0) + 1
    return counts


def count_total(
    manifest: DatasetManifest,
    condition: str | None = None,
    group: FSTGroup | None = None,
) -> int:
    return sum(count_by(manifest, condition, group).values())


def filter_conditions(manifest: DatasetManifest, conditions: Iterable[str]) -> DatasetManifest:
    """Restrict to the given condition labels, preserving record order."""
    wanted = frozenset(conditions)
    manifest.require_conditions(wanted)
    kept = tuple(rec for rec in manifest.records if rec.condition in wanted)
    return DatasetManifest(records=kept, vocabulary=manifest.vocabulary, source_note=manifest.source_note)


def register_synthetic(
    manifest: DatasetManifest,
    images: Sequence["CandidateImage"],
    selection: "SelectionManifest",
) -> DatasetManifest:
    """Append accepted synthetic candidates as manifest records.

    Each new record inherits the selection's condition and the extreme FST
    value of its target group, flagged `fst_imputed` because the prompt names
    a skin-tone descriptor, not a Fitzpatrick value.
    """
    owner = {
        cand_id: seed_id
        for seed_id, cand_ids in selection.entries.items()
        for cand_id in cand_ids
    }
    by_id = manifest.by_id
    new_records: list[ImageRecord] = []
    for img in images:
        if owner.get(img.candidate_id) != img.parent_seed_id:
            raise UnacceptedCandidate(
                f"candidate {img.candidate_id} is not accepted for seed "
                f"{img.parent_seed_id} in the selection"
            )
        parent = by_id.get(img.parent_seed_id)
        if parent is None:
            raise UnknownSeed(
                f"candidate {img.candidate_id}: parent seed {img.parent_seed_id} not in manifest"
            )
        new_records.append(
            ImageRecord(
                image_id=img.candidate_id,
                uri=img.payload_uri,
                condition=selection.condition,
                fst=selection.target_group.imputed_fst,
                provenance="synthetic",
                parent_seed_id=img.parent_seed_id,
                qc_flags=frozenset({FST_IMPUTED_FLAG}),
            )
        )
    return DatasetManifest(
        records=manifest.records + tuple(new_records),
        vocabulary=manifest.vocabulary,
        source_note=manifest.source_note,
    )


def retag_provenance(record: ImageRecord, provenance: str) -> ImageRecord:
    return replace(record, provenance=provenance)
