"""Desk-scale fixture builders.

`build_sample_size_fixture` reproduces the published per-condition, per-FST
sample counts of the seven-condition study subset, so split arithmetic can
be checked against the reported test-set sizes without the real dataset.
`build_smoke_fixture` writes a small procedurally generated image corpus
for end-to-end pipeline runs on a laptop CPU.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .genclient import encode_png, render_stub_image
from .manifest import DatasetManifest, ImageRecord, save_manifest

SEVEN_CONDITIONS = (
    "basal cell carcinoma",
    "folliculitis",
    "nematode infection",
    "neutrophilic dermatoses",
    "prurigo nodularis",
    "psoriasis",
    "squamous cell carcinoma",
)

#: Published sample sizes of the seven-condition subset, by FST 1-6.
PUBLISHED_SAMPLE_SIZES: dict[str, dict[int, int]] = {
    "basal cell carcinoma": {1: 85, 2: 156, 3: 112, 4: 76, 5: 24, 6: 7},
    "folliculitis": {1: 30, 2: 97, 3: 99, 4: 51, 5: 31, 6: 9},
    "nematode infection": {1: 15, 2: 56, 3: 79, 4: 60, 5: 32, 6: 12},
    "neutrophilic dermatoses": {1: 70, 2: 115, 3: 68, 4: 51, 5: 31, 6: 15},
    "prurigo nodularis": {1: 7, 2: 28, 3: 39, 4: 56, 5: 29, 6: 9},
    "psoriasis": {1: 113, 2: 232, 3: 101, 4: 91, 5: 64, 6: 21},
    "squamous cell carcinoma": {1: 100, 2: 180, 3: 122, 4: 71, 5: 40, 6: 23},
}

PUBLISHED_FST_TOTALS = {1: 420, 2: 864, 3: 620, 4: 456, 5: 251, 6: 96}
PUBLISHED_CONDITION_TOTALS = {
    "basal cell carcinoma": 460,
    "folliculitis": 317,
    "nematode infection": 254,
    "neutrophilic dermatoses": 350,
    "prurigo nodularis": 168,
    "psoriasis": 622,
    "squamous cell carcinoma": 536,
}
PUBLISHED_TOTAL = 2707

#: The three conditions whose synthetic augmentation the study reports.
AUGMENTED_CONDITIONS = (
    "neutrophilic dermatoses",
    "psoriasis",
    "squamous cell carcinoma",
)

_FST_TONE = {1: 235, 2: 210, 3: 180, 4: 150, 5: 115, 6: 80}

#: FST histogram for each smoke-fixture condition: enough mass at both
#: extremes to sample 8 seeds per side and still leave test images there.
SMOKE_FST_COUNTS = {1: 6, 2: 6, 3: 2, 4: 2, 5: 6, 6: 6}


def _fixture_id(condition: str, fst: int, index: int) -> str:
    return hashlib.sha256(f"{condition}|{fst}|{index}".encode("utf-8")).hexdigest()[:32]


def build_sample_size_fixture() -> DatasetManifest:
    """In-memory manifest whose (condition, FST) counts match the published
    table exactly. Record uris are placeholders; no files are written."""
    records = []
    for condition in SEVEN_CONDITIONS:
        for fst, count in PUBLISHED_SAMPLE_SIZES[condition].items():
            for index in range(count):
                image_id = _fixture_id(condition, fst, index)
                records.append(
                    ImageRecord(
                        image_id=image_id,
                        uri=f"mem://{image_id}.png",
                        condition=condition,
                        fst=fst,
                    )
                )
    return DatasetManifest(
        records=tuple(records),
        vocabulary=frozenset(SEVEN_CONDITIONS),
        source_note="sample-size fixture",
    )


def write_sample_size_csv(path: str | Path) -> Path:
    return save_manifest(build_sample_size_fixture(), path)


def build_smoke_fixture(
    directory: str | Path,
    conditions: tuple[str, ...] = SEVEN_CONDITIONS,
    fst_counts: dict[int, int] | None = None,
    image_size: int = 64,
    rng_seed: int = 0,
) -> Path:
    """Write a small image corpus plus its manifest CSV; returns the CSV path.

    Images are procedural patches whose base tone tracks the FST value and
    whose lesion motif tracks the condition, so a classifier has real signal
    to learn at smoke scale.
    """
    directory = Path(directory)
    images_dir = directory / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    fst_counts = fst_counts or SMOKE_FST_COUNTS
    records = []
    for condition in conditions:
        for fst, count in sorted(fst_counts.items()):
            for index in range(count):
                image_id = _fixture_id(condition, fst, index)
                noise_seed = int.from_bytes(
                    hashlib.sha256(f"{rng_seed}|{image_id}".encode()).digest()[:8], "big"
                )
                pixels = render_stub_image(_FST_TONE[fst], condition, noise_seed, image_size)
                path = images_dir / f"{image_id}.png"
                path.write_bytes(encode_png(pixels))
                records.append(
                    ImageRecord(
                        image_id=image_id,
                        uri=str(path),
                        condition=condition,
                        fst=fst,
                    )
                )
    manifest = DatasetManifest(
        records=tuple(records),
        vocabulary=frozenset(conditions),
        source_note="smoke fixture",
    )
    return save_manifest(manifest, directory / "manifest.csv")
