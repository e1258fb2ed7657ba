"""Acceptance suite: one test per release criterion, each printing a
PASS line when it holds (run with `pytest tests/test_acceptance.py -v -s`).

Absolute accuracy values of the published result tables are out of reach at
desk scale (they need GPU fine-tuning, a remote generation backend, and
human curation); the determinism, arithmetic, and report-shape checks here
are the substitute contract.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import pytest

from dermaug import cli, fixtures
from dermaug.curation import CurationStore, create_app
from dermaug.evaluator import wald_ci
from dermaug.manifest import FSTGroup
from dermaug.splitter import SplitSpec, compose_split, dose_series, sample_seeds


def _criterion(name: str) -> None:
    print(f"[PASS] {name}")


# ---- criterion: sample-size table reproduction ----

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
PUBLISHED_CELLS = {
    "basal cell carcinoma": (85, 156, 112, 76, 24, 7),
    "folliculitis": (30, 97, 99, 51, 31, 9),
    "nematode infection": (15, 56, 79, 60, 32, 12),
    "neutrophilic dermatoses": (70, 115, 68, 51, 31, 15),
    "prurigo nodularis": (7, 28, 39, 56, 29, 9),
    "psoriasis": (113, 232, 101, 91, 64, 21),
    "squamous cell carcinoma": (100, 180, 122, 71, 40, 23),
}


def test_criterion_sample_size_table(tmp_path):
    csv_path = fixtures.write_sample_size_csv(tmp_path / "counts.csv")
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps({"manifest_path": str(csv_path), "output_dir": str(tmp_path / "out")})
    )
    start = time.monotonic()
    assert cli.main(["ingest", "--config", str(config_path)]) == 0
    elapsed = time.monotonic() - start

    counts = json.loads((tmp_path / "out" / "manifest" / "counts.json").read_text())
    for condition, expected in PUBLISHED_CELLS.items():
        for fst, value in zip(range(1, 7), expected):
            assert counts["cells"][condition][str(fst)] == value, (condition, fst)
    assert counts["row_totals"] == {str(k): v for k, v in PUBLISHED_FST_TOTALS.items()}
    assert counts["column_totals"] == PUBLISHED_CONDITION_TOTALS
    assert counts["grand_total"] == 2707
    assert elapsed < 5.0, f"ingest took {elapsed:.2f}s"
    _criterion(f"Sample-size table: 42 cells + margins + total 2707 in {elapsed:.2f}s")


# ---- criterion: CI reproduction ----

# Every populated (accuracy, N, printed CI) triple in the published
# mode-comparison table: 12 per condition block, 36 in all.
PUBLISHED_CI_TRIPLES = [
    # neutrophilic dermatoses
    (0.175, 177, 0.12, 0.23), (0.310, 177, 0.24, 0.38), (0.610, 177, 0.54, 0.68),
    (0.311, 119, 0.23, 0.39), (0.395, 119, 0.31, 0.48), (0.411, 119, 0.32, 0.50),
    (0.311, 119, 0.23, 0.39), (0.378, 119, 0.29, 0.47), (0.571, 119, 0.48, 0.66),
    (0.243, 37, 0.10, 0.38), (0.594, 37, 0.44, 0.75), (0.675, 37, 0.52, 0.83),
    # psoriasis
    (0.249, 337, 0.20, 0.29), (0.359, 337, 0.31, 0.41), (0.504, 337, 0.45, 0.55),
    (0.495, 192, 0.42, 0.57), (0.557, 192, 0.48, 0.63), (0.573, 192, 0.50, 0.64),
    (0.255, 192, 0.19, 0.31), (0.370, 192, 0.30, 0.44), (0.463, 192, 0.39, 0.53),
    (0.753, 77, 0.66, 0.85), (0.857, 77, 0.78, 0.94), (0.857, 77, 0.78, 0.94),
    # squamous cell carcinoma
    (0.272, 272, 0.22, 0.32), (0.349, 272, 0.29, 0.41), (0.577, 272, 0.52, 0.64),
    (0.492, 193, 0.42, 0.56), (0.487, 193, 0.42, 0.56), (0.461, 193, 0.39, 0.53),
    (0.389, 193, 0.32, 0.46), (0.430, 193, 0.36, 0.50), (0.461, 193, 0.39, 0.53),
    (0.545, 55, 0.41, 0.68), (0.618, 55, 0.49, 0.75), (0.691, 55, 0.57, 0.81),
]


def test_criterion_ci_reproduction():
    start = time.monotonic()
    for accuracy, n, low, high in PUBLISHED_CI_TRIPLES:
        got_low, got_high = wald_ci(accuracy, n)
        assert abs(got_low - low) <= 0.01, (accuracy, n, got_low, low)
        assert abs(got_high - high) <= 0.01, (accuracy, n, got_high, high)
    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    _criterion(
        f"CI reproduction: {len(PUBLISHED_CI_TRIPLES)} published triples within ±0.01 in {elapsed:.3f}s"
    )


# ---- criterion: split-N reproduction ----

def _composed_n(manifest, condition, train_group, test_group, rng_seed=7):
    seeds = {
        condition: sample_seeds(manifest, condition, train_group.opposite(), 8, rng_seed)
    }
    spec = SplitSpec(
        train_group=train_group,
        conditions=frozenset(fixtures.SEVEN_CONDITIONS),
        mode="fitz_only",
        rng_seed=rng_seed,
    )
    plan = compose_split(manifest, spec, seeds)
    return sum(1 for rec in plan.test_by_group[test_group] if rec.condition == condition)


def test_criterion_split_n_reproduction(published_manifest):
    m = published_manifest
    assert _composed_n(m, "psoriasis", FSTGroup.V_VI, FSTGroup.I_II) == 337
    assert _composed_n(m, "psoriasis", FSTGroup.V_VI, FSTGroup.III_IV) == 192
    assert _composed_n(m, "psoriasis", FSTGroup.I_II, FSTGroup.V_VI) == 77
    assert _composed_n(m, "squamous cell carcinoma", FSTGroup.V_VI, FSTGroup.I_II) == 272
    assert _composed_n(m, "squamous cell carcinoma", FSTGroup.V_VI, FSTGroup.III_IV) == 193
    assert _composed_n(m, "squamous cell carcinoma", FSTGroup.I_II, FSTGroup.V_VI) == 55
    assert _composed_n(m, "neutrophilic dermatoses", FSTGroup.V_VI, FSTGroup.I_II) == 177
    assert _composed_n(m, "neutrophilic dermatoses", FSTGroup.V_VI, FSTGroup.III_IV) == 119
    # Documented discrepancy: the published table prints N=37 for the
    # neutrophilic V-VI test set, but the per-type sample sizes give
    # 31 + 15 - 8 = 38. The arithmetic wins here.
    assert _composed_n(m, "neutrophilic dermatoses", FSTGroup.I_II, FSTGroup.V_VI) == 38
    _criterion(
        "Split-N reproduction: 337/192/77, 272/193/55, 177/119 + documented 38-vs-37 delta"
    )


# ---- criterion: protocol arithmetic ----

def test_criterion_protocol_arithmetic(published_manifest, smoke_manifest):
    condition = "psoriasis"
    seeds = {condition: sample_seeds(published_manifest, condition, FSTGroup.V_VI, 8, 7)}
    conditions = frozenset(fixtures.SEVEN_CONDITIONS)

    fitz_no_seeds = compose_split(
        published_manifest,
        SplitSpec(train_group=FSTGroup.I_II, conditions=conditions, mode="fitz_only", rng_seed=7),
    )
    fitz = compose_split(
        published_manifest,
        SplitSpec(train_group=FSTGroup.I_II, conditions=conditions, mode="fitz_only", rng_seed=7),
        seeds,
    )
    seeded = compose_split(
        published_manifest,
        SplitSpec(train_group=FSTGroup.I_II, conditions=conditions, mode="seed", rng_seed=7),
        seeds,
    )
    assert len(seeded.train) == len(fitz.train) + 8
    removed = len(fitz_no_seeds.test_by_group[FSTGroup.V_VI]) - len(fitz.test_by_group[FSTGroup.V_VI])
    assert removed == 8

    # nested doses, exact sizes, on a manifest with registered synthetics
    from helpers import synthetics_for

    manifest, smoke_seeds, selection = synthetics_for(smoke_manifest, condition, FSTGroup.V_VI, rng_seed=3)
    base = SplitSpec(
        train_group=FSTGroup.I_II,
        conditions=manifest.vocabulary,
        mode="dalle_and_seed",
        dose=32,
        augmented_conditions=frozenset({condition}),
        rng_seed=3,
    )
    ids_by_dose = {}
    for spec in dose_series(base, [2, 8, 16, 32]):
        plan = compose_split(manifest, spec, smoke_seeds, selection)
        synthetic = {rec.image_id for rec in plan.train if rec.provenance == "synthetic"}
        assert len(synthetic) == spec.dose
        ids_by_dose[spec.dose] = synthetic
    assert ids_by_dose[2] <= ids_by_dose[8] <= ids_by_dose[16] <= ids_by_dose[32]
    _criterion("Protocol arithmetic: seed mode ±8; doses 2/8/16/32 exact and nested")


# ---- criterion: sampler property ----

def test_criterion_sampler_property():
    import torch
    from scipy import stats

    from dermaug.manifest import ImageRecord
    from dermaug.trainer import sample_weights

    records = [
        ImageRecord(image_id=f"a{i}", uri="mem://x", condition="a", fst=1) for i in range(100)
    ] + [ImageRecord(image_id=f"b{i}", uri="mem://x", condition="b", fst=1) for i in range(50)]
    weights = torch.tensor(sample_weights(records), dtype=torch.double)
    generator = torch.Generator().manual_seed(20230647)
    draws = torch.multinomial(weights, 10_000, replacement=True, generator=generator)
    n_a = int((draws < 100).sum())
    freq_a = n_a / 10_000
    assert abs(freq_a - 0.5) < 0.03
    pvalue = stats.chisquare([n_a, 10_000 - n_a], [5_000, 5_000]).pvalue
    assert pvalue > 0.01
    _criterion(f"Sampler property: class freq {freq_a:.3f} within 0.5±0.03, chi-square p={pvalue:.3f}")


# ---- criterion: stub-backend determinism over the full pipeline ----

SMOKE_TRAINING = {
    "backbone": "tiny",
    "pretrained": False,
    "freeze_features": False,
    "epochs": 2,
    "batch_size": 16,
    "learning_rate": 5e-3,
    "optimizer": "adam",
    "rng_seed": 3,
    "input_size": 32,
}


def _run_all(csv_path: Path, out_dir: Path) -> float:
    config_path = out_dir.parent / f"{out_dir.name}.config.json"
    config_path.write_text(
        json.dumps(
            {
                "manifest_path": str(csv_path),
                "output_dir": str(out_dir),
                "rng_seed": 11,
                "backend": "stub",
                "training": SMOKE_TRAINING,
            }
        )
    )
    start = time.monotonic()
    assert cli.main(["all", "--config", str(config_path)]) == 0
    return time.monotonic() - start


def _tree_digest(root: Path, pattern: str) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob(pattern)):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def double_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("determinism")
    csv_path = fixtures.build_smoke_fixture(tmp / "fixture", rng_seed=5)
    t1 = _run_all(csv_path, tmp / "run1")
    t2 = _run_all(csv_path, tmp / "run2")
    return tmp, t1 + t2


def test_criterion_determinism_stub_runs(double_run):
    tmp, elapsed = double_run
    run1, run2 = tmp / "run1", tmp / "run2"
    for label, pattern in (
        ("plans", "plans/**/*.json"),
        ("selections", "curation/selection.*.json"),
        ("report.json", "report/report.json"),
    ):
        assert _tree_digest(run1, pattern) == _tree_digest(run2, pattern), label

    # auto-curation accepted the first four candidates (generation order)
    store = CurationStore(run1 / "curation")
    for selection in store.finalized_selections():
        for seed_id, candidate_ids in selection.entries.items():
            indexes = sorted(store.candidate(cid).candidate.index for cid in candidate_ids)
            assert indexes == [0, 1, 2, 3], seed_id

    assert elapsed < 600, f"two runs took {elapsed:.0f}s"
    _criterion(
        f"Determinism: two `all --backend stub` runs byte-identical in {elapsed:.0f}s total"
    )


def test_criterion_report_shape_substitutes(double_run):
    """The published absolute accuracies are explicitly NOT reproduced at
    desk scale; the substitute is the report-shape contract."""
    tmp, _ = double_run
    report = json.loads((tmp / "run1" / "report" / "report.json").read_text())

    conditions = {c["condition"] for c in report["cells"]}
    assert conditions == set(fixtures.SEVEN_CONDITIONS)
    for condition in conditions:
        for side in ("I-II", "V-VI"):
            side_cells = [
                c
                for c in report["cells"]
                if c["condition"] == condition and c["train_group"] == side
            ]
            # 3 modes x 2 test groups per training side
            assert len(side_cells) == 6, (condition, side)
            assert {c["mode"] for c in side_cells} == {"fitz_only", "seed", "dalle_and_seed"}

    dose_keys = {(r["condition"], r["test_group"]) for r in report["dose_rows"]}
    assert len(dose_keys) == 6  # dose table: one row per (condition, group)
    doses = {r["dose"] for r in report["dose_rows"]}
    assert doses == {2, 8, 16, 32}  # 4 dose columns
    assert len(report["dose_rows"]) == 24

    blocks = {r["augmented"] for r in report["spillover"]}
    assert blocks == {None, *fixtures.AUGMENTED_CONDITIONS}  # 4 blocks
    for block in blocks:
        rows = [r for r in report["spillover"] if r["augmented"] == block]
        assert len(rows) == 14  # 7 conditions x 2 test groups
    _criterion(
        "Report shapes: mode 3x2 cells/condition/side, dose 6 rows x 4 doses, "
        "spillover 4 blocks x 7 conditions x 2 groups"
    )


# ---- secondary criterion, API-level half: scripted review session ----

def test_secondary_api_session_drives_compose(tmp_path, smoke_manifest):
    """Scripted session against a stub-populated service: accept 4 per seed
    for 8 seeds, observe the quota lock, export, and feed the selection into
    a successful downstream composition. (The browser half of this criterion
    lives in the frontend's own test suite; everything here never touches
    the UI.)"""
    from fastapi.testclient import TestClient

    from dermaug.curation import accepted_candidates, load_selection
    from dermaug.genclient import build_request, generate, parts_for_seed, stub_backend
    from dermaug.manifest import register_synthetic

    condition, group = "psoriasis", FSTGroup.V_VI
    seeds = sample_seeds(smoke_manifest, condition, group, 8, rng_seed=11)
    store = CurationStore(tmp_path / "store")
    backend = stub_backend(11)
    for seed in seeds:
        parts = parts_for_seed(seed, 11)
        request = build_request(seed, parts, n_candidates=8)
        store.register_seed(seed.image_id, condition, group, prompt=request.prompt)
        candidates = generate(request, backend, tmp_path / "cands")
        store.register_request(request)
        store.register_candidates(candidates)

    http = TestClient(create_app(store))
    seed_rows = http.get(
        "/api/seeds", params={"condition": condition, "group": group.value}
    ).json()
    assert len(seed_rows) == 8
    for row in seed_rows:
        candidates = http.get("/api/candidates", params={"seed_id": row["seed_id"]}).json()
        assert len(candidates) == 8
        for candidate in candidates[:4]:
            response = http.post(
                "/api/review",
                json={
                    "candidate_id": candidate["candidate_id"],
                    "decision": "accept",
                    "reviewer": "session",
                },
            )
            assert response.status_code == 200
        # quota locks at 4/4
        response = http.post(
            "/api/review",
            json={
                "candidate_id": candidates[4]["candidate_id"],
                "decision": "accept",
                "reviewer": "session",
            },
        )
        assert response.status_code == 409

    response = http.post("/api/export", json={"condition": condition, "group": group.value})
    assert response.status_code == 200
    selection_path = tmp_path / "store" / f"selection.{condition}.{group.value}.json"
    selection = load_selection(selection_path)
    assert selection.finalized and len(selection.accepted_ids()) == 32

    manifest = register_synthetic(
        smoke_manifest, accepted_candidates(store, selection), selection
    )
    spec = SplitSpec(
        train_group=FSTGroup.I_II,
        conditions=manifest.vocabulary,
        mode="dalle_and_seed",
        dose=32,
        augmented_conditions=frozenset({condition}),
        rng_seed=11,
    )
    plan = compose_split(manifest, spec, {condition: seeds}, selection)
    synthetic = [rec for rec in plan.train if rec.provenance == "synthetic"]
    assert len(synthetic) == 32
    _criterion("Secondary (API half): scripted session -> quota lock -> export -> compose")
