from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dermaug import fixtures
from dermaug.errors import (
    DuplicateId,
    InvalidFST,
    MissingColumn,
    UnacceptedCandidate,
    UnknownCondition,
    UnknownSeed,
)
from dermaug.curation import SelectionManifest
from dermaug.genclient import CandidateImage
from dermaug.manifest import (
    CSV_COLUMNS,
    DatasetManifest,
    FSTGroup,
    ImageRecord,
    count_by,
    count_total,
    filter_conditions,
    load_manifest,
    register_synthetic,
    save_manifest,
)

HEADER = ",".join(CSV_COLUMNS)


def write_csv(tmp_path, rows, name="m.csv"):
    path = tmp_path / name
    path.write_text("\n".join([HEADER] + rows) + "\n", encoding="utf-8")
    return path


def test_fst_group_mapping():
    assert FSTGroup.from_fst(1) is FSTGroup.I_II
    assert FSTGroup.from_fst(2) is FSTGroup.I_II
    assert FSTGroup.from_fst(3) is FSTGroup.III_IV
    assert FSTGroup.from_fst(4) is FSTGroup.III_IV
    assert FSTGroup.from_fst(5) is FSTGroup.V_VI
    assert FSTGroup.from_fst(6) is FSTGroup.V_VI
    with pytest.raises(InvalidFST):
        FSTGroup.from_fst(7)
    assert FSTGroup.I_II.opposite() is FSTGroup.V_VI
    assert FSTGroup.V_VI.opposite() is FSTGroup.I_II
    with pytest.raises(ValueError):
        FSTGroup.III_IV.opposite()


def test_load_empty_file_with_header(tmp_path):
    manifest = load_manifest(write_csv(tmp_path, []))
    assert len(manifest) == 0


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("image_id,uri,condition\n", encoding="utf-8")
    with pytest.raises(MissingColumn):
        load_manifest(path)


def test_load_rejects_fst_out_of_range(tmp_path):
    path = write_csv(tmp_path, ["a,1.png,psoriasis,7,real,,"])
    with pytest.raises(InvalidFST, match="row 1"):
        load_manifest(path)


def test_load_rejects_unparseable_fst(tmp_path):
    path = write_csv(tmp_path, ["a,1.png,psoriasis,six,real,,"])
    with pytest.raises(InvalidFST, match="row 1"):
        load_manifest(path)


def test_load_rejects_duplicate_id(tmp_path):
    path = write_csv(
        tmp_path,
        ["a,1.png,psoriasis,1,real,,", "a,2.png,psoriasis,2,real,,"],
    )
    with pytest.raises(DuplicateId, match="row 2"):
        load_manifest(path)


def test_load_rejects_unknown_condition_with_vocabulary(tmp_path):
    path = write_csv(tmp_path, ["a,1.png,warts,1,real,,"])
    with pytest.raises(UnknownCondition, match="row 1"):
        load_manifest(path, vocabulary=["psoriasis"])


def test_sample_size_fixture_loads_to_2707(tmp_path, published_manifest):
    path = fixtures.write_sample_size_csv(tmp_path / "counts.csv")
    manifest = load_manifest(path)
    assert len(manifest) == 2707
    assert manifest.vocabulary == frozenset(fixtures.SEVEN_CONDITIONS)


def test_round_trip_identity(tmp_path, published_manifest):
    path = save_manifest(published_manifest, tmp_path / "out.csv")
    reloaded = load_manifest(path)
    assert reloaded.records == published_manifest.records


def test_fitzpatrick17k_shim(tmp_path):
    from dermaug.manifest import load_fitzpatrick17k

    path = tmp_path / "public.csv"
    path.write_text(
        "md5hash,fitzpatrick,label,nine_partition_label,qc,url\n"
        "aaa,2,psoriasis,inflammatory,,http://x/1.jpg\n"
        "bbb,-1,psoriasis,inflammatory,,http://x/2.jpg\n"
        "ccc,6,folliculitis,inflammatory,,http://x/3.jpg\n",
        encoding="utf-8",
    )
    manifest = load_fitzpatrick17k(path)
    assert len(manifest) == 2  # the unlabeled (-1) row is dropped
    assert manifest.records[0].image_id == "aaa"
    assert manifest.records[0].uri == "http://x/1.jpg"
    assert manifest.records[0].provenance == "real"
    assert "1 rows without a valid FST dropped" in manifest.source_note
    narrowed = load_fitzpatrick17k(path, vocabulary=["psoriasis"])
    assert len(narrowed) == 1


def test_fitzpatrick17k_shim_requires_columns(tmp_path):
    from dermaug.manifest import load_fitzpatrick17k

    path = tmp_path / "weird.csv"
    path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(MissingColumn):
        load_fitzpatrick17k(path)


def test_count_by_matches_published_cells(published_manifest):
    assert count_total(published_manifest, "psoriasis", None) == 622
    counts = count_by(published_manifest, "psoriasis")
    assert counts[("psoriasis", 6)] == 21
    assert count_total(published_manifest, "squamous cell carcinoma", FSTGroup.V_VI) == 63


def test_count_by_every_published_cell(published_manifest):
    counts = count_by(published_manifest)
    for condition, per_fst in fixtures.PUBLISHED_SAMPLE_SIZES.items():
        for fst, expected in per_fst.items():
            assert counts[(condition, fst)] == expected


def test_count_by_empty_manifest():
    empty = DatasetManifest(records=(), vocabulary=frozenset({"psoriasis"}))
    assert count_total(empty, "psoriasis") == 0


def test_count_by_unknown_condition(published_manifest):
    with pytest.raises(UnknownCondition):
        count_by(published_manifest, condition="not a condition")


def test_filter_conditions(published_manifest):
    kept = filter_conditions(published_manifest, fixtures.SEVEN_CONDITIONS)
    assert len(kept) == 2707
    assert len(filter_conditions(published_manifest, [])) == 0
    assert len(filter_conditions(published_manifest, ["prurigo nodularis"])) == 168
    with pytest.raises(UnknownCondition):
        filter_conditions(published_manifest, ["rosacea"])


def test_filter_preserves_order(published_manifest):
    kept = filter_conditions(published_manifest, ["psoriasis", "folliculitis"])
    positions = {rec.image_id: i for i, rec in enumerate(published_manifest.records)}
    order = [positions[rec.image_id] for rec in kept.records]
    assert order == sorted(order)


@st.composite
def small_manifests(draw):
    conditions = draw(
        st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=3, unique=True)
    )
    n = draw(st.integers(min_value=0, max_value=30))
    records = tuple(
        ImageRecord(
            image_id=f"img{i}",
            uri=f"mem://{i}",
            condition=draw(st.sampled_from(conditions)),
            fst=draw(st.integers(min_value=1, max_value=6)),
        )
        for i in range(n)
    )
    return DatasetManifest(records=records, vocabulary=frozenset(conditions))


@settings(max_examples=50, deadline=None)
@given(manifest=small_manifests())
def test_count_by_partitions_total(manifest):
    assert sum(count_by(manifest).values()) == len(manifest)
    for condition in manifest.vocabulary:
        per_condition = sum(count_by(manifest, condition).values())
        per_groups = sum(
            count_total(manifest, condition, group) for group in FSTGroup
        )
        assert per_condition == per_groups == count_total(manifest, condition)


def _candidate(candidate_id, seed_id):
    return CandidateImage(
        candidate_id=candidate_id,
        request_ref="req",
        parent_seed_id=seed_id,
        payload_uri=f"mem://{candidate_id}.png",
        created_at="2024-01-01T00:00:00Z",
        index=0,
        prompt="An image of psoriasis on the arm of a dark-skinned man",
    )


def _selection(entries, condition="psoriasis", group=FSTGroup.V_VI):
    return SelectionManifest(
        condition=condition, target_group=group, entries=entries, finalized=True
    )


@pytest.fixture()
def seeded_manifest():
    seeds = tuple(
        ImageRecord(image_id=f"seed{i}", uri=f"mem://s{i}", condition="psoriasis", fst=6)
        for i in range(8)
    )
    return DatasetManifest(records=seeds, vocabulary=frozenset({"psoriasis"}))


def test_register_synthetic_appends_32(seeded_manifest):
    entries = {
        f"seed{i}": tuple(f"cand{i}_{j}" for j in range(4)) for i in range(8)
    }
    images = [
        _candidate(cid, seed) for seed, cands in entries.items() for cid in cands
    ]
    result = register_synthetic(seeded_manifest, images, _selection(entries))
    assert len(result) == len(seeded_manifest) + 32
    synthetic = [rec for rec in result.records if rec.provenance == "synthetic"]
    assert len(synthetic) == 32
    assert all(rec.fst == 6 for rec in synthetic)
    assert all("fst_imputed" in rec.qc_flags for rec in synthetic)
    # existing records untouched
    assert result.records[: len(seeded_manifest)] == seeded_manifest.records


def test_register_synthetic_empty_selection(seeded_manifest):
    result = register_synthetic(seeded_manifest, [], _selection({}, group=FSTGroup.V_VI))
    assert result.records == seeded_manifest.records


def test_register_synthetic_unknown_seed(seeded_manifest):
    entries = {"ghost": ("c1", "c2", "c3", "c4")}
    images = [_candidate(f"c{j}", "ghost") for j in range(1, 5)]
    with pytest.raises(UnknownSeed):
        register_synthetic(seeded_manifest, images, _selection(entries))


def test_register_synthetic_unaccepted_candidate(seeded_manifest):
    entries = {"seed0": ("c1", "c2", "c3", "c4")}
    with pytest.raises(UnacceptedCandidate):
        register_synthetic(seeded_manifest, [_candidate("c9", "seed0")], _selection(entries))
