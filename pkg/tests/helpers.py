"""Shared test scaffolding: hand-rolled synthetic registrations."""

from __future__ import annotations

from dermaug.curation import SelectionManifest
from dermaug.genclient import CandidateImage
from dermaug.manifest import register_synthetic
from dermaug.splitter import sample_seeds


def synthetics_for(manifest, condition, group, rng_seed=7, n_seeds=8, per_seed=4):
    """Sample seeds, fabricate accepted candidates for them, and register the
    synthetics; returns (augmented manifest, seeds map, selection)."""
    seeds = sample_seeds(manifest, condition, group, n_seeds, rng_seed)
    entries = {}
    images = []
    for seed in seeds:
        cands = tuple(f"syn-{seed.image_id[:8]}-{j}" for j in range(per_seed))
        entries[seed.image_id] = cands
        images.extend(
            CandidateImage(
                candidate_id=cid,
                request_ref="req",
                parent_seed_id=seed.image_id,
                payload_uri=f"mem://{cid}.png",
                created_at="2024-01-01T00:00:00Z",
                index=j,
                prompt="An image of psoriasis on the arm of a dark-skinned man",
            )
            for j, cid in enumerate(cands)
        )
    selection = SelectionManifest(
        condition=condition, target_group=group, entries=entries, finalized=True
    )
    return register_synthetic(manifest, images, selection), {condition: seeds}, selection
