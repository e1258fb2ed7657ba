"""Human review of generated candidates: storage, quotas, export, HTTP service.

State lives in an append-only JSON-lines event log with periodic snapshots;
replaying the log reconstructs the store exactly, so a crash between
snapshot writes loses nothing. Review writes are serialized by a lock and
fsync'd before acknowledgment.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from .errors import (
    IncompleteSelection,
    InvalidReview,
    ManifestFinalized,
    QuotaExceeded,
    UnknownCandidate,
)
from .genclient import REJECT_REASONS, CandidateImage, GenerationRequest
from .manifest import FSTGroup

#: Exactly this many candidates are kept per seed; the 8-seeds x 4 = 32
#: synthetic-images-per-condition arithmetic downstream depends on it.
SELECTION_QUOTA = 4

SNAPSHOT_EVERY = 100

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 7341


@dataclass(frozen=True)
class ReviewDecision:
    candidate_id: str
    decision: str  # accept | reject
    reviewer: str
    reason: str | None = None
    decided_at: str | None = None

    def __post_init__(self) -> None:
        if self.decision not in ("accept", "reject"):
            raise InvalidReview(f"decision must be accept or reject, got {self.decision!r}")
        if self.decision == "reject":
            if not self.reason:
                raise InvalidReview("a rejection requires a reason")
            if self.reason not in REJECT_REASONS:
                raise InvalidReview(f"reject reason {self.reason!r} not in {REJECT_REASONS}")
        if not self.reviewer:
            raise InvalidReview("reviewer must be non-empty")


@dataclass(frozen=True)
class SelectionManifest:
    """Curated mapping seed -> exactly 4 accepted candidates for one
    (condition, target group) scope."""

    condition: str
    target_group: FSTGroup
    entries: Mapping[str, tuple[str, ...]]
    finalized: bool = False

    def __post_init__(self) -> None:
        for seed_id, cands in self.entries.items():
            if len(set(cands)) != len(cands):
                raise InvalidReview(f"duplicate candidates for seed {seed_id}")
            if self.finalized and len(cands) != SELECTION_QUOTA:
                raise IncompleteSelection(
                    f"finalized selection requires exactly {SELECTION_QUOTA} accepted "
                    f"candidates per seed; seed {seed_id} has {len(cands)}"
                )

    def accepted_ids(self) -> frozenset[str]:
        return frozenset(c for cands in self.entries.values() for c in cands)

    def to_json_dict(self) -> dict:
        return {
            "condition": self.condition,
            "target_group": self.target_group.value,
            "entries": {seed: list(cands) for seed, cands in sorted(self.entries.items())},
            "finalized": self.finalized,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "SelectionManifest":
        return cls(
            condition=doc["condition"],
            target_group=FSTGroup(doc["target_group"]),
            entries={seed: tuple(cands) for seed, cands in doc["entries"].items()},
            finalized=bool(doc["finalized"]),
        )


def load_selection(path: str | Path) -> SelectionManifest:
    return SelectionManifest.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class _SeedEntry:
    seed_id: str
    condition: str
    group: FSTGroup
    prompt: str = ""
    uri: str = ""


@dataclass
class _CandidateState:
    candidate: CandidateImage
    review: str = "pending"
    reject_reason: str | None = None
    reviewer: str | None = None
    decided_at: str | None = None


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _slug(text: str) -> str:
    return text.replace(" ", "_")


class CurationStore:
    """Single-writer embedded store for seeds, candidates and reviews."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.events_path = self.directory / "events.jsonl"
        self.snapshot_path = self.directory / "snapshot.json"
        self._lock = threading.Lock()
        self._seeds: dict[str, _SeedEntry] = {}
        self._candidates: dict[str, _CandidateState] = {}
        self._requests: list[dict] = []
        self._finalized: dict[tuple[str, str], SelectionManifest] = {}
        self._event_count = 0
        self._replay()

    # ---- event plumbing ----

    def _replay(self) -> None:
        start = 0
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            start = snap["event_count"]
            self._load_state(snap["state"])
            self._event_count = start
        if self.events_path.exists():
            with self.events_path.open(encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if i < start or not line.strip():
                        continue
                    self._apply(json.loads(line))
                    self._event_count += 1

    def _append(self, event: dict) -> None:
        self._apply(event)
        with self.events_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._event_count += 1
        if self._event_count % SNAPSHOT_EVERY == 0:
            self._write_snapshot()

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "seed_registered":
            self._seeds[event["seed_id"]] = _SeedEntry(
                seed_id=event["seed_id"],
                condition=event["condition"],
                group=FSTGroup(event["group"]),
                prompt=event.get("prompt", ""),
                uri=event.get("uri", ""),
            )
        elif kind == "request_logged":
            self._requests.append(event)
        elif kind == "candidate_registered":
            candidate = CandidateImage(
                candidate_id=event["candidate_id"],
                request_ref=event["request_ref"],
                parent_seed_id=event["parent_seed_id"],
                payload_uri=event["payload_uri"],
                created_at=event["created_at"],
                index=event["index"],
                prompt=event["prompt"],
            )
            self._candidates[candidate.candidate_id] = _CandidateState(candidate=candidate)
        elif kind == "review_recorded":
            state = self._candidates[event["candidate_id"]]
            state.review = "accepted" if event["decision"] == "accept" else "rejected"
            state.reject_reason = event.get("reason")
            state.reviewer = event["reviewer"]
            state.decided_at = event["decided_at"]
        elif kind == "selection_finalized":
            manifest = SelectionManifest.from_json_dict(event["manifest"])
            self._finalized[(manifest.condition, manifest.target_group.value)] = manifest
        else:
            raise ValueError(f"unknown event type {kind!r}")

    def _state_dict(self) -> dict:
        return {
            "seeds": [
                {
                    "seed_id": s.seed_id,
                    "condition": s.condition,
                    "group": s.group.value,
                    "prompt": s.prompt,
                    "uri": s.uri,
                }
                for s in self._seeds.values()
            ],
            "requests": self._requests,
            "candidates": [
                {
                    "candidate_id": c.candidate.candidate_id,
                    "request_ref": c.candidate.request_ref,
                    "parent_seed_id": c.candidate.parent_seed_id,
                    "payload_uri": c.candidate.payload_uri,
                    "created_at": c.candidate.created_at,
                    "index": c.candidate.index,
                    "prompt": c.candidate.prompt,
                    "review": c.review,
                    "reject_reason": c.reject_reason,
                    "reviewer": c.reviewer,
                    "decided_at": c.decided_at,
                }
                for c in self._candidates.values()
            ],
            "finalized": [m.to_json_dict() for m in self._finalized.values()],
        }

    def _load_state(self, state: dict) -> None:
        for s in state["seeds"]:
            self._seeds[s["seed_id"]] = _SeedEntry(
                seed_id=s["seed_id"],
                condition=s["condition"],
                group=FSTGroup(s["group"]),
                prompt=s.get("prompt", ""),
                uri=s.get("uri", ""),
            )
        self._requests = list(state["requests"])
        for c in state["candidates"]:
            self._candidates[c["candidate_id"]] = _CandidateState(
                candidate=CandidateImage(
                    candidate_id=c["candidate_id"],
                    request_ref=c["request_ref"],
                    parent_seed_id=c["parent_seed_id"],
                    payload_uri=c["payload_uri"],
                    created_at=c["created_at"],
                    index=c["index"],
                    prompt=c["prompt"],
                ),
                review=c["review"],
                reject_reason=c.get("reject_reason"),
                reviewer=c.get("reviewer"),
                decided_at=c.get("decided_at"),
            )
        for doc in state["finalized"]:
            manifest = SelectionManifest.from_json_dict(doc)
            self._finalized[(manifest.condition, manifest.target_group.value)] = manifest

    def _write_snapshot(self) -> None:
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"event_count": self._event_count, "state": self._state_dict()}, sort_keys=True),
            encoding="utf-8",
        )
        tmp.replace(self.snapshot_path)

    # ---- registration (pipeline side) ----

    def register_seed(
        self,
        seed_id: str,
        condition: str,
        group: FSTGroup,
        prompt: str = "",
        uri: str = "",
    ) -> None:
        with self._lock:
            self._append(
                {
                    "type": "seed_registered",
                    "seed_id": seed_id,
                    "condition": condition,
                    "group": group.value,
                    "prompt": prompt,
                    "uri": uri,
                }
            )

    def register_request(self, request: GenerationRequest, attempts: int = 1) -> None:
        with self._lock:
            self._append(
                {
                    "type": "request_logged",
                    "request_id": request.request_id,
                    "seed_id": request.seed_image_id,
                    "prompt": request.prompt,
                    "n_candidates": request.n_candidates,
                    "attempts": attempts,
                }
            )

    def register_candidates(self, candidates: list[CandidateImage]) -> None:
        with self._lock:
            for cand in candidates:
                self._append(
                    {
                        "type": "candidate_registered",
                        "candidate_id": cand.candidate_id,
                        "request_ref": cand.request_ref,
                        "parent_seed_id": cand.parent_seed_id,
                        "payload_uri": cand.payload_uri,
                        "created_at": cand.created_at,
                        "index": cand.index,
                        "prompt": cand.prompt,
                    }
                )

    # ---- queries ----

    def seed_scope(self, seed_id: str) -> tuple[str, str]:
        entry = self._seeds[seed_id]
        return (entry.condition, entry.group.value)

    def seeds_for(self, condition: str | None = None, group: FSTGroup | None = None) -> list[dict]:
        rows = []
        for entry in sorted(self._seeds.values(), key=lambda s: s.seed_id):
            if condition is not None and entry.condition != condition:
                continue
            if group is not None and entry.group is not group:
                continue
            accepted = self.accepted_for_seed(entry.seed_id)
            rows.append(
                {
                    "seed_id": entry.seed_id,
                    "condition": entry.condition,
                    "group": entry.group.value,
                    "prompt": entry.prompt,
                    "image_url": f"/img/{entry.seed_id}" if entry.uri else None,
                    "accepted_count": len(accepted),
                    "candidate_count": sum(
                        1
                        for c in self._candidates.values()
                        if c.candidate.parent_seed_id == entry.seed_id
                    ),
                    "finalized": (entry.condition, entry.group.value) in self._finalized,
                }
            )
        return rows

    def candidates_for_seed(self, seed_id: str) -> list[_CandidateState]:
        states = [
            c for c in self._candidates.values() if c.candidate.parent_seed_id == seed_id
        ]
        states.sort(key=lambda c: (c.candidate.request_ref, c.candidate.index))
        return states

    def candidate(self, candidate_id: str) -> _CandidateState:
        state = self._candidates.get(candidate_id)
        if state is None:
            raise UnknownCandidate(f"unknown candidate {candidate_id}")
        return state

    def accepted_for_seed(self, seed_id: str) -> list[str]:
        states = self.candidates_for_seed(seed_id)
        return [c.candidate.candidate_id for c in states if c.review == "accepted"]

    # ---- reviews ----

    def record_review(self, decision: ReviewDecision) -> _CandidateState:
        """Apply one accept/reject. The 4-per-seed quota is checked inside the
        write lock, so concurrent tabs cannot oversubscribe a seed."""
        with self._lock:
            state = self.candidate(decision.candidate_id)
            seed_id = state.candidate.parent_seed_id
            if seed_id in self._seeds:
                scope = self.seed_scope(seed_id)
                if scope in self._finalized:
                    raise ManifestFinalized(
                        f"selection for {scope[0]} / {scope[1]} is finalized; no further edits"
                    )
            if decision.decision == "accept" and state.review != "accepted":
                accepted = self.accepted_for_seed(seed_id)
                if len(accepted) >= SELECTION_QUOTA:
                    raise QuotaExceeded(
                        f"seed {seed_id} already has {SELECTION_QUOTA} accepted candidates"
                    )
            self._append(
                {
                    "type": "review_recorded",
                    "candidate_id": decision.candidate_id,
                    "decision": decision.decision,
                    "reason": decision.reason,
                    "reviewer": decision.reviewer,
                    "decided_at": decision.decided_at or _utcnow(),
                }
            )
            return self.candidate(decision.candidate_id)

    # ---- export ----

    def export_selection(self, condition: str, target_group: FSTGroup) -> SelectionManifest:
        """Finalize the (condition, group) scope: every seed must hold exactly
        4 accepted candidates. Idempotent once finalized."""
        with self._lock:
            key = (condition, target_group.value)
            if key in self._finalized:
                return self._finalized[key]
            seeds = [
                s
                for s in self._seeds.values()
                if s.condition == condition and s.group is target_group
            ]
            if not seeds:
                raise IncompleteSelection(
                    f"no seeds registered for {condition} / {target_group.value}"
                )
            shortfalls: dict[str, int] = {}
            entries: dict[str, tuple[str, ...]] = {}
            for seed in sorted(seeds, key=lambda s: s.seed_id):
                accepted = self.accepted_for_seed(seed.seed_id)
                if len(accepted) != SELECTION_QUOTA:
                    shortfalls[seed.seed_id] = len(accepted)
                entries[seed.seed_id] = tuple(accepted)
            if shortfalls:
                detail = ", ".join(f"{sid}: {n}/{SELECTION_QUOTA}" for sid, n in sorted(shortfalls.items()))
                raise IncompleteSelection(
                    f"selection incomplete for {condition} / {target_group.value} ({detail})",
                    shortfalls,
                )
            manifest = SelectionManifest(
                condition=condition,
                target_group=target_group,
                entries=entries,
                finalized=True,
            )
            self._append({"type": "selection_finalized", "manifest": manifest.to_json_dict()})
            path = self.directory / f"selection.{_slug(condition)}.{target_group.value}.json"
            path.write_text(
                json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            return manifest

    def finalized_selections(self) -> list[SelectionManifest]:
        return [self._finalized[k] for k in sorted(self._finalized)]

    # ---- stats ----

    def selection_stats(self) -> list[dict]:
        """Per distinct prompt: generation attempts issued and candidates
        accepted (the bookkeeping behind the prompt-usage appendix table)."""
        attempts: dict[str, int] = {}
        for req in self._requests:
            attempts[req["prompt"]] = attempts.get(req["prompt"], 0) + 1
        selected: dict[str, int] = {}
        for state in self._candidates.values():
            if state.review == "accepted":
                prompt = state.candidate.prompt
                selected[prompt] = selected.get(prompt, 0) + 1
        return [
            {"prompt": prompt, "attempts": attempts[prompt], "selected": selected.get(prompt, 0)}
            for prompt in sorted(attempts)
        ]


def accepted_candidates(store: CurationStore, selection: SelectionManifest) -> list[CandidateImage]:
    """Candidate objects for a selection, ready for manifest registration."""
    return [store.candidate(cid).candidate for cid in sorted(selection.accepted_ids())]


def auto_curate(
    store: CurationStore,
    condition: str,
    target_group: FSTGroup,
    reviewer: str = "auto",
) -> SelectionManifest:
    """Accept the first `SELECTION_QUOTA` candidates (generation order) per
    seed and export. The API-level stand-in for human review in test mode."""
    for seed in store.seeds_for(condition, target_group):
        states = store.candidates_for_seed(seed["seed_id"])
        already = store.accepted_for_seed(seed["seed_id"])
        for state in states[:SELECTION_QUOTA]:
            if state.candidate.candidate_id in already:
                continue
            if len(store.accepted_for_seed(seed["seed_id"])) >= SELECTION_QUOTA:
                break
            store.record_review(
                ReviewDecision(
                    candidate_id=state.candidate.candidate_id,
                    decision="accept",
                    reviewer=reviewer,
                )
            )
    return store.export_selection(condition, target_group)


# ---- HTTP service ----

def create_app(store: CurationStore, static_dir: str | Path | None = None):
    """FastAPI app exposing the review API; review writes are serial via the
    store lock. When `static_dir` exists the UI is served from it."""
    from fastapi import Body, FastAPI, HTTPException, Query
    from fastapi.responses import FileResponse

    app = FastAPI(title="dermaug curation")

    @app.get("/api/seeds")
    def api_seeds(condition: str | None = Query(None), group: str | None = Query(None)):
        fst_group = FSTGroup(group) if group else None
        return store.seeds_for(condition, fst_group)

    @app.get("/api/candidates")
    def api_candidates(seed_id: str = Query(...)):
        return [
            {
                "candidate_id": c.candidate.candidate_id,
                "seed_id": c.candidate.parent_seed_id,
                "prompt": c.candidate.prompt,
                "review": c.review,
                "reject_reason": c.reject_reason,
                "image_url": f"/img/{c.candidate.candidate_id}",
            }
            for c in store.candidates_for_seed(seed_id)
        ]

    @app.get("/img/{image_id}")
    def api_image(image_id: str):
        try:
            state = store.candidate(image_id)
            return FileResponse(state.candidate.payload_uri, media_type="image/png")
        except UnknownCandidate:
            seed = store._seeds.get(image_id)
            if seed is not None and seed.uri:
                return FileResponse(seed.uri, media_type="image/png")
            raise HTTPException(status_code=404, detail="unknown image")

    @app.post("/api/review")
    def api_review(body: dict = Body(...)):
        try:
            decision = ReviewDecision(
                candidate_id=str(body.get("candidate_id", "")),
                decision=str(body.get("decision", "")),
                reason=body.get("reason"),
                reviewer=str(body.get("reviewer", "reviewer")),
            )
            state = store.record_review(decision)
        except UnknownCandidate as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (QuotaExceeded, ManifestFinalized) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except InvalidReview as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        seed_id = state.candidate.parent_seed_id
        return {
            "candidate_id": state.candidate.candidate_id,
            "review": state.review,
            "reject_reason": state.reject_reason,
            "accepted_count": len(store.accepted_for_seed(seed_id)),
            "seed_id": seed_id,
        }

    @app.post("/api/export")
    def api_export(body: dict = Body(...)):
        try:
            manifest = store.export_selection(str(body.get("condition", "")), FSTGroup(body.get("group")))
        except IncompleteSelection as exc:
            raise HTTPException(
                status_code=422,
                detail={"message": str(exc), "shortfalls": exc.shortfalls},
            )
        return manifest.to_json_dict()

    @app.get("/api/stats")
    def api_stats():
        return store.selection_stats()

    if static_dir is not None and Path(static_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(
    store: CurationStore,
    host: str = DEFAULT_HOST,
    port: int = DEFAULT_PORT,
    static_dir: str | Path | None = None,
) -> None:
    import uvicorn

    uvicorn.run(create_app(store, static_dir), host=host, port=port, log_level="warning")
