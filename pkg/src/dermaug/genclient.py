"""Inpainting-request construction and generation backends.

Prompts follow a fixed template over closed vocabularies so they stay
machine-checkable; the backend behind `generate` is pluggable — a remote
HTTP image-edit endpoint for real runs, a deterministic procedural stub
for desk-scale tests.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
from PIL import Image

from .errors import (
    BackendAuthError,
    BackendRateLimited,
    BackendUnavailable,
    ContentRejected,
    InvalidRequest,
    PromptParseError,
    VocabularyViolation,
)
from .manifest import ImageRecord
from .rng import derive_seed

SKIN_DESCRIPTORS = (
    "very light-skinned",
    "light-skinned",
    "dark-skinned",
    "very dark-skinned",
)
NOUNS = ("man", "woman", "individual")
PREPOSITIONS = ("on the", "under the")

#: Skin descriptors used when prompting for each extreme group, keyed by the
#: seed's own FST value (1 -> very light ... 6 -> very dark).
DESCRIPTOR_BY_FST = {
    1: "very light-skinned",
    2: "light-skinned",
    5: "dark-skinned",
    6: "very dark-skinned",
}

STUB_IMAGE_SIZE = 256

_PROMPT_RE = re.compile(
    r"^An image of (?P<condition>.+?) (?P<preposition>on the|under the) "
    r"(?P<body_part>.+) of a (?P<descriptor>(?:very )?(?:light|dark)-skinned) "
    r"(?P<noun>man|woman|individual)$"
)


@dataclass(frozen=True)
class PromptParts:
    """Slots of the prompt template, all from closed vocabularies."""

    condition: str
    body_part: str
    skin_descriptor: str
    noun: str
    preposition: str = "on the"

    def __post_init__(self) -> None:
        for name, value in (("condition", self.condition), ("body_part", self.body_part)):
            if not value or not value.strip():
                raise VocabularyViolation(f"{name} must be non-empty")
        if self.skin_descriptor not in SKIN_DESCRIPTORS:
            raise VocabularyViolation(
                f"skin descriptor {self.skin_descriptor!r} not in {SKIN_DESCRIPTORS}"
            )
        if self.noun not in NOUNS:
            raise VocabularyViolation(f"noun {self.noun!r} not in {NOUNS}")
        if self.preposition not in PREPOSITIONS:
            raise VocabularyViolation(f"preposition {self.preposition!r} not in {PREPOSITIONS}")


def render_prompt(parts: PromptParts) -> str:
    """Fill the template; single spaces, no trailing whitespace."""
    return (
        f"An image of {parts.condition} {parts.preposition} {parts.body_part} "
        f"of a {parts.skin_descriptor} {parts.noun}"
    )


def parse_prompt(text: str) -> PromptParts:
    """Invert `render_prompt`. Raises PromptParseError if the text does not
    match the template."""
    match = _PROMPT_RE.match(text)
    if match is None:
        raise PromptParseError(f"prompt does not match the template: {text!r}")
    return PromptParts(
        condition=match.group("condition"),
        body_part=match.group("body_part"),
        skin_descriptor=match.group("descriptor"),
        noun=match.group("noun"),
        preposition=match.group("preposition"),
    )


@dataclass(frozen=True)
class CropBox:
    """Square crop region in pixel coordinates of the seed image."""

    x: int
    y: int
    side: int

    def __post_init__(self) -> None:
        if self.side <= 0 or self.x < 0 or self.y < 0:
            raise InvalidRequest(f"invalid crop {self}")


@dataclass(frozen=True, eq=False)
class GenerationRequest:
    """One inpainting job: seed image, square crop, editable mask, prompt."""

    seed_image_id: str
    seed_image_uri: str
    crop: CropBox
    prompt: str
    n_candidates: int = 8
    mask: np.ndarray | None = None  # bool (side, side); None = whole crop editable
    backend_params: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_candidates < 1:
            raise InvalidRequest("n_candidates must be >= 1")
        if self.mask is not None and self.mask.shape != (self.crop.side, self.crop.side):
            raise InvalidRequest(
                f"mask shape {self.mask.shape} does not match crop side {self.crop.side}"
            )

    @property
    def request_id(self) -> str:
        payload = f"{self.seed_image_id}|{self.prompt}|{self.crop.x},{self.crop.y},{self.crop.side}|{self.n_candidates}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class CandidateImage:
    """One generated output, pending human review."""

    candidate_id: str
    request_ref: str
    parent_seed_id: str
    payload_uri: str
    created_at: str
    index: int
    prompt: str
    review: str = "pending"
    reject_reason: str | None = None

    def __post_init__(self) -> None:
        if self.review == "rejected" and not self.reject_reason:
            raise InvalidRequest("rejected candidates must carry a reject_reason")


REJECT_REASONS = ("anatomy_change", "artifact", "pathology_misplaced", "other")


def build_request(
    seed: ImageRecord,
    parts: PromptParts,
    crop: CropBox | None = None,
    mask_path: str | Path | None = None,
    n_candidates: int = 8,
    backend_params: Mapping[str, str] | None = None,
) -> GenerationRequest:
    """Assemble a request from a seed record.

    Without an explicit crop, the largest centered square of the seed image
    is used. A mask file, when given, must match the crop dimensions; it is
    produced externally (lesion segmentation is out of scope here).
    """
    if crop is None:
        with Image.open(seed.uri) as img:
            width, height = img.size
        side = min(width, height)
        crop = CropBox(x=(width - side) // 2, y=(height - side) // 2, side=side)
    mask = None
    if mask_path is not None:
        with Image.open(mask_path) as mask_img:
            mask = np.asarray(mask_img.convert("L")) > 127
    return GenerationRequest(
        seed_image_id=seed.image_id,
        seed_image_uri=seed.uri,
        crop=crop,
        prompt=render_prompt(parts),
        n_candidates=n_candidates,
        mask=mask,
        backend_params=dict(backend_params or {}),
    )


class GenerationBackend(Protocol):
    def generate(self, request: GenerationRequest) -> list[bytes]:
        """Return 1..n_candidates PNG payloads for the request."""
        ...


# ---- deterministic stub backend ----

_TONE_BY_DESCRIPTOR = {
    "very light-skinned": 232,
    "light-skinned": 204,
    "dark-skinned": 122,
    "very dark-skinned": 84,
}


def _condition_motif(condition: str) -> tuple[int, int, int, int, tuple[int, int, int]]:
    """(lesion RGB shifts, blob count, global tint) keyed to the label."""
    h = derive_seed(0, "motif", condition)
    tint = (
        -18 + ((h >> 32) % 37),
        -18 + ((h >> 40) % 37),
        -18 + ((h >> 48) % 37),
    )
    return (
        50 + (h % 70),
        -40 + ((h >> 8) % 70),
        -50 + ((h >> 16) % 60),
        3 + ((h >> 24) % 4),
        tint,
    )


def render_stub_image(
    tone: int, condition: str, noise_seed: int, size: int = STUB_IMAGE_SIZE
) -> np.ndarray:
    """Procedural skin-like patch: warm base tone, speckle, condition-keyed blobs.

    Fixed-width integer arithmetic throughout, so output is identical on
    every platform.
    """
    rng = np.random.Generator(np.random.PCG64(noise_seed))
    dr, dg, db, blobs, tint = _condition_motif(condition)
    base = np.empty((size, size, 3), dtype=np.int16)
    base[..., 0] = tone + 12 + tint[0]
    base[..., 1] = tone - 4 + tint[1]
    base[..., 2] = tone - 18 + tint[2]
    base += rng.integers(-10, 11, size=(size, size, 1), dtype=np.int16)

    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(blobs):
        cx = int(rng.integers(size // 4, 3 * size // 4))
        cy = int(rng.integers(size // 4, 3 * size // 4))
        radius = int(rng.integers(size // 12, size // 6))
        blob = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
        base[blob, 0] += dr
        base[blob, 1] += dg
        base[blob, 2] += db
    return np.clip(base, 0, 255).astype(np.uint8)


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def mean_luminance(png_bytes: bytes) -> float:
    with Image.open(io.BytesIO(png_bytes)) as img:
        return float(np.asarray(img.convert("L"), dtype=np.float64).mean())


@dataclass(frozen=True)
class StubBackend:
    """Deterministic offline backend: payload bytes are a pure function of
    (backend seed, seed image id, prompt, candidate index)."""

    seed: int = 0
    size: int = STUB_IMAGE_SIZE

    def generate(self, request: GenerationRequest) -> list[bytes]:
        parts = parse_prompt(request.prompt)
        tone = _TONE_BY_DESCRIPTOR[parts.skin_descriptor]
        payloads = []
        for index in range(request.n_candidates):
            noise_seed = derive_seed(
                self.seed, "stub", request.seed_image_id, request.prompt, index
            )
            pixels = render_stub_image(tone, parts.condition, noise_seed, self.size)
            payloads.append(encode_png(pixels))
        return payloads


def stub_backend(seed: int = 0) -> StubBackend:
    return StubBackend(seed=seed)


# ---- remote backend ----

API_KEY_ENV = "DERMAUG_API_KEY"


class RemoteBackend:
    """HTTP image-edit endpoint taking (image, mask, prompt, n).

    Credentials come from the environment; endpoint specifics beyond the
    four-field contract ride in `backend_params` untouched.
    """

    def __init__(self, endpoint: str, api_key_env: str = API_KEY_ENV, timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout

    def _crop_png(self, request: GenerationRequest) -> bytes:
        with Image.open(request.seed_image_uri) as img:
            box = (
                request.crop.x,
                request.crop.y,
                request.crop.x + request.crop.side,
                request.crop.y + request.crop.side,
            )
            cropped = img.convert("RGB").crop(box)
        buf = io.BytesIO()
        cropped.save(buf, format="PNG")
        return buf.getvalue()

    def _mask_png(self, request: GenerationRequest) -> bytes:
        side = request.crop.side
        mask = request.mask if request.mask is not None else np.ones((side, side), dtype=bool)
        buf = io.BytesIO()
        Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
        return buf.getvalue()

    def generate(self, request: GenerationRequest) -> list[bytes]:
        import httpx

        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise BackendAuthError(f"environment variable {self.api_key_env} is not set")
        files = {
            "image": ("image.png", self._crop_png(request), "image/png"),
            "mask": ("mask.png", self._mask_png(request), "image/png"),
        }
        data = {"prompt": request.prompt, "n": str(request.n_candidates)}
        data.update(request.backend_params)
        try:
            response = httpx.post(
                self.endpoint,
                files=files,
                data=data,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"request failed: {exc}") from exc
        if response.status_code in (401, 403):
            raise BackendAuthError(f"backend rejected credentials ({response.status_code})")
        if response.status_code == 429:
            raise BackendRateLimited("backend rate limit hit")
        if response.status_code == 400:
            raise ContentRejected(f"backend refused the prompt: {response.text[:200]}")
        if response.status_code >= 500:
            raise BackendUnavailable(f"backend error {response.status_code}")
        payload = response.json()
        images = []
        for item in payload.get("data", []):
            if "b64_json" in item:
                images.append(base64.b64decode(item["b64_json"]))
        if not images:
            raise BackendUnavailable("backend returned no images")
        return images


# ---- generate with retry/backoff and the request log ----

def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def generate(
    request: GenerationRequest,
    backend: GenerationBackend,
    output_dir: str | Path,
    log_path: str | Path | None = None,
    max_attempts: int = 5,
    base_delay: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
    _log_append: Callable[[str | Path, dict], None] | None = None,
) -> list[CandidateImage]:
    """Run one generation request and persist its outputs.

    Payloads land under `<output_dir>/<request_id>/<index>.png`; one line per
    request is appended to the JSON-lines log (prompt, attempts, outcome).
    Transient failures (rate limit, 5xx) retry with exponential backoff up to
    `max_attempts`; auth failures and content rejections are terminal.
    """
    output_dir = Path(output_dir)
    attempts = 0
    delay = base_delay
    payloads: list[bytes] | None = None
    outcome = "ok"
    error: str | None = None
    try:
        while True:
            attempts += 1
            try:
                payloads = backend.generate(request)
                if not payloads:
                    raise BackendUnavailable("backend returned no candidates")
                break
            except (BackendRateLimited, BackendUnavailable) as exc:
                if attempts >= max_attempts:
                    outcome, error = "exhausted", str(exc)
                    raise
                sleep(delay)
                delay *= 2  # strictly increasing inter-attempt delays
            except BackendAuthError as exc:
                outcome, error = "auth_error", str(exc)
                raise
            except ContentRejected as exc:
                outcome, error = "content_rejected", str(exc)
                raise
    finally:
        if log_path is not None:
            (_log_append or _append_log)(
                log_path,
                {
                    "request_id": request.request_id,
                    "seed_image_id": request.seed_image_id,
                    "prompt": request.prompt,
                    "n_candidates": request.n_candidates,
                    "attempts": attempts,
                    "outcome": outcome,
                    "error": error,
                    "logged_at": _utcnow(),
                },
            )

    if len(payloads) > request.n_candidates:
        payloads = payloads[: request.n_candidates]
    candidates = []
    request_dir = output_dir / request.request_id
    request_dir.mkdir(parents=True, exist_ok=True)
    for index, png in enumerate(payloads):
        path = request_dir / f"{index}.png"
        path.write_bytes(png)
        candidates.append(
            CandidateImage(
                candidate_id=hashlib.sha256(png).hexdigest()[:32],
                request_ref=request.request_id,
                parent_seed_id=request.seed_image_id,
                payload_uri=str(path),
                created_at=_utcnow(),
                index=index,
                prompt=request.prompt,
            )
        )
    return candidates


def _append_log(path: str | Path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def generate_batch(
    requests: Sequence[GenerationRequest],
    backend: GenerationBackend,
    output_dir: str | Path,
    log_path: str | Path | None = None,
    max_in_flight: int = 4,
    **generate_kwargs,
) -> list[list[CandidateImage]]:
    """Run many requests with at most `max_in_flight` concurrently.

    Results come back in request order; each request's candidates stay one
    atomic batch. The log lock keeps JSON lines whole under concurrency.
    """
    import threading
    from concurrent.futures import ThreadPoolExecutor

    if max_in_flight < 1:
        raise InvalidRequest("max_in_flight must be >= 1")
    log_lock = threading.Lock()

    def locked_append(path, record):
        with log_lock:
            _append_log(path, record)

    def run_one(request: GenerationRequest) -> list[CandidateImage]:
        return generate(
            request,
            backend,
            output_dir,
            log_path=log_path,
            _log_append=locked_append,
            **generate_kwargs,
        )

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(run_one, requests))


def parts_for_seed(
    seed: ImageRecord, rng_seed: int, body_parts: Sequence[str] = (
        "arm", "leg", "hand", "foot", "neck", "shoulder", "back", "face",
    )
) -> PromptParts:
    """Deterministic prompt slots for a seed record.

    The skin descriptor tracks the seed's own FST (1 -> very light ...
    6 -> very dark); body part and noun are picked by a seeded hash so
    prompts vary across seeds but never across runs.
    """
    if seed.fst not in DESCRIPTOR_BY_FST:
        raise VocabularyViolation(
            f"seed {seed.image_id} has FST {seed.fst}; prompts cover the extremes only"
        )
    h = derive_seed(rng_seed, "prompt", seed.image_id)
    return PromptParts(
        condition=seed.condition,
        body_part=body_parts[h % len(body_parts)],
        skin_descriptor=DESCRIPTOR_BY_FST[seed.fst],
        noun=NOUNS[(h >> 16) % len(NOUNS)],
        preposition="on the",
    )
