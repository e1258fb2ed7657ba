"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class DermaugError(Exception):
    """Base class for all pipeline errors."""


# ---- manifest ----

class ManifestError(DermaugError):
    pass


class MissingColumn(ManifestError):
    """CSV header does not match the documented schema."""


class InvalidFST(ManifestError):
    """Fitzpatrick value outside 1-6 (row number included in the message)."""


class DuplicateId(ManifestError):
    """The same image_id appears more than once."""


class UnknownCondition(ManifestError):
    """A condition label outside the manifest's declared vocabulary."""


class UnknownSeed(ManifestError):
    """A synthetic record references a parent seed absent from the manifest."""


class UnacceptedCandidate(ManifestError):
    """A candidate outside the finalized selection was offered for registration."""


# ---- splitter ----

class SplitError(DermaugError):
    pass


class InsufficientPool(SplitError):
    """Fewer eligible records than requested; message reports the shortfall."""


class InsufficientSynthetics(SplitError):
    """Accepted synthetic pool smaller than the requested dose."""


class SeedGroupMismatch(SplitError):
    """Seed records drawn from the wrong skin-type extreme."""


# ---- generation client ----

class GenerationError(DermaugError):
    pass


class VocabularyViolation(GenerationError):
    """Prompt part outside its closed vocabulary."""


class InvalidRequest(GenerationError):
    pass


class PromptParseError(GenerationError):
    pass


class BackendError(GenerationError):
    pass


class BackendAuthError(BackendError):
    """Terminal: credentials rejected, never retried."""


class BackendRateLimited(BackendError):
    """Transient: retried with backoff until the attempt cap."""


class BackendUnavailable(BackendError):
    """Transient network or 5xx failure; retried like a rate limit."""


class ContentRejected(BackendError):
    """Backend refused the prompt; recorded, not retried."""


# ---- curation ----

class CurationError(DermaugError):
    pass


class UnknownCandidate(CurationError):
    pass


class InvalidReview(CurationError):
    """Malformed review, e.g. a rejection without a reason."""


class QuotaExceeded(CurationError):
    """A fifth acceptance for one seed."""


class ManifestFinalized(CurationError):
    """No edits after a selection is exported."""


class IncompleteSelection(CurationError):
    """Export attempted while some seed lacks exactly 4 accepted candidates."""

    def __init__(self, message: str, shortfalls: dict[str, int] | None = None):
        super().__init__(message)
        self.shortfalls = dict(shortfalls or {})


# ---- trainer ----

class TrainerError(DermaugError):
    pass


class MissingPayload(TrainerError):
    pass


class PayloadDecodeError(TrainerError):
    pass


class EmptyClass(TrainerError):
    pass


class DegenerateLabels(TrainerError):
    pass


class ConfigError(TrainerError):
    pass


# ---- evaluator ----

class EvalError(DermaugError):
    pass


class LengthMismatch(EvalError):
    pass


class InvalidN(EvalError):
    pass


class MissingPredictions(EvalError):
    """Predictions do not cover every test record; message lists uncovered ids."""

    def __init__(self, message: str, missing_ids: list[str] | None = None):
        super().__init__(message)
        self.missing_ids = list(missing_ids or [])


# ---- cli ----

class PipelineError(DermaugError):
    pass


class MissingInput(PipelineError):
    """A stage's input artifact is absent (exit code 2)."""


class DigestMismatch(PipelineError):
    """Artifacts from different pipeline configs offered to one report."""
