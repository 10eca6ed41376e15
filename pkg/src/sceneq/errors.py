"""Exception types shared across the engine."""


class SceneqError(Exception):
    """Base class for all engine errors."""


class IngestError(SceneqError):
    """Dataset ingestion failed (missing file, malformed record, invariant violation)."""


class EmptyPopulationError(SceneqError):
    """A sampling request found no eligible units."""


class MaterializeError(SceneqError):
    """Materialization refused or failed."""


class PixelsUnavailableError(SceneqError):
    """A frame image was requested but the dataset stores no image for it."""


class QueryParseError(SceneqError):
    """DSL text could not be parsed into a valid query."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class UnresolvedPredicateError(SceneqError):
    """Execution was attempted with predicates missing from the registry."""


class NaiveSizeError(SceneqError):
    """The brute-force evaluator refused an input above its size guard."""


class RegistryError(SceneqError):
    """Duplicate registration or lookup of an unknown UDF."""


class SandboxError(SceneqError):
    """A program UDF failed inside the sandbox."""


class SandboxTimeout(SandboxError):
    pass


class SandboxBadReturn(SandboxError):
    """Program returned something other than a boolean."""


class GatewayError(SceneqError):
    """A model-client interaction failed after all retries."""


class LabelerSkip(SceneqError):
    """Raised by a labeler to decline labeling the offered unit."""


class LabelerError(SceneqError):
    """A labeler failed in a way that should skip the unit without consuming budget."""


class DegenerateLabelsError(SceneqError):
    """A collected training set contains only one class."""


class TrainingError(SceneqError):
    """Classifier training produced a non-finite loss."""
