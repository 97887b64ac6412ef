"""Exception hierarchy shared across the pipeline stages."""


class CaseSimError(Exception):
    """Base class for all package errors."""


class DataError(CaseSimError):
    """Input data violates a contract (CLI exit code 4)."""


class MissingField(DataError):
    def __init__(self, name):
        super().__init__(f"missing field: {name}")
        self.name = name


class MalformedRecord(DataError):
    pass


class AmbiguousSection(DataError):
    pass


class OverlappingSpans(DataError):
    pass


class MissingPrior(CaseSimError):
    pass


class ProviderError(CaseSimError):
    """Transport-level failure of an LLM provider."""


class BackendUnavailable(CaseSimError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class ZeroVector(DataError):
    pass


class EmptyCase(DataError):
    pass


class DegenerateClass(DataError):
    pass


class InvalidSpec(CaseSimError):
    pass


class EmptySplit(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    """Raised for empty inputs where at least one value is required."""


class EmptyReference(DataError):
    pass


class ConfigError(CaseSimError):
    """Bad configuration (CLI exit code 2)."""


class MissingArtifact(CaseSimError):
    """A prerequisite stage has not been run (CLI exit code 3)."""

    def __init__(self, stage, detail=""):
        msg = f"missing artifact from stage {stage!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.stage = stage
