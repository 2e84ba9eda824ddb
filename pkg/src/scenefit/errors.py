"""Exception taxonomy shared by every scenefit module."""

from __future__ import annotations


class ScenefitError(Exception):
    """Base class for all errors raised by scenefit."""


# -- datasets -----------------------------------------------------------------


class DatasetError(ScenefitError):
    pass


class MalformedRecord(DatasetError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class MissingImage(DatasetError):
    def __init__(self, path, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}image not found: {path}")
        self.path = path
        self.line = line


class UnknownCategory(DatasetError, ValueError):
    def __init__(self, name: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}unknown category {name!r}")
        self.name = name
        self.line = line


class MalformedAnnotationFile(DatasetError):
    pass


# -- backends -----------------------------------------------------------------


class BackendError(ScenefitError):
    pass


class UnscriptedPrompt(BackendError):
    def __init__(self, prompt: str):
        super().__init__(f"no scripted response for prompt: {prompt[:120]!r}")
        self.prompt = prompt


class AmbiguousScript(BackendError):
    pass


class Timeout(BackendError):
    pass


class RateLimited(BackendError):
    pass


class ProviderError(BackendError):
    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class DetectorFailure(BackendError):
    pass


class NormViolation(ScenefitError, ValueError):
    pass


# -- response parsing ---------------------------------------------------------


class ResponseError(ScenefitError):
    """A model answer could not be turned into the expected structure."""


class EmptyTaxonomy(ScenefitError, ValueError):
    pass


class UnparseableResponse(ResponseError):
    pass


class EmptyResponse(ResponseError):
    pass


class MultiLineResponse(ResponseError):
    pass


class NoListedObject(ResponseError):
    pass


class UnparseableRating(ResponseError):
    pass


# -- geometry / compositing ---------------------------------------------------


class EmptyInput(ScenefitError, ValueError):
    pass


class EmptyObjectPhrase(ScenefitError, ValueError):
    pass


class AllBackground(ScenefitError):
    pass


class DegenerateBox(ScenefitError, ValueError):
    pass


class NoOverlap(ScenefitError, ValueError):
    pass


class BoxOutOfBounds(ScenefitError, ValueError):
    pass


class NonConvergence(ScenefitError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(f"no convergence after {sweeps} sweeps (residual {residual:.3g})")
        self.sweeps = sweeps
        self.residual = residual


class EmptyCandidates(ScenefitError, ValueError):
    pass


class EmptyMask(ScenefitError, ValueError):
    pass


# -- evaluation ---------------------------------------------------------------


class EmptyMatrix(ScenefitError, ValueError):
    pass


class LengthMismatch(ScenefitError, ValueError):
    pass


class EmptyRun(ScenefitError, ValueError):
    pass


class MisalignedInputs(ScenefitError, ValueError):
    pass


# -- pipeline / cli -----------------------------------------------------------


class ConfigError(ScenefitError):
    pass


class StageError(ScenefitError):
    """Wraps an error raised inside a pipeline stage, tagged with the stage."""

    def __init__(self, stage, cause: BaseException):
        super().__init__(f"stage {stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
