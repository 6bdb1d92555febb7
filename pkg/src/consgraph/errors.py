"""Exception types shared across the package."""


class ConsgraphError(Exception):
    """Base class for all package errors."""


class EmptyResponse(ConsgraphError):
    """A response text is empty after trimming."""


class EmptySequence(ConsgraphError):
    """An alignment input sequence has no tokens."""


class DuplicateResponse(ConsgraphError):
    """A response index is already present in the graph."""


class TooShort(ConsgraphError):
    """A response has fewer tokens than the requested quantile count."""


class JudgeParseError(ConsgraphError):
    """The remote judge reply could not be parsed after retries."""


class JudgeTransportError(ConsgraphError):
    """The judge service could not be reached."""


class RegionJudgeError(ConsgraphError):
    """Judging a disagreement region failed; carries the region identity."""

    def __init__(self, left: str, right: str, cause: Exception):
        super().__init__(f"judge failed for region {left!r} -> {right!r}: {cause}")
        self.left = left
        self.right = right
        self.cause = cause
