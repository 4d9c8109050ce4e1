"""Exception types shared across the pipeline.

Each class corresponds to one named error condition of the public API;
callers that need to branch on a condition catch the class rather than
matching message text.
"""


class GlitchScopeError(Exception):
    """Base class for all package errors."""


class UnreadableSourceError(GlitchScopeError):
    """The video container could not be opened or decoded."""


class ZeroLengthError(GlitchScopeError):
    """Decoding produced no sampled frames."""


class EmptySequenceError(GlitchScopeError):
    """A frame sequence with no frames was passed where one is required."""


class LayoutTooSmallError(GlitchScopeError):
    """The grid layout has fewer cells than the window has frames."""


class BadRegionError(GlitchScopeError):
    """Unknown region name or degenerate crop box."""


class BackendUnavailableError(GlitchScopeError):
    """Transport to the model backend failed after the retry budget."""


class CassetteMissError(GlitchScopeError):
    """Replay could not find a recorded response for a request digest."""


class ParseFailureError(GlitchScopeError):
    """Model text contained no balanced JSON object or failed schema checks."""


class ToolFailureError(GlitchScopeError):
    """An investigation tool failed; captured inside the observation."""


class TrackerUnavailableError(ToolFailureError):
    """The tracker backend could not be reached."""


class EmptyTrackError(GlitchScopeError):
    """The tracked object was never found in any frame."""


class TooShortError(GlitchScopeError):
    """Trajectory has fewer than two present points."""


class InconsistentInputError(GlitchScopeError):
    """An assignment references indices outside the score matrix."""
