"""Exception hierarchy shared by every sign-latent-tools module.

The CLI catches ``SignLatentError`` and turns it into a red status line and a
non-zero exit code; library callers can catch the narrower subclasses.
"""


class SignLatentError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SignLatentError):
    """Raised when operands of a tensor op have incompatible shapes."""

    def __init__(self, op: str, left: tuple[int, ...], right: tuple[int, ...] | None = None, detail: str = ""):
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right) if right is not None else None
        shapes = f"{self.left}" if self.right is None else f"{self.left} and {self.right}"
        message = f"{op}: incompatible shapes {shapes}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class DomainError(SignLatentError):
    """Raised when an op is evaluated outside its mathematical domain."""


class BackwardError(SignLatentError):
    """Raised when backward() is called on something other than a scalar loss."""


class ConfigError(SignLatentError):
    """Raised for configuration values that pass the schema but are unusable."""


class DegenerateFrameError(SignLatentError):
    """Raised when a pose frame cannot be normalized (shoulder width ~ 0)."""

    def __init__(self, frame_index: int, width: float):
        self.frame_index = frame_index
        self.width = width
        super().__init__(f"degenerate frame {frame_index}: shoulder width {width:.3e} is below 1e-8")


class PoseFormatError(SignLatentError):
    """Raised when a pose file or pose array violates the pose format contract."""


class CheckpointError(SignLatentError):
    """Raised when a checkpoint file is missing, truncated or malformed."""


class ArchitectureMismatchError(CheckpointError):
    """Raised when a checkpoint's architecture disagrees with the requested config."""


class TrainingDivergenceError(SignLatentError):
    """Raised when a loss or activation becomes non-finite."""

    def __init__(self, message: str, diagnostics: dict[str, object] | None = None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{key}={value}" for key, value in self.diagnostics.items())
            message = f"{message} [{details}]"
        super().__init__(message)


class BoostInvariantError(SignLatentError):
    """Raised when the dynamic hand-weight state leaves [1, s_max]."""


class EvaluationError(SignLatentError):
    """Raised for invalid evaluation inputs (empty sequences, unmatched ids)."""


class UnknownTokenError(SignLatentError):
    """Raised when a token id is outside the corpus vocabulary."""
