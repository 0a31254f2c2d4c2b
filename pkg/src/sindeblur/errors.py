"""Exception types shared across the sindeblur modules."""


class InvalidInputError(ValueError):
    """Raised when an operation's preconditions are not met by its inputs."""


class ImageDecodeError(OSError):
    """Raised when an image file cannot be read or decoded."""

    def __init__(self, path: str, reason: str) -> None:
        """Initialize error message."""
        super().__init__(f"Cannot decode image {path}: {reason}")
        self.path = path


class InadmissibleIterationsError(InvalidInputError):
    """Raised when deblurring would shrink the input below the finest generator's size."""

    def __init__(self, k: int, max_k: int) -> None:
        """Initialize error message."""
        super().__init__(
            f"k_iterations={k} downscales the input below the trained minimum size; "
            f"the maximum admissible k is {max_k}"
        )
        self.k = k
        self.max_k = max_k


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite loss is encountered during training."""

    def __init__(self, scale: int, iteration: int, term: str) -> None:
        """Initialize error message."""
        super().__init__(f"Non-finite {term} at scale {scale}, iteration {iteration}")
        self.scale = scale
        self.iteration = iteration


class CheckpointError(OSError):
    """Raised when a checkpoint directory is missing files or cannot be parsed."""


class CheckpointVersionError(CheckpointError):
    """Raised when a checkpoint was written with an incompatible format version."""

    def __init__(self, found: object, expected: int) -> None:
        """Initialize error message."""
        super().__init__(
            f"Incompatible checkpoint format_version {found!r} (this build reads {expected})"
        )


class ConfigError(ValueError):
    """Raised for unknown keys, malformed values or failed validation in a run config."""
