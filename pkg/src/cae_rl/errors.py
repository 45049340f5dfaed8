"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes disagree with what a layer or table expects."""


class ConfigurationError(ValueError):
    """Invalid hyperparameters or structural configuration."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class ImpossibleEvidenceError(ValueError):
    """An observation window has zero likelihood under the prior."""


class ValidationError(ValueError):
    """An input file or table violates a probability invariant."""


class NotReadyError(RuntimeError):
    """Replay buffer holds fewer transitions than requested."""


class UsageError(RuntimeError):
    """Environment stepped after its episode ended."""


class OracleSizeError(ValueError):
    """Brute-force enumeration would exceed its term budget."""
