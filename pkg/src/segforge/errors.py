"""Exception hierarchy shared across the package."""


class SegforgeError(Exception):
    """Base class for all package errors."""


class ShapeError(SegforgeError):
    """Tensor shapes or dimensions violate an operation's contract."""


class NumericalError(SegforgeError):
    """Non-finite values or numerically invalid state."""


class GraphError(SegforgeError):
    """Autodiff tape misuse, e.g. backward through released activations."""


class DataError(SegforgeError):
    """Dataset layout, mask palette, or sample consistency problems."""


class ConfigError(SegforgeError):
    """Invalid or inconsistent run configuration."""


class CheckpointError(SegforgeError):
    """Checkpoint file corruption or model/checkpoint mismatch."""
