"""Exception types raised by the library."""


class AnosovFlowsError(Exception):
    """Base class for all library errors."""


class DegreeError(AnosovFlowsError, ValueError):
    """A form operation would leave degrees 0..3."""


class DegenerateVolumeError(AnosovFlowsError):
    """A volume form vanishes at an evaluated point."""


class DegenerateContactError(AnosovFlowsError):
    """A 1-form fails to be contact where a Reeb field was requested."""


class ModelError(AnosovFlowsError, ValueError):
    """Invalid model parameters or a degenerate model construction."""


class FlowError(AnosovFlowsError):
    """The flow cannot be integrated (e.g. the generator vanishes)."""


class FrameError(AnosovFlowsError):
    """A frame or splitting is degenerate or violates its normalization."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ReebInclusionError(FrameError):
    """A Reeb field fails to lie in the companion contact structure."""


class ConvergenceError(AnosovFlowsError):
    """Power iteration for an invariant line did not converge."""

    def __init__(self, message, last_delta=float("nan")):
        super().__init__(message)
        self.last_delta = last_delta


class OrbitError(AnosovFlowsError):
    """A declared periodic orbit does not close."""


class ConfigError(AnosovFlowsError, ValueError):
    """Malformed or invalid run configuration."""
