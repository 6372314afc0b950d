"""Exception types shared across the package."""


class DegenerateAngleError(ValueError):
    """Raised when a moire quantity is requested at theta = 0."""


class DegenerateBandError(RuntimeError):
    """Raised when a band-resolved quantity is requested at a band crossing."""


class ContainmentError(RuntimeError):
    """Raised when a wave-packet is not contained in its box or ball."""


class DimensionMismatchError(ValueError):
    """Raised when a state and an operator live on different site tables."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative method exceeds its resource cap."""


class InfeasibleRadiusError(RuntimeError):
    """Raised when no truncation radius below the cap meets the error target."""
