"""Exception types shared across the package."""


class NFramesError(Exception):
    """Base class for all package errors."""


class DomainError(NFramesError, ValueError):
    """A point or argument lies outside the admissible domain."""


class ImmersionError(NFramesError):
    """The map is not an immersion at some node (W <= 0)."""


class FrameError(NFramesError):
    """A normal frame could not be built or violates its invariants."""


class NonConformalError(NFramesError):
    """A conformal-only formula was applied to non-conformal data."""


class CompatibilityError(NFramesError):
    """Neumann data violate the compatibility condition."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


class SolverError(NFramesError):
    """An iterative solve failed to reach its tolerance."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class GaugeError(NFramesError):
    """A rotation field is not in SO(n)."""


class NotFlatError(NFramesError):
    """The normal bundle has curvature, so no torsion-free frame exists."""

    def __init__(self, message, curvature_sup):
        super().__init__(message)
        self.curvature_sup = curvature_sup


class ConfigError(NFramesError):
    """A run configuration is malformed."""
