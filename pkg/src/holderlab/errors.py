"""Exception types shared across the package.

Every failure mode that callers are expected to catch gets its own class
here, so tests and the CLI can name them without importing the module
that raised them.
"""


class HolderLabError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(HolderLabError):
    """A matrix expected to be SPD produced a non-positive pivot.

    For assembled systems this signals a coefficient outside the
    ellipticity cone or a broken mean-value constraint row.
    """


class DimensionMismatch(HolderLabError):
    """Operands have incompatible shapes."""


class ToleranceNotReached(HolderLabError):
    """Adaptive quadrature hit its recursion-depth cap."""


class IncompatibleSubdivision(HolderLabError):
    """Mesh subdivision count does not align with the partition grid."""


class EmptyPatch(HolderLabError):
    """The measured boundary patch contains no mesh edge."""


class PatchTooSmall(HolderLabError):
    """The patch has no interior node, so no displacement basis exists."""


class CellCountMismatch(HolderLabError):
    """Parameter tuple length differs from the partition cell count."""


class BasisMismatch(HolderLabError):
    """Two operators do not share the same boundary basis / Gram."""


class IndexOutOfRange(HolderLabError):
    """A basis index lies outside the operator dimension."""


class DegenerateSample(HolderLabError):
    """A sample pair has operator distance zero, so no ratio exists."""


class InsufficientSpread(HolderLabError):
    """Records span fewer than two decades of delta_F; no fit possible."""


class ConfigError(HolderLabError):
    """Experiment configuration failed validation.

    Carries the offending field name so the CLI can point at it.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
