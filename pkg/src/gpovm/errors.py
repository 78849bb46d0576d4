"""Exception types raised by the package."""


class GpovmError(Exception):
    """Base class for all package errors."""


class NotPositive(GpovmError):
    """An operator required to be PSD has a negative eigenvalue beyond tolerance."""


class NotAState(GpovmError):
    """Expected a density operator (PSD, unit trace)."""


class DimensionMismatch(GpovmError):
    """Operands live on incompatible spaces."""


class EmptySection(GpovmError):
    """The proposed spanning subspace contains no PSD trace-one element."""


class InvalidCompression(GpovmError):
    """Compression projection does not dominate the maximal support of the section."""


class Infeasible(GpovmError):
    """A spectrahedron turned out to contain no PSD point."""


class SectionMismatch(GpovmError):
    """Two measurement objects refer to different sections."""


class NotInSection(GpovmError):
    """A state handed to apply() is not an element of the section."""


class NotATester(GpovmError):
    """Element sum of the family is not of the form I (x) sigma."""


class SigmaSingular(GpovmError):
    """The operation requires a full-rank sigma; compress first."""


class WrongShape(GpovmError):
    """Fast-path routine called outside its dimension/outcome regime."""


class CrossCheckDisagreement(GpovmError):
    """Two independent engines disagreed on the same instance (a bug trap)."""
