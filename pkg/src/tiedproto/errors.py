"""Exception taxonomy shared across the package.

Validation errors signal bad in-memory values or arguments (CLI exit code 2);
format errors signal unreadable or corrupt files (CLI exit code 3, together
with OSError).
"""


class TiedProtoError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TiedProtoError):
    """A value violates a documented invariant or precondition."""


class ZeroVector(ValidationError):
    """A vector with norm below 1e-12 cannot be projected onto the sphere."""


class DimensionMismatch(ValidationError):
    """Grid/vector shapes are incompatible."""


class InvalidTarget(ValidationError):
    """Resampling target size is out of range for the operation."""


class EmptyMask(ValidationError):
    """Mask selects no pixels, so no prototype can be pooled."""


class TooFewPoints(ValidationError):
    """Fewer data points than mixture components requested."""


class DegenerateComponent(ValidationError):
    """A mixture component lost all responsibility and could not be restarted."""


class DegeneratePriors(ValidationError):
    """Class priors are 0 or 1 where the formula requires an interior value."""


class CountOutOfRange(ValidationError):
    """Foreground count exceeds the number of available pixels."""


class NoBoundary(ValidationError):
    """No decision boundary exists: the foreground never reaches posterior 0.5."""


class EmptyRecords(ValidationError):
    """An estimator was given no episode records."""


class ConfigInvalid(ValidationError):
    """A configuration object violates its invariants."""


class FormatError(TiedProtoError):
    """Base class for binary file format violations."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class BadVersion(FormatError):
    """File declares an unsupported format version."""


class TruncatedPayload(FormatError):
    """File payload is shorter than its header declares."""


class NormViolation(FormatError):
    """Stored feature vectors are not unit-norm within the read tolerance."""
