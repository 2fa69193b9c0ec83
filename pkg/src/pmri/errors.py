"""Exception and warning types shared across the toolkit."""


class PmriError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(PmriError):
    """Operands have inconsistent dimensions."""


class ConstantImage(PmriError):
    """Image has zero dynamic range; min-max normalization is undefined."""


class BadDims(PmriError):
    """Requested geometry is invalid (non-positive, too small, out of range)."""


class DimsNotDivisible(PmriError):
    """Network input dimensions are not divisible by 2**depth."""


class AcsNotSampled(PmriError):
    """The auto-calibration block is not fully sampled in the given mask."""


class NonFiniteGradient(PmriError):
    """A gradient vector contains NaN or Inf."""


class Divergence(PmriError):
    """Training loss became non-finite."""


class TooSmall(PmriError):
    """Input smaller than the metric window."""


class MissingParams(PmriError):
    """A learned-method evaluation was requested without a checkpoint."""


class BadFile(PmriError):
    """File is not a valid toolkit artifact (bad magic, truncated payload)."""


class BadConfig(PmriError):
    """Run configuration is malformed or internally inconsistent."""


class IllConditioned(UserWarning):
    """Unfolding system condition number exceeds the safe threshold."""
