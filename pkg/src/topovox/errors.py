"""Exception taxonomy shared across the toolkit."""


class TopovoxError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeError(TopovoxError):
    """Tensor shapes or dtypes are structurally inconsistent."""


class FormatError(TopovoxError):
    """On-disk sample data cannot be decoded. Carries a stable code."""

    code = "format"


class VersionError(FormatError):
    code = "version_mismatch"


class TruncatedTensorError(FormatError):
    code = "truncated_tensor"


class ChecksumError(FormatError):
    code = "checksum_failure"


class ManifestError(FormatError):
    code = "manifest"


class SingularSystemError(TopovoxError):
    """No Dirichlet constraint anywhere: the stiffness operator has rigid modes."""


class ConvergenceError(TopovoxError):
    """Iterative solve did not reach the requested residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BisectionError(TopovoxError):
    """Volume-constraint bisection could not bracket or converge."""


class NotFittedError(TopovoxError):
    """Preprocessing config used before normalization constants were fitted."""


class NormalizationError(TopovoxError):
    """Normalization constants are degenerate (e.g. all-zero forces)."""


class GroupActionError(TopovoxError):
    """Grid dimensions are incompatible with the requested symmetry action."""


class PredictorError(TopovoxError):
    """A wrapped predictor call failed; message names the group element."""


class ExternalPredictorError(PredictorError):
    """Base for failures of subprocess-backed predictors."""


class ExternalTimeoutError(ExternalPredictorError):
    pass


class ExternalExitError(ExternalPredictorError):
    pass


class MalformedOutputError(ExternalPredictorError):
    pass


class EvaluationError(TopovoxError):
    """A metric could not be computed (distinct from a 'failed' verdict)."""
