"""Package-specific exception types."""


class SingularCovarianceError(RuntimeError):
    """Lag covariance matrix could not be factorized (not PSD)."""


class SingularFisherError(RuntimeError):
    """Fisher information is singular; the bound is undefined, not patched."""
