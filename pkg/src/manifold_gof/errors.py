"""Semantic exception hierarchy shared across the package."""


class ManifoldGofError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(ManifoldGofError, ValueError):
    """A data argument is malformed (non-finite, wrong shape, empty)."""


class InvalidParameterError(ManifoldGofError, ValueError):
    """A configuration parameter is outside its valid domain."""


class InvalidModelError(ManifoldGofError, ValueError):
    """A model object violates its structural invariants (e.g. degenerate
    linear part)."""


class UnderdeterminedModelError(ManifoldGofError, ValueError):
    """The model order saturates the observations; the test has nonpositive
    degrees of freedom."""


class NonpositiveDofError(UnderdeterminedModelError):
    """Requested test would have dof <= 0."""


class InvalidPairingError(ManifoldGofError, ValueError):
    """Two test reports being compared were not computed from the same
    observation set."""


class NumericalFailureError(ManifoldGofError, RuntimeError):
    """A numerical kernel failed (SVD non-convergence, non-finite map
    evaluation)."""
