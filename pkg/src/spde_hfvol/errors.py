"""Exception and warning types shared across the package."""


class SpdeHfvolError(Exception):
    """Base class for all package errors."""


class ConstraintViolation(SpdeHfvolError, ValueError):
    """A model or sampling invariant does not hold."""


class DomainError(SpdeHfvolError, ValueError):
    """A special function or helper was called outside its domain."""


class TruncationNotConverged(SpdeHfvolError, ArithmeticError):
    """An infinite series did not reach its tolerance within the term cap."""


class UnsupportedSpec(SpdeHfvolError, ValueError):
    """No evaluation route exists for the requested functional."""


class SpecMismatch(SpdeHfvolError, ValueError):
    """A functional's shape does not match the observed path."""


class TooFewIncrements(SpdeHfvolError, ValueError):
    pass


class DegenerateDenominator(SpdeHfvolError, ArithmeticError):
    """A realized variation used as a denominator is zero."""


class RatioOutOfDomain(SpdeHfvolError, ValueError):
    """The correlation ratio fed to the log transform is <= -1."""


class EmbeddingNotPSD(SpdeHfvolError, ArithmeticError):
    pass


class StabilityViolation(SpdeHfvolError, ValueError):
    """The finite-difference grid breaks a stability or layout constraint."""


class NonFiniteState(SpdeHfvolError, ArithmeticError):
    pass


class IngestError(SpdeHfvolError, ValueError):
    pass


class IrregularGrid(IngestError):
    pass


class MissingValue(IngestError):
    pass


class HeaderMalformed(IngestError):
    pass


class CltHypothesisWarning(UserWarning):
    """Weights outside the range where the central limit theorem is available."""
