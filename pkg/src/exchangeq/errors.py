"""Exception hierarchy.

Three families map onto the CLI exit codes: :class:`ConfigError` (2),
:class:`ValidationError` and :class:`ShapeError` (3), :class:`InferenceError` (4).
"""


class ExchangeQError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(ExchangeQError, ValueError):
    """A constructor invariant does not hold.

    ``invariant`` names the violated property and ``magnitude`` carries the
    measured violation, so reports can say how far off the input was.
    """

    invariant = "invariant"

    def __init__(self, message, magnitude=None):
        super().__init__(message)
        self.magnitude = magnitude


class NotHermitian(ValidationError):
    invariant = "hermitian"


class TraceNotOne(ValidationError):
    invariant = "unit_trace"


class NotPositive(ValidationError):
    invariant = "positive_semidefinite"


class EffectOutOfRange(ValidationError):
    invariant = "effect_bounds"


class PovmNotComplete(ValidationError):
    invariant = "povm_completeness"


class DuplicateLabel(ValidationError):
    invariant = "unique_labels"


class NotNormalized(ValidationError):
    invariant = "unit_norm"


class NotTracePreserving(ValidationError):
    invariant = "trace_preserving"


class NotOrthonormal(ValidationError):
    invariant = "orthonormal"


class ProbabilityOutOfRange(ValidationError):
    invariant = "probability_range"


class BadWeights(ValidationError):
    invariant = "mixture_weights"


class NotStochastic(ValidationError):
    invariant = "column_stochastic"


class InvalidSystem(ValidationError):
    invariant = "gpt_system"


class BadSpec(ValidationError):
    invariant = "prior_spec"


class UnsupportedGrid(BadSpec):
    invariant = "grid_dimension"


class ShapeError(ExchangeQError, ValueError):
    """Operands have incompatible shapes or belong to different systems."""


class DimensionMismatch(ShapeError):
    pass


class LengthMismatch(ShapeError):
    pass


class ShapeMismatch(ShapeError):
    pass


class SystemMismatch(ShapeError):
    pass


class InferenceError(ExchangeQError):
    """Failure while evaluating predictive probabilities or posteriors."""


class UnknownMeasurement(InferenceError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ZeroProbabilityOutcome(InferenceError):
    pass


class AllWeightsZero(InferenceError):
    pass


class BadPermutation(InferenceError, ValueError):
    pass


class ModelMismatch(InferenceError, TypeError):
    pass


class ConfigError(ExchangeQError):
    """Scenario file violates the schema; ``pointer`` is a JSON pointer."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
