"""Exception and warning classes shared across the package."""


class SATAError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SATAError, ValueError):
    """Input failed a contract check (exit code 1 in the CLI)."""


# --- BVH -------------------------------------------------------------------


class BVHError(ValidationError):
    """Malformed BVH input. ``line`` is 1-based, or None when not applicable."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BVHSyntaxError(BVHError):
    pass


class UnbalancedBraces(BVHError):
    pass


class UnknownChannel(BVHError):
    pass


class FrameCountMismatch(BVHError):
    pass


class NonPositiveFrameTime(BVHError):
    pass


# --- geometry / shapes -------------------------------------------------------


class DimensionMismatch(ValidationError):
    pass


class NonUnitQuaternion(ValidationError):
    pass


class DegenerateSixD(ValidationError):
    pass


class UnpairedSideJoint(ValidationError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("no left/right counterpart for: " + ", ".join(self.names))


class EmbeddingCountMismatch(ValidationError):
    pass


class MissingEmbedding(ValidationError, KeyError):
    def __init__(self, descriptions):
        self.descriptions = list(descriptions)
        ValueError.__init__(self, "missing embeddings for: " + "; ".join(map(repr, self.descriptions)))

    def __str__(self):
        return ValueError.__str__(self)


# --- autodiff ---------------------------------------------------------------


class ShapeMismatch(ValidationError):
    pass


class InvalidAxis(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class NonScalarLoss(ValidationError):
    pass


# --- model / training / inference -------------------------------------------


class CrossGraphEdge(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class NaNLoss(SATAError, FloatingPointError):
    def __init__(self, step):
        self.step = step
        super().__init__(f"non-finite loss at step {step}")


class InvalidConfig(ValidationError):
    pass


class ConfigError(ValidationError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SpanMismatch(ValidationError):
    pass


class SkeletonMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NonPositiveHeight(ValidationError):
    pass


class UnknownPreset(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass


# --- warnings ---------------------------------------------------------------


class SATAWarning(UserWarning):
    pass


class EmptyContactSet(SATAWarning):
    pass


class DescriptionFallback(SATAWarning):
    pass


class UnitGuessWarning(SATAWarning):
    pass


class DegenerateFacing(SATAWarning):
    pass
