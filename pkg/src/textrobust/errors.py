"""Exception types shared across the toolkit."""


class TextRobustError(Exception):
    """Base class for all toolkit errors."""


class EmptyInputError(TextRobustError):
    """An operation that requires at least one token received none."""


class PositionError(TextRobustError):
    """A character edit position is out of range for its target token."""


class ConfigError(TextRobustError):
    """Invalid configuration value, precondition, or artifact wiring."""


class MisclassifiedInputError(TextRobustError):
    """An attack was asked to perturb a document the model already misclassifies."""


class NoAdversarialExamplesError(TextRobustError):
    """The generation attack produced zero successes; an abstain set cannot be empty."""


class EmptyPopulationError(TextRobustError):
    """No evaluation-eligible documents (the model misclassifies the whole split)."""


class SchemaError(TextRobustError):
    """A persisted artifact failed schema validation."""


class ArtifactVersionError(SchemaError):
    """A persisted artifact carries an unsupported format version."""


class UndefinedCorrelationError(TextRobustError):
    """Pearson correlation is undefined (length mismatch, <2 points, or zero variance)."""
