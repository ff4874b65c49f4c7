"""
Exception hierarchy for dprompt.

Every error raised by the library derives from DPromptError so callers
(and the CLI) can map failures to exit codes without string matching.
"""


class DPromptError(Exception):
    """Base class for all dprompt errors."""
    pass


class ShapeError(DPromptError, ValueError):
    """Invalid tensor shape or dimension mismatch."""
    pass


class EvaluationError(DPromptError):
    """A value became non-finite (NaN/Inf) during evaluation."""
    pass


class TapeError(DPromptError):
    """Misuse of gradient tapes (mixed tapes, unknown sources)."""
    pass


class DegenerateDecompositionError(DPromptError):
    """Decomposition requested without prompt tokens."""
    pass


class ConfigError(DPromptError, ValueError):
    """Invalid configuration value, key or mode."""

    def __init__(self, message: str, keys=None):
        super().__init__(message)
        self.keys = list(keys or [])


class PromptStateError(DPromptError):
    """Prompt flow state is inconsistent (e.g. carried prompts missing)."""
    pass


class TemplateError(DPromptError, ValueError):
    """Template does not contain exactly one class slot."""
    pass


class MetricDomainError(DPromptError, ValueError):
    """Metric called with values outside its domain."""
    pass


class TrainingDivergedError(DPromptError):
    """Loss or gradients became non-finite during training."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = dict(trace or {})


class BankFormatError(DPromptError):
    """Serialized prompt bank is corrupt or has an unknown layout."""
    pass


class VerificationError(DPromptError):
    """An invariant check failed."""
    pass
