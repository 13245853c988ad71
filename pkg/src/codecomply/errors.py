"""Shared exception types."""


class CodecomplyError(Exception):
    """Base class for library errors."""


class CorpusError(CodecomplyError, ValueError):
    """Invalid corpus data or corpus-level invariant violation."""


class TokenizerError(CodecomplyError, ValueError):
    """Vocabulary training or serialization failure."""


class EncodingError(CodecomplyError, ValueError):
    """Encoder cannot produce an embedding for the given input."""


class DegenerateMaskError(EncodingError):
    """Facet mask column is all zeros; normalization undefined."""


class TrainingError(CodecomplyError, RuntimeError):
    """Training cannot proceed (degenerate corpus, non-finite loss, ...)."""


class StaleIndexError(CodecomplyError, ValueError):
    """Index model hash does not match the supplied parameters."""


class ConfigError(CodecomplyError, ValueError):
    """Invalid or unknown configuration fields."""
