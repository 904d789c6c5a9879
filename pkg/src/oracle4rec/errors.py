"""Exception types shared across the package."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EngineError):
    """Malformed input file (message names the offending line)."""


class DataError(EngineError):
    """Dataset-level violation: empty input, short sequence, exhausted sampler."""


class ConfigError(EngineError):
    """Invalid or inconsistent configuration value (message names the key)."""


class NumericError(EngineError):
    """Non-finite values or shape mismatch in a numeric operation."""


class EvalError(EngineError):
    """Evaluation-protocol violation (truth not in candidates, missing categories)."""
