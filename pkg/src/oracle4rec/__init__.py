"""Sequential recommendation with future-guided training.

Two identically shaped encoders (FFT noise filtering + causal self-attention)
read the history window and a window extending past the target; an
oracle-guiding loss pulls the history-side prediction toward the
future-side embeddings during a two-phase training schedule.  Inference
uses the history encoder alone.
"""

from .errors import (
    ConfigError,
    DataError,
    EngineError,
    EvalError,
    NumericError,
    ParseError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "EngineError",
    "EvalError",
    "NumericError",
    "ParseError",
    "__version__",
]
