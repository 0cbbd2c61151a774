"""Equal-weight particle approximation of filtering SPDEs.

The heavy lifting lives in the C++ core; this package re-exports the bound
operations: Brownian records and their mollification, model validation, the
interaction operator, the interacting-particle run, the weighted baseline and
the oracles.
"""

from ._core import (
    ConfigError,
    NumericError,
    choose_delta,
    fd_solve,
    fkac_mollified,
    kalman_bucy,
    lambda_1d,
    lambda_check,
    m_norm,
    modulus,
    run_mkv,
    run_weighted,
    sample_brownian,
    validate_model,
)

__all__ = [
    "ConfigError",
    "NumericError",
    "choose_delta",
    "fd_solve",
    "fkac_mollified",
    "kalman_bucy",
    "lambda_1d",
    "lambda_check",
    "m_norm",
    "modulus",
    "run_mkv",
    "run_weighted",
    "sample_brownian",
    "validate_model",
]
