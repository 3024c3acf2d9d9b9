"""Exception types shared across the package.

The CLI maps these onto process exit codes, so raising the right class
matters: ValidationError -> 2, ConvergenceError -> 3, ModelMismatchError -> 4.
"""


class ModcovError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(ModcovError):
    """Bad input data, options, or dimensions."""

    exit_code = 2


class ConvergenceError(ModcovError):
    """A fit diverged or was required to converge and did not."""

    exit_code = 3


class ModelMismatchError(ModcovError):
    """A stored model cannot be applied to the given data."""

    exit_code = 4


class StratificationError(ValidationError):
    """Scores cannot be split into the requested groups."""
