"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration and shape problems
exit 2, dataset problems exit 3, numeric failures exit 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value (dimensions, ratios, toggles, keys)."""


class DataError(ValueError):
    """Dataset violates the format contract (missing file, bad counts, NaN)."""


class DimensionError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""
