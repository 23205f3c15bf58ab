"""Exception types shared across the package."""


class InputError(ValueError):
    """Rejected input: bad shapes, out-of-domain responses, invalid config."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value or failed to bracket a root."""
