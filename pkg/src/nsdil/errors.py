"""Exception types shared across the package.

Each carries a short ``code`` used by the command line to print
``error-code: message`` lines.
"""


class NsdError(Exception):
    code = "error"


class ContractError(NsdError, ValueError):
    """An argument violates an operation's precondition."""

    code = "contract"


class FormatError(NsdError, ValueError):
    """A file is malformed, truncated, or of an unsupported kind."""

    code = "format"


class InvariantError(FormatError):
    """A loaded object parses but violates a data invariant."""

    code = "invariant"


class NumericError(NsdError, ArithmeticError):
    code = "numeric"


class DegenerateSpectrumError(NumericError):
    code = "degenerate-spectrum"


class InputError(NsdError):
    """Missing or empty user-supplied input (e.g. an image directory)."""

    code = "input"
