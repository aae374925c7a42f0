"""Exception types raised across the library."""


class ToroidalError(Exception):
    """Base class for all library-specific errors."""


class ZeroVectorError(ToroidalError, ValueError):
    """A vector with (near-)zero norm was given where a direction is required."""


class ZeroPairError(ToroidalError, ValueError):
    """A coordinate pair with (near-)zero norm cannot be projected.

    ``pair_index`` is the zero-based index of the first offending pair.
    """

    def __init__(self, pair_index: int, message: str | None = None):
        self.pair_index = int(pair_index)
        super().__init__(message or f"coordinate pair {pair_index} has zero norm")


class DimensionMismatchError(ToroidalError, ValueError):
    """Operands have incompatible dimensionality."""


class BitWidthMismatchError(ToroidalError, ValueError):
    """Integer codes do not fit the declared bit width."""


class IncompatibleGeometryError(ToroidalError, ValueError):
    """Distance kind or operation is not defined for the operand geometry."""


class AccumulatorOverflowError(ToroidalError, OverflowError):
    """An integer distance accumulation would overflow its 64-bit accumulator."""


class TooFewPointsError(ToroidalError, ValueError):
    """Not enough training points for the requested codebook size."""


class IndivisibleDimensionError(ToroidalError, ValueError):
    """Vector dimension is not divisible by the subspace count."""


class BatchTooSmallError(ToroidalError, ValueError):
    """A batch operation needs at least two items."""


class DuplicatePointsError(ToroidalError, ValueError):
    """Coincident points make a nearest-neighbour gradient undefined."""


class EmptySetError(ToroidalError, ValueError):
    """An operation was applied to an empty embedding set."""


class MissingLabelsError(ToroidalError, ValueError):
    """The operation requires labels but the set has none."""


class KTooLargeError(ToroidalError, ValueError):
    """Requested more neighbours than the index contains."""


class InsufficientSupportError(ToroidalError, ValueError):
    """A class has fewer support candidates than the requested shot count."""


class FileFormatError(ToroidalError):
    """A persisted file does not follow the expected binary layout."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(FileFormatError):
    """File ends before the payload declared in its header."""


class InvariantViolationError(ToroidalError, ValueError):
    """Data violates the invariants of its declared geometry or encoding."""
