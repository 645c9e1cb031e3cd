"""Exact fixed-point (integer) scalars and matrices with bitwidth tracking.

All datapath values are plain integers carried together with a declared
bitwidth and signedness. Results of arithmetic grow their width by the usual
rules (add: max + 1, mul: sum) and any value that does not fit its declared
width raises :class:`DatapathOverflowError` instead of wrapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# widest width that still round-trips through int64 arithmetic without loss
INT64_SAFE_WIDTH = 62


class ConfigurationError(ValueError):
    """Invalid configuration or mismatched operand properties."""


class DatapathOverflowError(ArithmeticError):
    """A value does not fit the bitwidth its datapath was sized for."""


def value_range(width: int, signed: bool = True) -> tuple[int, int]:
    if width < 1:
        raise ConfigurationError(f"width must be >= 1, got {width}")
    if signed:
        return -(1 << (width - 1)), (1 << (width - 1)) - 1
    return 0, (1 << width) - 1


def fits(value: int, width: int, signed: bool = True) -> bool:
    lo, hi = value_range(width, signed)
    return lo <= value <= hi


def clog2(n: int) -> int:
    """Ceiling of log2(n) for n >= 1 (0 for n == 1)."""
    if n < 1:
        raise ValueError(f"clog2 needs n >= 1, got {n}")
    return (n - 1).bit_length()


def dtype_for(width: int):
    """numpy dtype able to hold every value of the given width exactly."""
    return np.int64 if width <= INT64_SAFE_WIDTH else object


def check_array(values: np.ndarray, width: int, signed: bool = True, where: str = "") -> None:
    """Raise DatapathOverflowError if any element of ``values`` exceeds ``width``."""
    if values.size == 0:
        return
    lo, hi = value_range(width, signed)
    vmin = values.min()
    vmax = values.max()
    if vmin < lo or vmax > hi:
        bad = vmin if vmin < lo else vmax
        raise DatapathOverflowError(
            f"{where or 'value'} {int(bad)} does not fit {width}-bit "
            f"{'signed' if signed else 'unsigned'} range [{lo}, {hi}]"
        )


@dataclass(frozen=True)
class FxpScalar:
    value: int
    width: int
    signed: bool = True

    def __post_init__(self):
        if not isinstance(self.width, (int, np.integer)) or self.width < 1:
            raise ConfigurationError(f"width must be a positive integer, got {self.width!r}")
        object.__setattr__(self, "value", int(self.value))
        object.__setattr__(self, "width", int(self.width))
        if not fits(self.value, self.width, self.signed):
            lo, hi = value_range(self.width, self.signed)
            raise DatapathOverflowError(
                f"{self.value} does not fit {self.width}-bit range [{lo}, {hi}]"
            )

    def __int__(self) -> int:
        return self.value

    def promote_signed(self) -> "FxpScalar":
        """Signed view of the value; unsigned inputs gain one bit."""
        if self.signed:
            return self
        return FxpScalar(self.value, self.width + 1, True)

    def widen(self, width: int) -> "FxpScalar":
        if width < self.width:
            raise ConfigurationError(f"cannot narrow {self.width}-bit value to {width} bits")
        return FxpScalar(self.value, width, self.signed)

    def __neg__(self) -> "FxpScalar":
        return fxp_neg(self)


def _check_signedness(a: FxpScalar, b: FxpScalar) -> None:
    if a.signed != b.signed:
        raise ConfigurationError("operands differ in signedness")


def fxp_add(a: FxpScalar, b: FxpScalar) -> FxpScalar:
    _check_signedness(a, b)
    return FxpScalar(a.value + b.value, max(a.width, b.width) + 1, a.signed)


def fxp_sub(a: FxpScalar, b: FxpScalar) -> FxpScalar:
    """Difference at the adder width rule; always signed."""
    _check_signedness(a, b)
    return FxpScalar(a.value - b.value, max(a.width, b.width) + 1, True)


def fxp_neg(a: FxpScalar) -> FxpScalar:
    a = a.promote_signed()
    # -(-2^(w-1)) needs one more bit
    return FxpScalar(-a.value, a.width + 1, True)


def fxp_mul(a: FxpScalar, b: FxpScalar) -> FxpScalar:
    _check_signedness(a, b)
    return FxpScalar(a.value * b.value, a.width + b.width, a.signed)


class Matrix:
    """Dense row-major matrix of integers sharing one element width.

    Values live in a 2-D numpy array (int64 when the width allows, Python
    ints otherwise); elements are exposed as :class:`FxpScalar` on access.
    """

    def __init__(self, values, elem_width: int, signed: bool = True):
        dtype = dtype_for(elem_width)
        arr = np.array(values, dtype=object)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigurationError(f"matrix must be non-empty 2-D, got shape {arr.shape}")
        self.values = arr.astype(dtype)
        self.elem_width = int(elem_width)
        self.signed = bool(signed)
        check_array(self.values, self.elem_width, self.signed, "matrix element")
        self.values.flags.writeable = False

    @classmethod
    def zeros(cls, rows: int, cols: int, elem_width: int, signed: bool = True) -> "Matrix":
        return cls(np.zeros((rows, cols), dtype=np.int64), elem_width, signed)

    @classmethod
    def identity(cls, n: int, elem_width: int = 2, signed: bool = True) -> "Matrix":
        return cls(np.eye(n, dtype=np.int64), elem_width, signed)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def elems(self) -> list[FxpScalar]:
        return [FxpScalar(v, self.elem_width, self.signed) for v in self.values.ravel()]

    def __getitem__(self, idx) -> FxpScalar:
        i, j = idx
        return FxpScalar(self.values[i, j], self.elem_width, self.signed)

    def row(self, i: int) -> np.ndarray:
        return self.values[i, :]

    def col(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def transpose(self) -> "Matrix":
        return Matrix(self.values.T, self.elem_width, self.signed)

    T = property(transpose)

    def widen(self, width: int) -> "Matrix":
        return Matrix(self.values, width, self.signed)

    def tolist(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.values]

    def same_values(self, other: "Matrix") -> bool:
        return self.shape == other.shape and bool(np.all(self.values == other.values))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return (
            self.same_values(other)
            and self.elem_width == other.elem_width
            and self.signed == other.signed
        )

    def __repr__(self) -> str:
        sign = "s" if self.signed else "u"
        return f"Matrix({self.rows}x{self.cols}, {sign}{self.elem_width}, {self.tolist()!r})"


def matrix_from_rows(rows: Sequence[Iterable[int]], elem_width: int, signed: bool = True) -> Matrix:
    return Matrix([list(r) for r in rows], elem_width, signed)


def random_matrix(rng: np.random.Generator, rows: int, cols: int, width: int,
                  signed: bool = True) -> Matrix:
    """Uniform draw over the full declared range of ``width``."""
    lo, hi = value_range(width, signed)
    if width <= INT64_SAFE_WIDTH:
        vals = rng.integers(lo, hi, size=(rows, cols), endpoint=True, dtype=np.int64)
    else:
        span = hi - lo + 1
        nbytes = (width + 7) // 8 + 8  # extra bytes keep the modulo bias negligible
        vals = np.array(
            [[lo + int.from_bytes(rng.bytes(nbytes), "little") % span for _ in range(cols)]
             for _ in range(rows)],
            dtype=object,
        )
    return Matrix(vals, width, signed)


def width_after_sum(width: int, terms: int) -> int:
    """Width of a sum of ``terms`` values of ``width`` bits."""
    return width + clog2(max(terms, 1))


__all__ = [
    "ConfigurationError",
    "DatapathOverflowError",
    "FxpScalar",
    "Matrix",
    "check_array",
    "clog2",
    "dtype_for",
    "fits",
    "fxp_add",
    "fxp_mul",
    "fxp_neg",
    "fxp_sub",
    "matrix_from_rows",
    "random_matrix",
    "value_range",
    "width_after_sum",
]
