"""Golden matrix-multiplication algorithms and operation-count formulas.

These are the oracles the simulator is checked against: a literal
triple-sum product, the 8-product blocked recursion and the 7-product
Strassen recursion. All arithmetic is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fxp import ConfigurationError, Matrix, clog2, dtype_for


@dataclass(frozen=True)
class OpCount:
    mults: int
    adds: int

    @property
    def total(self) -> int:
        return self.mults + self.adds


@dataclass
class OpCounter:
    """Mutable tally filled in by instrumented algorithms."""

    mults: int = 0
    adds: int = 0

    @property
    def total(self) -> int:
        return self.mults + self.adds


def _check_inner(a: Matrix, b: Matrix) -> None:
    if a.cols != b.rows:
        raise ConfigurationError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if a.signed != b.signed:
        raise ConfigurationError("operands differ in signedness")


def product_width(a: Matrix, b: Matrix) -> int:
    return a.elem_width + b.elem_width + clog2(a.cols)


def _naive(a: np.ndarray, b: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    # c[i, j] = sum_k a[i, k] * b[k, j], summed in ascending k
    c = a[:, 0:1] * b[0:1, :]
    for kk in range(1, k):
        c = c + a[:, kk:kk + 1] * b[kk:kk + 1, :]
    if counter is not None:
        counter.mults += m * k * n
        counter.adds += m * n * (k - 1)
    return c


def matmul_naive(a: Matrix, b: Matrix) -> Matrix:
    _check_inner(a, b)
    width = product_width(a, b)
    dt = dtype_for(width)
    return Matrix(_naive(a.values.astype(dt), b.values.astype(dt), None), width, a.signed)


def _check_divisible(r: int, *dims: int) -> None:
    if r < 0:
        raise ConfigurationError(f"recursion depth must be >= 0, got {r}")
    step = 1 << r
    for d in dims:
        if d % step:
            raise ConfigurationError(f"dimension {d} not divisible by 2^{r}")


def _quads(x: np.ndarray):
    h, w = x.shape[0] // 2, x.shape[1] // 2
    return x[:h, :w], x[:h, w:], x[h:, :w], x[h:, w:]


def _blocked(a, b, r):
    if r == 0:
        return _naive(a, b, None)
    a11, a12, a21, a22 = _quads(a)
    b11, b12, b21, b22 = _quads(b)
    top = np.hstack([_blocked(a11, b11, r - 1) + _blocked(a12, b21, r - 1),
                     _blocked(a11, b12, r - 1) + _blocked(a12, b22, r - 1)])
    bot = np.hstack([_blocked(a21, b11, r - 1) + _blocked(a22, b21, r - 1),
                     _blocked(a21, b12, r - 1) + _blocked(a22, b22, r - 1)])
    return np.vstack([top, bot])


def matmul_blocked(a: Matrix, b: Matrix, r: int) -> Matrix:
    """Conventional 2x2 block recursion (8 block products per level)."""
    _check_inner(a, b)
    _check_divisible(r, a.rows, a.cols, b.cols)
    width = product_width(a, b)
    dt = dtype_for(width)
    return Matrix(_blocked(a.values.astype(dt), b.values.astype(dt), r), width, a.signed)


def strassen_terms(a11, a12, a21, a22, b11, b12, b21, b22):
    """Operand pairs (T_i, S_i) of the seven Strassen block products."""
    t = (a11 + a22, a21 + a22, a11, a22, a11 + a12, a21 - a11, a12 - a22)
    s = (b11 + b22, b11, b12 - b22, b21 - b11, b22, b11 + b12, b21 + b22)
    return t, s


def strassen_combine(q):
    q1, q2, q3, q4, q5, q6, q7 = q
    return q1 + q4 - q5 + q7, q3 + q5, q2 + q4, q1 - q2 + q3 + q6


def _strassen(a, b, r, counter):
    if r == 0:
        return _naive(a, b, counter)
    t, s = strassen_terms(*_quads(a), *_quads(b))
    q = [_strassen(ti, si, r - 1, counter) for ti, si in zip(t, s)]
    c11, c12, c21, c22 = strassen_combine(q)
    if counter is not None:
        m2, k2 = t[0].shape
        n2 = s[0].shape[1]
        # 5 sums on the A side, 5 on the B side, 8 when combining the products
        counter.adds += 5 * m2 * k2 + 5 * k2 * n2 + 8 * m2 * n2
    return np.vstack([np.hstack([c11, c12]), np.hstack([c21, c22])])


def matmul_strassen(a: Matrix, b: Matrix, r: int, counter: OpCounter | None = None) -> Matrix:
    """Strassen recursion ``r`` levels deep with naive leaf products.

    If ``counter`` is given, it accumulates every scalar multiplication and
    addition actually executed (leaf products plus block additions).
    """
    _check_inner(a, b)
    _check_divisible(r, a.rows, a.cols, b.cols)
    width = product_width(a, b)
    # T/S operands grow one bit per level and Q products sum with signs;
    # compute with headroom so intermediate values stay exact
    dt = dtype_for(2 * (max(a.elem_width, b.elem_width) + r) + clog2(a.cols) + 2 * r + 1)
    c = _strassen(a.values.astype(dt), b.values.astype(dt), r, counter)
    return Matrix(c, width, a.signed)


# ---------------------------------------------------------------------------
# closed-form operation counts for square n x n products, one recursion level
# ---------------------------------------------------------------------------

FORMS = ("conventional", "strassen", "winograd")
_BLOCK_ADDS = {"strassen": 18, "winograd": 15}


def ops_total_fractional(n, form: str) -> Fraction:
    """Total operation count evaluated over the rationals (odd n allowed)."""
    n = Fraction(n)
    if form == "conventional":
        return n ** 3 + n ** 2 * (n - 1)
    if form not in _BLOCK_ADDS:
        raise ConfigurationError(f"unknown form {form!r}; expected one of {FORMS}")
    return 7 * n ** 3 / 8 + 7 * n ** 2 * (n / 2 - 1) / 4 + _BLOCK_ADDS[form] * (n / 2) ** 2


def ops_conventional(n: int) -> OpCount:
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    return OpCount(n ** 3, n ** 2 * (n - 1))


def _ops_one_level(n: int, block_adds: int) -> OpCount:
    if n < 2 or n % 2:
        raise ConfigurationError(f"one-level Strassen counts need even n >= 2, got {n}")
    h = n // 2
    return OpCount(7 * h ** 3, 7 * h ** 2 * (h - 1) + block_adds * h * h)


def ops_strassen_1(n: int) -> OpCount:
    return _ops_one_level(n, 18)


def ops_winograd_1(n: int) -> OpCount:
    return _ops_one_level(n, 15)


def op_count(n: int, form: str) -> OpCount:
    if form == "conventional":
        return ops_conventional(n)
    if form == "strassen":
        return ops_strassen_1(n)
    if form == "winograd":
        return ops_winograd_1(n)
    raise ConfigurationError(f"unknown form {form!r}; expected one of {FORMS}")


def crossover(form: str, even_only: bool = True, limit: int = 1024) -> int:
    """Smallest n at which ``form`` needs fewer total operations than conventional."""
    step = 2 if even_only else 1
    for n in range(2, limit + 1, step):
        if ops_total_fractional(n, form) < ops_total_fractional(n, "conventional"):
            return n
    raise ValueError(f"no crossover below {limit}")
