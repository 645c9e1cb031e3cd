"""Interleaved sub-block memory layout feeding the MXU one vector per cycle.

For recursion depth ``r`` a tile is cut into 4**r equal sub-blocks. A-side
address ``i`` holds rows ``i, i+m, i+2m, ...`` of the tile concatenated
(``m = rows / 2**r``), which is row ``i`` of every sub-block at once. The
B side uses the same construction on the transpose (columns instead of
rows) and the C side is laid out exactly like A so a product can be fed
back in as the next A operand.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .fxp import ConfigurationError, Matrix

SIDES = ("A", "B", "C")


@dataclass(frozen=True)
class PackedStream:
    addresses: np.ndarray  # (address count, vec_len)
    r: int
    tile_dims: tuple[int, int]
    side: str
    width: int
    signed: bool = True

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigurationError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.addresses.ndim != 2:
            raise ConfigurationError("addresses must be a 2-D array")
        rows, cols = self.tile_dims
        segs = 1 << self.r
        count, vlen = self.addresses.shape
        if self.side == "B":
            expect = (cols // segs, rows * segs)
        else:
            expect = (rows // segs, cols * segs)
        if (count, vlen) != expect:
            raise ConfigurationError(
                f"{self.side}-side stream of tile {self.tile_dims} at r={self.r} must be "
                f"{expect[0]} addresses of length {expect[1]}, got {count} x {vlen}"
            )

    @property
    def vec_len(self) -> int:
        return self.addresses.shape[1]

    def __len__(self) -> int:
        return self.addresses.shape[0]

    def __iter__(self):
        return iter(self.addresses)

    def to_csv(self, fh: TextIO | None = None) -> str:
        """One address per line, elements comma separated."""
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        for vec in self.addresses:
            writer.writerow(int(v) for v in vec)
        return buf.getvalue() if fh is None else ""


@dataclass(frozen=True)
class QuadrantSlices:
    q11: np.ndarray
    q12: np.ndarray
    q21: np.ndarray
    q22: np.ndarray

    def __post_init__(self):
        shapes = {q.shape for q in (self.q11, self.q12, self.q21, self.q22)}
        if len(shapes) != 1:
            raise ConfigurationError(f"quadrant slices differ in shape: {sorted(shapes)}")

    def astuple(self):
        return self.q11, self.q12, self.q21, self.q22


def _check_depth(r: int, *dims: int) -> None:
    if r < 0:
        raise ConfigurationError(f"recursion depth must be >= 0, got {r}")
    for d in dims:
        if d % (1 << r):
            raise ConfigurationError(f"tile dimension {d} not divisible by 2^{r}")


def interleave_rows(values: np.ndarray, r: int) -> np.ndarray:
    """Row ``i`` of the result is rows ``i, i+m, ...`` of ``values`` joined."""
    rows, cols = values.shape
    segs = 1 << r
    m = rows // segs
    # (segs, m, cols) -> (m, segs, cols): segment s of address i is row i + s*m
    return values.reshape(segs, m, cols).transpose(1, 0, 2).reshape(m, segs * cols)


def deinterleave_rows(addresses: np.ndarray, r: int) -> np.ndarray:
    m, vlen = addresses.shape
    segs = 1 << r
    cols = vlen // segs
    return addresses.reshape(m, segs, cols).transpose(1, 0, 2).reshape(segs * m, cols)


def pack_a(tile: Matrix, r: int) -> PackedStream:
    _check_depth(r, tile.rows, tile.cols)
    return PackedStream(interleave_rows(tile.values, r), r, tile.shape, "A",
                        tile.elem_width, tile.signed)


def pack_b(tile: Matrix, r: int) -> PackedStream:
    _check_depth(r, tile.rows, tile.cols)
    return PackedStream(interleave_rows(tile.values.T, r), r, tile.shape, "B",
                        tile.elem_width, tile.signed)


def pack_c(tile: Matrix, r: int) -> PackedStream:
    _check_depth(r, tile.rows, tile.cols)
    return PackedStream(interleave_rows(tile.values, r), r, tile.shape, "C",
                        tile.elem_width, tile.signed)


def unpack_c(stream: PackedStream) -> Matrix:
    """Rebuild the tile from an A/C-layout stream."""
    if stream.side == "B":
        raise ConfigurationError("unpack_c expects an A/C-layout stream, got B side")
    return Matrix(deinterleave_rows(stream.addresses, stream.r), stream.width, stream.signed)


def unpack_b(stream: PackedStream) -> Matrix:
    if stream.side != "B":
        raise ConfigurationError(f"unpack_b expects a B-side stream, got {stream.side}")
    return Matrix(deinterleave_rows(stream.addresses, stream.r).T, stream.width, stream.signed)


# ---------------------------------------------------------------------------
# quadrant split / merge, batched over a leading axis for the simulator
# ---------------------------------------------------------------------------

def split_batch(vecs: np.ndarray, r: int):
    """Split packed vectors ``(batch, len)`` at depth ``r`` into four quadrants.

    Quadrant naming follows the layout matrix (rows x segment columns): for
    an A/C vector q12 is the top-right quadrant; for a B vector (which is
    laid out as B transposed) q12 holds B21 and q21 holds B12.
    """
    if r < 1:
        raise ConfigurationError("cannot split a depth-0 vector into quadrants")
    batch, vlen = vecs.shape
    segs = 1 << r
    seg_len = vlen // segs
    if seg_len * segs != vlen or seg_len % 2:
        raise ConfigurationError(f"vector length {vlen} does not split at depth {r}")
    v = vecs.reshape(batch, segs, seg_len)
    hs, hw = segs // 2, seg_len // 2
    return (
        v[:, :hs, :hw].reshape(batch, -1),
        v[:, :hs, hw:].reshape(batch, -1),
        v[:, hs:, :hw].reshape(batch, -1),
        v[:, hs:, hw:].reshape(batch, -1),
    )


def merge_batch(q11, q12, q21, q22, r: int) -> np.ndarray:
    """Inverse of :func:`split_batch`; returns vectors at depth ``r``."""
    batch, qlen = q11.shape
    hs = (1 << r) // 2
    hw = qlen // hs
    top = np.concatenate([q11.reshape(batch, hs, hw), q12.reshape(batch, hs, hw)], axis=2)
    bot = np.concatenate([q21.reshape(batch, hs, hw), q22.reshape(batch, hs, hw)], axis=2)
    return np.concatenate([top, bot], axis=1).reshape(batch, 4 * qlen)


def split_quadrants(vec, r: int, tile_dims: tuple[int, int], side: str = "A") -> QuadrantSlices:
    """Quadrant portions of one packed address vector.

    ``tile_dims`` is the (rows, cols) shape of the tile the vector came from.
    For ``side="B"`` the slices are returned in B-quadrant naming
    (q12 = B12), undoing the transposed layout.
    """
    vec = np.asarray(vec)
    rows, cols = tile_dims
    _check_depth(r, rows, cols)
    expect = rows * (1 << r) if side == "B" else cols * (1 << r)
    if vec.ndim != 1 or vec.shape[0] != expect:
        raise ConfigurationError(
            f"{side}-side vector for tile {tile_dims} at r={r} must have length {expect}, "
            f"got {vec.shape}"
        )
    q11, q12, q21, q22 = split_batch(vec[None, :], r)
    if side == "B":
        q12, q21 = q21, q12
    return QuadrantSlices(q11[0], q12[0], q21[0], q22[0])


def merge_quadrants(slices: QuadrantSlices, r: int, side: str = "A") -> np.ndarray:
    q11, q12, q21, q22 = (q[None, :] for q in slices.astuple())
    if side == "B":
        q12, q21 = q21, q12
    return merge_batch(q11, q12, q21, q22, r)[0]
