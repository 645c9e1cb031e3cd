"""Cycle-level simulation of MM_0 leaf arrays and their SMM_r / MM_r composition.

The simulator is a synchronous register-transfer model. Every call to
:meth:`Mxu.step` is one clock edge: each pipeline register latches the value
computed from the previous contents of its upstream register.

Datapath, for one A vector entering the top-level ports:

* triangular skew buffer (lane ``k`` of every sub-block delayed ``k`` cycles),
* ``r`` registered addition levels (Strassen T/S banks, or plain fan-out for
  the conventional blocked design),
* ``7**r`` (or ``8**r``) weight-stationary ``X x Y`` leaf arrays, all sibling
  nodes of a level simulated together along a leading batch axis,
* ``r`` registered output levels (Q banks / block sums),
* an output de-skew buffer that realigns each C address vector.

Besides the values, every vector element carries a *tag* (sequence number
of the A address it belongs to, -1 for a bubble) and a *first-of-tile*
flag. The flag travels with the data and triggers the per-PE swap of the
double-buffered B registers; the tags are checked at every merge point so
any timing skew between lanes shows up as an alignment error instead of a
silently wrong number.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fxp import ConfigurationError, check_array, clog2, dtype_for
from .layout import (
    PackedStream,
    QuadrantSlices,
    merge_batch,
    pack_b,
    split_batch,
    unpack_c,
)

FAMILIES = ("MM", "SMM")


class MxuError(RuntimeError):
    """Misuse of the MXU protocol or a broken internal invariant."""


@dataclass(frozen=True)
class MxuConfig:
    family: str = "SMM"
    r: int = 1
    leaf_x: int = 2
    leaf_y: int = 2
    input_width: int = 8
    q_add_pipeline: bool = False
    signed: bool = True

    def __post_init__(self):
        fam = str(self.family).upper()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ConfigurationError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.r < 0:
            raise ConfigurationError(f"r must be >= 0, got {self.r}")
        if self.leaf_x < 1 or self.leaf_y < 1:
            raise ConfigurationError(f"leaf dims must be positive, got {self.leaf_x}x{self.leaf_y}")
        if self.input_width < 1:
            raise ConfigurationError(f"input_width must be >= 1, got {self.input_width}")

    @property
    def name(self) -> str:
        return f"{self.family}_{self.r} {self.leaf_x}x{self.leaf_y}"

    @property
    def branching(self) -> int:
        return 7 if self.family == "SMM" else 8

    @property
    def leaf_count(self) -> int:
        return self.branching ** self.r

    @property
    def tile_k(self) -> int:
        return self.leaf_x << self.r

    @property
    def tile_n(self) -> int:
        return self.leaf_y << self.r

    @property
    def tile_m(self) -> int:
        # m = tile_m / 2^r address cycles per tile must cover the Y-cycle B load
        return self.leaf_y << self.r

    @property
    def datapath_width(self) -> int:
        """Signed width of values at the top-level input ports."""
        return self.input_width if self.signed else self.input_width + 1

    @property
    def leaf_input_width(self) -> int:
        grow = self.r if self.family == "SMM" else 0
        return self.datapath_width + grow

    @property
    def accumulator_width(self) -> int:
        return 2 * self.leaf_input_width + clog2(self.leaf_x)

    def level_output_growth(self) -> int:
        # SMM: C11/C22 sum four Q terms (+2 bits); MM: two block products (+1 bit)
        return 2 if self.family == "SMM" else 1

    @property
    def output_width(self) -> int:
        return self.accumulator_width + self.r * self.level_output_growth()

    @property
    def input_delay(self) -> int:
        """Register stages between the input skew buffers and the leaves."""
        return self.r if self.family == "SMM" else 0

    @property
    def output_delay(self) -> int:
        per_level = 2 if self.q_add_pipeline else 1
        return self.r * per_level

    @property
    def fill_latency(self) -> int:
        """Cycles from an A address entering to its C address leaving."""
        return self.leaf_x + self.leaf_y - 1 + self.input_delay + self.output_delay


@dataclass
class CycleReport:
    cycles_total: int = 0
    fill_latency: int = 0
    mult_activations: int = 0
    useful_conventional_mults: int = 0
    a_vectors_in: int = 0
    c_vectors_out: int = 0
    range_checks: int = 0
    tile_done_cycles: list[int] = field(default_factory=list)

    def merge(self, other: "CycleReport") -> "CycleReport":
        """Sum of two reports for runs executed one after the other."""
        offset = self.cycles_total
        return CycleReport(
            cycles_total=self.cycles_total + other.cycles_total,
            fill_latency=self.fill_latency or other.fill_latency,
            mult_activations=self.mult_activations + other.mult_activations,
            useful_conventional_mults=self.useful_conventional_mults
            + other.useful_conventional_mults,
            a_vectors_in=self.a_vectors_in + other.a_vectors_in,
            c_vectors_out=self.c_vectors_out + other.c_vectors_out,
            range_checks=self.range_checks + other.range_checks,
            tile_done_cycles=self.tile_done_cycles
            + [c + offset for c in other.tile_done_cycles],
        )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "cycles_total", "fill_latency", "mult_activations", "useful_conventional_mults",
            "a_vectors_in", "c_vectors_out", "range_checks")}
        return d


# ---------------------------------------------------------------------------
# addition banks (pure, elementwise over the last axis)
# ---------------------------------------------------------------------------

def a_addition_bank(s: QuadrantSlices):
    """T1..T7 from the A quadrant slices; 5 adders, 2 pass-throughs."""
    q11, q12, q21, q22 = s.astuple()
    return (q11 + q22, q21 + q22, q11, q22, q11 + q12, q21 - q11, q12 - q22)


def b_addition_bank(s: QuadrantSlices):
    """S1..S7 from the B quadrant slices (B naming: q12 is B12)."""
    q11, q12, q21, q22 = s.astuple()
    return (q11 + q22, q11, q12 - q22, q21 - q11, q22, q11 + q12, q21 + q22)


def q_addition_bank(q):
    """C11, C12, C21, C22 from Q1..Q7 using eight adder vectors."""
    q1, q2, q3, q4, q5, q6, q7 = q
    if len({np.shape(x) for x in q}) != 1:
        raise ConfigurationError("Q vectors differ in length")
    c11 = (q1 + q4) + (q7 - q5)
    c12 = q3 + q5
    c21 = q2 + q4
    c22 = (q1 - q2) + (q3 + q6)
    return c11, c12, c21, c22


# children of a conventional blocked level: (A quadrant, B quadrant) per product,
# paired so that products 2c and 2c+1 sum to output quadrant c
MM_CHILDREN = (
    ("11", "11"), ("12", "21"),
    ("11", "12"), ("12", "22"),
    ("21", "11"), ("22", "21"),
    ("21", "12"), ("22", "22"),
)


def mm_block_sums(p):
    return p[0] + p[1], p[2] + p[3], p[4] + p[5], p[6] + p[7]


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

class SkewBuffer:
    """Triangular shift-register bank.

    ``delays[p]`` is the depth of the shift register feeding element ``p``;
    for the input side this is ``p mod X`` (lane ``k`` has depth ``k``), for
    the output de-skew ``Y - 1 - (p mod Y)``. A depth-0 lane is a wire.
    """

    def __init__(self, delays: np.ndarray, fills: dict[str, object], dtypes: dict[str, object]):
        self.delays = np.asarray(delays, dtype=np.int64)
        self.depth = int(self.delays.max()) + 1 if self.delays.size else 1
        self.fills = fills
        n = self.delays.shape[0]
        self.hist = {k: np.full((self.depth, n), fills[k], dtype=dtypes[k]) for k in fills}
        self.ptr = 0
        self._cols = np.arange(n)

    @property
    def register_count(self) -> int:
        return int(self.delays.sum())

    def push(self, planes: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.ptr = (self.ptr + 1) % self.depth
        rows = (self.ptr - self.delays) % self.depth
        out = {}
        for k, h in self.hist.items():
            h[self.ptr] = planes[k]
            out[k] = h[rows, self._cols]
        return out


class LeafArrays:
    """A batch of ``n`` weight-stationary X x Y systolic arrays (MM_0).

    PE ``(k, j)`` holds ``b[k, j]``. The A element of lane ``k`` enters PE
    ``(k, 0)`` and moves one PE per cycle along ``j``; partial sums move one
    PE per cycle along ``k`` and leave from row ``X-1``. Inputs arrive
    pre-skewed (lane ``k`` late by ``k``), so output column ``j`` is late by
    ``j``.
    """

    def __init__(self, n: int, x: int, y: int, in_width: int, acc_width: int):
        self.n, self.x, self.y = n, x, y
        self.in_width = in_width
        self.acc_width = acc_width
        dt = dtype_for(acc_width)
        self.dtype = dt
        shape = (n, x, y)
        self.b_active = np.zeros(shape, dtype=dt)
        self.b_shadow = np.zeros(shape, dtype=dt)
        self.a_val = np.zeros(shape, dtype=dt)
        self.a_tag = np.full(shape, -1, dtype=np.int64)
        self.a_first = np.zeros(shape, dtype=bool)
        self.psum = np.zeros(shape, dtype=dt)

    @property
    def multipliers(self) -> int:
        return self.n * self.x * self.y

    def output(self):
        return self.psum[:, -1, :].copy(), self.a_tag[:, -1, :].copy()

    def tick(self, a_val, a_tag, a_first, b_val, b_col):
        # A operands shift one PE along j; new lane values enter column 0
        self.a_val[:, :, 1:] = self.a_val[:, :, :-1]
        self.a_val[:, :, 0] = a_val
        self.a_tag[:, :, 1:] = self.a_tag[:, :, :-1]
        self.a_tag[:, :, 0] = a_tag
        self.a_first[:, :, 1:] = self.a_first[:, :, :-1]
        self.a_first[:, :, 0] = a_first

        # the first element of a tile swaps the preloaded shadow B in, then
        # this cycle's shadow write (if any) lands behind it
        if self.a_first.any():
            np.copyto(self.b_active, self.b_shadow, where=self.a_first)
        if b_col is not None:
            li, ki = np.nonzero(b_col >= 0)
            if li.size:
                self.b_shadow[li, ki, b_col[li, ki]] = b_val[li, ki]

        prod = self.a_val * self.b_active
        prod[:, 1:, :] += self.psum[:, :-1, :]
        self.psum = prod


class _Register:
    """Pipeline register of fixed depth holding a dict of planes."""

    def __init__(self, depth: int, empty: dict[str, np.ndarray]):
        self.empty = empty
        self.q = deque({k: v.copy() for k, v in empty.items()} for _ in range(depth))

    def shift(self, planes: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.q.append(planes)
        return self.q.popleft()


# ---------------------------------------------------------------------------
# the composed unit
# ---------------------------------------------------------------------------

class Mxu:
    """An SMM_r or MM_r matrix unit driven one clock at a time.

    Protocol: :meth:`load_b` queues a B tile on the B port (one packed
    address per cycle). A tile starts by passing its first A address with
    ``new_tile=True``; the B load for that tile must have started on an
    earlier cycle. A new load only starts once the previous one has been
    swapped in, so loading tile ``t+1`` during tile ``t`` hides it fully.
    """

    def __init__(self, cfg: MxuConfig, check_alignment: bool = True,
                 fault: str | None = None, trace: Callable | None = None):
        self.cfg = cfg
        self.check_alignment = check_alignment
        self.fault = fault
        self.trace = trace
        r, x, y = cfg.r, cfg.leaf_x, cfg.leaf_y
        self.vec_len_a = (4 ** r) * x
        self.vec_len_c = (4 ** r) * y
        self.dtype = dtype_for(cfg.output_width)

        self.a_skew = SkewBuffer(np.arange(self.vec_len_a) % x,
                                 {"v": 0, "t": -1, "f": False},
                                 {"v": self.dtype, "t": np.int64, "f": bool})
        self.b_skew = SkewBuffer(np.arange(self.vec_len_a) % x,
                                 {"v": 0, "c": -1},
                                 {"v": self.dtype, "c": np.int64})
        self.c_deskew = SkewBuffer(y - 1 - np.arange(self.vec_len_c) % y,
                                   {"v": 0, "t": -1},
                                   {"v": self.dtype, "t": np.int64})

        # one register per input level (SMM only), one or two per output level
        self.in_regs_a, self.in_regs_b = [], []
        self.out_regs = []
        br = cfg.branching
        for lvl in range(r):
            nodes_below = br ** (lvl + 1)
            qlen_in = (4 ** (r - lvl - 1)) * x
            if cfg.family == "SMM":
                self.in_regs_a.append(_Register(1, self._empty(nodes_below, qlen_in, ("v", "t", "f"))))
                self.in_regs_b.append(_Register(1, self._empty(nodes_below, qlen_in, ("v", "c"))))
            nodes_here = br ** lvl
            clen = (4 ** (r - lvl)) * y
            depth = 2 if cfg.q_add_pipeline else 1
            self.out_regs.append(_Register(depth, self._empty(nodes_here, clen, ("v", "t"))))

        self.leaves = LeafArrays(cfg.leaf_count, x, y, cfg.leaf_input_width, cfg.accumulator_width)

        self.cycle = 0
        self.next_tag = 0
        self.last_tag: int | None = None
        self.range_checks = 0
        self.mult_activations = 0
        self._b_queue: deque[np.ndarray] = deque()
        self._b_issuing: deque[np.ndarray] = deque()
        self._b_pending_start: int | None = None

    def _empty(self, nodes, length, keys):
        fill = {"v": 0, "t": -1, "f": False, "c": -1}
        dts = {"v": self.dtype, "t": np.int64, "f": bool, "c": np.int64}
        return {k: np.full((nodes, length), fill[k], dtype=dts[k]) for k in keys}

    # ---------------------------------------------------------------- structure

    @property
    def leaf_count(self) -> int:
        return self.leaves.n

    @property
    def multiplier_count(self) -> int:
        return self.leaves.multipliers

    def adder_vectors(self) -> list[tuple[int, int, int]]:
        """(level, nodes, adders per node) for every instantiated adder level.

        Counted from the vector lengths the datapath actually operates on:
        per Strassen node 5 + 5 input adder vectors on quadrant slices and 8
        output adder vectors; per conventional node 4 output adder vectors.
        """
        cfg = self.cfg
        out = []
        for lvl in range(cfg.r):
            nodes = cfg.branching ** lvl
            slice_a = self.vec_len_a // (4 ** (lvl + 1))
            slice_c = self.vec_len_c // (4 ** (lvl + 1))
            if cfg.family == "SMM":
                out.append((lvl, nodes, 5 * slice_a + 5 * slice_a + 8 * slice_c))
            else:
                out.append((lvl, nodes, 4 * slice_c))
        return out

    @property
    def adder_count(self) -> int:
        return sum(nodes * per for _, nodes, per in self.adder_vectors())

    @property
    def register_counts(self) -> dict[str, int]:
        """Datapath register elements outside the PEs, by location."""
        inner = sum(reg.empty["v"].size * len(reg.q) for reg in self.in_regs_a + self.in_regs_b)
        outer = sum(reg.empty["v"].size * len(reg.q) for reg in self.out_regs)
        return {
            "skew": self.a_skew.register_count + self.b_skew.register_count
            + self.c_deskew.register_count,
            "input_addition": inner,
            "output_addition": outer,
        }

    # ---------------------------------------------------------------- B port

    def load_b(self, b_tile) -> None:
        """Queue a B tile (Matrix or B-side PackedStream) on the B port."""
        stream = b_tile if isinstance(b_tile, PackedStream) else pack_b(b_tile, self.cfg.r)
        if stream.side != "B" or stream.r != self.cfg.r:
            raise MxuError(f"B stream must be B-side at r={self.cfg.r}")
        if stream.tile_dims != (self.cfg.tile_k, self.cfg.tile_n):
            raise MxuError(f"B tile must be {self.cfg.tile_k}x{self.cfg.tile_n}, got {stream.tile_dims}")
        if stream.width > self.cfg.datapath_width:
            raise MxuError(f"B width {stream.width} exceeds datapath width {self.cfg.datapath_width}")
        check_array(stream.addresses, self.cfg.datapath_width, True, "B input")
        self._b_queue.append(stream.addresses)

    def _b_port(self):
        if not self._b_issuing and self._b_queue and self._b_pending_start is None:
            addrs = self._b_queue.popleft()
            self._b_issuing = deque(enumerate(addrs))
            self._b_pending_start = self.cycle
        if self._b_issuing:
            j, vec = self._b_issuing.popleft()
            return vec, j
        return None, -1

    # ---------------------------------------------------------------- clock

    def step(self, a_vec=None, new_tile: bool = False):
        """Advance one clock. Returns the C address vector leaving this cycle, or None."""
        cfg = self.cfg
        if new_tile:
            if a_vec is None:
                raise MxuError("a tile boundary needs an A vector")
            if self._b_pending_start is None or self._b_pending_start >= self.cycle:
                raise MxuError(f"cycle {self.cycle}: tile starts before its B tile began loading")
            self._b_pending_start = None

        # --- ports -----------------------------------------------------------
        if a_vec is not None:
            a_vec = np.asarray(a_vec)
            if a_vec.shape != (self.vec_len_a,):
                raise MxuError(f"A vector must have length {self.vec_len_a}, got {a_vec.shape}")
            check_array(a_vec, cfg.datapath_width, True, "A input")
            a_in = {"v": a_vec.astype(self.dtype),
                    "t": np.full(self.vec_len_a, self.next_tag, dtype=np.int64),
                    "f": np.full(self.vec_len_a, new_tile, dtype=bool)}
            self.next_tag += 1
        else:
            a_in = {"v": np.zeros(self.vec_len_a, dtype=self.dtype),
                    "t": np.full(self.vec_len_a, -1, dtype=np.int64),
                    "f": np.zeros(self.vec_len_a, dtype=bool)}
        b_vec, b_j = self._b_port()
        if b_vec is not None:
            b_in = {"v": np.asarray(b_vec).astype(self.dtype),
                    "c": np.full(self.vec_len_a, b_j, dtype=np.int64)}
        else:
            b_in = {"v": np.zeros(self.vec_len_a, dtype=self.dtype),
                    "c": np.full(self.vec_len_a, -1, dtype=np.int64)}
        if self.trace is not None:
            self._trace_port("a_in", a_in["v"], a_in["t"] >= 0)
            self._trace_port("b_in", b_in["v"], b_in["c"] >= 0)

        # --- input side --------------------------------------------------------
        a = {k: v[None, :] for k, v in self.a_skew.push(a_in).items()}
        b = {k: v[None, :] for k, v in self.b_skew.push(b_in).items()}
        for lvl in range(cfg.r):
            depth = cfg.r - lvl
            a_next, b_next = self._expand(a, b, depth, lvl)
            if cfg.family == "SMM":
                a = self.in_regs_a[lvl].shift(a_next)
                b = self.in_regs_b[lvl].shift(b_next)
            else:
                a, b = a_next, b_next

        # --- leaves ------------------------------------------------------------
        if self.leaves.in_width != cfg.leaf_input_width:
            raise MxuError("leaf input width mismatch")
        check_array(a["v"], self.leaves.in_width, True, "leaf A input")
        check_array(b["v"], self.leaves.in_width, True, "leaf B input")
        self.range_checks += 2
        self.mult_activations += int(np.count_nonzero(a["t"] >= 0)) * cfg.leaf_y
        # bottom-row partial sums as registered at the end of the previous cycle
        leaf_out = dict(zip(("v", "t"), self.leaves.output()))
        self.leaves.tick(a["v"], a["t"], a["f"], b["v"], b["c"])
        check_array(self.leaves.psum, self.leaves.acc_width, True, "leaf accumulator")
        self.range_checks += 1

        # --- output side -------------------------------------------------------
        c = leaf_out
        width = cfg.accumulator_width
        for lvl in reversed(range(cfg.r)):
            width += cfg.level_output_growth()
            c = self.out_regs[lvl].shift(self._combine(c, cfg.r - lvl, width, lvl))
        c = {k: v[0] for k, v in c.items()}
        out = self.c_deskew.push(c)

        self.cycle += 1
        tags = out["t"]
        if tags[0] < 0:
            if self.check_alignment and np.any(tags >= 0):
                raise MxuError(f"cycle {self.cycle - 1}: partially valid C vector (lane skew)")
            self.last_tag = None
            return None
        if self.check_alignment and np.any(tags != tags[0]):
            raise MxuError(f"cycle {self.cycle - 1}: C vector mixes rows {sorted(set(tags.tolist()))}")
        self.last_tag = int(tags[0])
        if self.trace is not None:
            self._trace_port("c_out", out["v"], np.ones(self.vec_len_c, dtype=bool), cycle=self.cycle - 1)
        return out["v"]

    def _trace_port(self, port, values, valid, cycle=None):
        cyc = self.cycle if cycle is None else cycle
        for p in np.nonzero(valid)[0]:
            self.trace(cyc, self.cfg.name, f"{port}[{p}]", int(values[p]))

    def _align(self, planes, what):
        if not self.check_alignment:
            return
        t = planes[0]
        for other in planes[1:]:
            if not np.array_equal(t, other):
                raise MxuError(f"cycle {self.cycle}: {what} tags misaligned")

    def _expand(self, a, b, depth, lvl):
        """One level of input distribution: (nodes, len) -> (nodes*branch, len/4)."""
        cfg = self.cfg
        n = a["v"].shape[0]
        aq = {k: split_batch(v, depth) for k, v in a.items()}
        bq = {k: split_batch(v, depth) for k, v in b.items()}
        self._align(aq["t"], "A quadrant")
        # B vectors are laid out transposed: split order is (B11, B21, B12, B22)
        bq = {k: (q[0], q[2], q[1], q[3]) for k, q in bq.items()}
        self._align(bq["c"], "B quadrant")
        if cfg.family == "SMM":
            av = a_addition_bank(QuadrantSlices(*aq["v"]))
            bv = b_addition_bank(QuadrantSlices(*bq["v"]))
            width = cfg.datapath_width + lvl + 1
            av = np.stack(av, axis=1)
            bv = np.stack(bv, axis=1)
            check_array(av, width, True, f"level {lvl} T vectors")
            check_array(bv, width, True, f"level {lvl} S vectors")
            self.range_checks += 2
            a_next = {"v": av.reshape(n * 7, -1),
                      "t": np.repeat(aq["t"][0], 7, axis=0),
                      "f": np.repeat(aq["f"][0], 7, axis=0)}
            b_next = {"v": bv.reshape(n * 7, -1),
                      "c": np.repeat(bq["c"][0], 7, axis=0)}
        else:
            idx = {"11": 0, "12": 1, "21": 2, "22": 3}
            a_next = {k: np.stack([q[idx[ai]] for ai, _ in MM_CHILDREN], axis=1).reshape(n * 8, -1)
                      for k, q in aq.items()}
            b_next = {k: np.stack([q[idx[bi]] for _, bi in MM_CHILDREN], axis=1).reshape(n * 8, -1)
                      for k, q in bq.items()}
        return a_next, b_next

    def _combine(self, c, depth, width, lvl):
        """One level of output combination: (nodes*branch, len) -> (nodes, 4*len)."""
        cfg = self.cfg
        br = cfg.branching
        v = c["v"].reshape(-1, br, c["v"].shape[1])
        t = c["t"].reshape(-1, br, c["t"].shape[1])
        kids = [v[:, i, :] for i in range(br)]
        if self.check_alignment and np.any(t != t[:, :1, :]):
            raise MxuError(f"cycle {self.cycle}: child outputs misaligned at level {lvl}")
        if cfg.family == "SMM":
            c11, c12, c21, c22 = q_addition_bank(kids)
            if self.fault == "q_bank" and lvl == 0:
                c11 = c11 + (t[:, 0, :] >= 0)
        else:
            c11, c12, c21, c22 = mm_block_sums(kids)
        merged = merge_batch(c11, c12, c21, c22, depth)
        check_array(merged, width, True, f"level {lvl} C vector")
        self.range_checks += 1
        t0 = t[:, 0, :]
        return {"v": merged, "t": merge_batch(t0, t0, t0, t0, depth)}


def build_mxu(cfg: MxuConfig, **kwargs) -> Mxu:
    return Mxu(cfg, **kwargs)


# ---------------------------------------------------------------------------
# stream runner
# ---------------------------------------------------------------------------

@dataclass
class TileJob:
    a_addresses: np.ndarray  # (m, 4^r X) packed A rows
    b_stream: PackedStream


def run_tiles(mxu: Mxu, jobs: list[TileJob], useful_mults: int | None = None,
              max_drain: int | None = None):
    """Stream tiles back to back, hiding each B load behind the previous tile.

    Returns ``(outputs, report)`` where ``outputs[t]`` is the (m, 4^r Y)
    array of packed C addresses of tile ``t``.
    """
    if not jobs:
        return [], CycleReport()
    start_cycle = mxu.cycle
    start_checks = mxu.range_checks
    start_acts = mxu.mult_activations
    tag_base = mxu.next_tag
    sizes = [len(j.a_addresses) for j in jobs]
    offsets = np.cumsum([0] + sizes)
    total = int(offsets[-1])
    outputs = [np.zeros((s, mxu.vec_len_c), dtype=mxu.dtype) for s in sizes]
    remaining = list(sizes)
    done_cycles = [0] * len(jobs)
    received = 0
    first_in = first_out = None

    def collect(vec):
        nonlocal received, first_out
        if vec is None:
            return
        flat = mxu.last_tag - tag_base
        if not 0 <= flat < total:
            raise MxuError(f"unexpected output tag {mxu.last_tag}")
        t = int(np.searchsorted(offsets, flat, side="right") - 1)
        outputs[t][flat - offsets[t]] = vec
        remaining[t] -= 1
        received += 1
        if first_out is None:
            first_out = mxu.cycle - 1
        if remaining[t] == 0:
            done_cycles[t] = mxu.cycle - start_cycle

    mxu.load_b(jobs[0].b_stream)
    collect(mxu.step(None))
    for t, job in enumerate(jobs):
        if t + 1 < len(jobs):
            mxu.load_b(jobs[t + 1].b_stream)
        for i, vec in enumerate(job.a_addresses):
            if first_in is None:
                first_in = mxu.cycle
            collect(mxu.step(vec, new_tile=(i == 0)))
    limit = max_drain if max_drain is not None else mxu.cfg.fill_latency + 8
    spins = 0
    while received < total:
        collect(mxu.step(None))
        spins += 1
        if spins > limit:
            raise MxuError(f"pipeline did not drain: {received}/{total} outputs after {spins} cycles")

    report = CycleReport(
        cycles_total=mxu.cycle - start_cycle,
        fill_latency=first_out - first_in,
        mult_activations=mxu.mult_activations - start_acts,
        useful_conventional_mults=0 if useful_mults is None else useful_mults,
        a_vectors_in=total,
        c_vectors_out=received,
        range_checks=mxu.range_checks - start_checks,
        tile_done_cycles=done_cycles,
    )
    return outputs, report


def mxu_run_tile(mxu: Mxu, a_stream: PackedStream, b_stream: PackedStream):
    """Multiply one A tile by one B tile; returns (C stream, CycleReport)."""
    cfg = mxu.cfg
    if a_stream.side != "A" or a_stream.r != cfg.r:
        raise MxuError(f"A stream must be A-side at r={cfg.r}")
    if a_stream.tile_dims[1] != cfg.tile_k:
        raise MxuError(f"A tile must have {cfg.tile_k} columns, got {a_stream.tile_dims[1]}")
    if b_stream.tile_dims[0] != a_stream.tile_dims[1]:
        raise MxuError("A and B tiles disagree on the shared K dimension")
    outs, report = run_tiles(mxu, [TileJob(a_stream.addresses, b_stream)])
    m, _ = a_stream.tile_dims
    report.useful_conventional_mults = m * cfg.tile_k * cfg.tile_n
    c = PackedStream(outs[0], cfg.r, (m, cfg.tile_n), "C", cfg.output_width, True)
    return c, report


def tile_product(mxu: Mxu, a_stream: PackedStream, b_stream: PackedStream):
    """Convenience: run one tile and return the unpacked C matrix and report."""
    c, report = mxu_run_tile(mxu, a_stream, b_stream)
    return unpack_c(c), report
