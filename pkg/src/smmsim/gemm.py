"""Arbitrary-size GEMM on a configured MXU.

Operands are zero-padded up to whole tiles, every (A tile, B tile) pair is
streamed through one simulator instance back to back, and the partial tile
products are summed outside the MXU in ascending K order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .fxp import ConfigurationError, Matrix, check_array, clog2, dtype_for, fits, value_range
from .layout import deinterleave_rows, interleave_rows, PackedStream
from .mxu import CycleReport, Mxu, MxuConfig, TileJob, build_mxu, run_tiles


@dataclass(frozen=True)
class TilePlan:
    m: int
    k: int
    n: int
    tile_m: int
    tile_k: int
    tile_n: int
    grid_m: int
    grid_k: int
    grid_n: int

    @property
    def pad_m(self) -> int:
        return self.grid_m * self.tile_m - self.m

    @property
    def pad_k(self) -> int:
        return self.grid_k * self.tile_k - self.k

    @property
    def pad_n(self) -> int:
        return self.grid_n * self.tile_n - self.n

    @property
    def grid(self) -> tuple[int, int, int]:
        return self.grid_m, self.grid_k, self.grid_n

    @property
    def tile_passes(self) -> int:
        return self.grid_m * self.grid_k * self.grid_n

    def order(self):
        """Tile visiting order: M outer, N middle, K inner (ascending)."""
        for mi in range(self.grid_m):
            for ni in range(self.grid_n):
                for ki in range(self.grid_k):
                    yield mi, ni, ki


def plan_tiles(m: int, k: int, n: int, cfg: MxuConfig) -> TilePlan:
    if min(m, k, n) < 1:
        raise ConfigurationError(f"matrix dims must be positive, got {(m, k, n)}")
    tm, tk, tn = cfg.tile_m, cfg.tile_k, cfg.tile_n
    return TilePlan(m, k, n, tm, tk, tn, math.ceil(m / tm), math.ceil(k / tk), math.ceil(n / tn))


def accumulator_width(cfg: MxuConfig, k_total: int) -> int:
    """Width of the external accumulators for a K dimension of ``k_total``."""
    return 2 * (cfg.datapath_width + cfg.r) + clog2(k_total)


def _check_operand(x: Matrix, cfg: MxuConfig, name: str) -> None:
    lo, hi = value_range(cfg.input_width, cfg.signed)
    if x.values.size and (x.values.min() < lo or x.values.max() > hi):
        raise ConfigurationError(
            f"{name} values exceed the {cfg.input_width}-bit "
            f"{'signed' if cfg.signed else 'unsigned'} MXU inputs"
        )


def _pad(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols), dtype=values.dtype)
    out[:values.shape[0], :values.shape[1]] = values
    return out


def _jobs_for(a: Matrix, b: Matrix, plan: TilePlan, cfg: MxuConfig):
    dt = dtype_for(cfg.output_width)
    ap = _pad(a.values.astype(dt), plan.grid_m * plan.tile_m, plan.grid_k * plan.tile_k)
    bp = _pad(b.values.astype(dt), plan.grid_k * plan.tile_k, plan.grid_n * plan.tile_n)
    tm, tk, tn = plan.tile_m, plan.tile_k, plan.tile_n
    width = cfg.datapath_width
    b_streams = {}
    jobs, keys = [], []
    for mi, ni, ki in plan.order():
        a_tile = ap[mi * tm:(mi + 1) * tm, ki * tk:(ki + 1) * tk]
        if (ki, ni) not in b_streams:
            b_tile = bp[ki * tk:(ki + 1) * tk, ni * tn:(ni + 1) * tn]
            b_streams[ki, ni] = PackedStream(interleave_rows(b_tile.T, cfg.r), cfg.r,
                                             (tk, tn), "B", width)
        jobs.append(TileJob(interleave_rows(a_tile, cfg.r), b_streams[ki, ni]))
        keys.append((mi, ni, ki))
    return jobs, keys


def run_gemm_batch(pairs: Iterable[tuple[Matrix, Matrix]], cfg: MxuConfig,
                   mxu: Mxu | None = None) -> tuple[list[Matrix], CycleReport]:
    """Multiply several independent (A, B) pairs streamed through one MXU.

    The tiles of all pairs form one continuous stream, so the pipeline fill
    is paid once. The report covers the whole stream.
    """
    pairs = list(pairs)
    mxu = build_mxu(cfg) if mxu is None else mxu
    all_jobs, owners = [], []
    plans = []
    for p, (a, b) in enumerate(pairs):
        if a.cols != b.rows:
            raise ConfigurationError(f"inner dimensions differ: {a.shape} x {b.shape}")
        _check_operand(a, cfg, "A")
        _check_operand(b, cfg, "B")
        plan = plan_tiles(a.rows, a.cols, b.cols, cfg)
        plans.append(plan)
        jobs, keys = _jobs_for(a, b, plan, cfg)
        all_jobs.extend(jobs)
        owners.extend((p, key) for key in keys)

    useful = sum(a.rows * a.cols * b.cols for a, b in pairs)
    outs, report = run_tiles(mxu, all_jobs, useful_mults=useful)

    results = []
    acc = []
    for plan in plans:
        width = accumulator_width(cfg, plan.grid_k * plan.tile_k)
        acc.append((np.zeros((plan.grid_m * plan.tile_m, plan.grid_n * plan.tile_n),
                             dtype=dtype_for(width)), width))
    tm, tn = cfg.tile_m, cfg.tile_n
    for (p, (mi, ni, _)), packed in zip(owners, outs):
        c_tile = deinterleave_rows(packed, cfg.r)
        block = acc[p][0][mi * tm:(mi + 1) * tm, ni * tn:(ni + 1) * tn]
        block += c_tile.astype(block.dtype)
        check_array(block, acc[p][1], True, "external accumulator")
        report.range_checks += 1
    for plan, (vals, width) in zip(plans, acc):
        results.append(Matrix(vals[:plan.m, :plan.n], width, True))
    return results, report


def run_gemm(a: Matrix, b: Matrix, cfg: MxuConfig, mxu: Mxu | None = None):
    """C = A @ B on the simulated MXU; returns (C, CycleReport)."""
    (c,), report = run_gemm_batch([(a, b)], cfg, mxu)
    return c, report


# ---------------------------------------------------------------------------
# matrix CSV: first line "rows,cols,width,signed", then one row per line
# ---------------------------------------------------------------------------

def write_matrix_csv(m: Matrix, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([m.rows, m.cols, m.elem_width, int(m.signed)])
    for row in m.values:
        w.writerow(int(v) for v in row)


def read_matrix_csv(fh: TextIO) -> Matrix:
    rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
    if not rows:
        raise ConfigurationError("empty matrix file")
    try:
        n_rows, n_cols, width = (int(x) for x in rows[0][:3])
        signed = rows[0][3].strip().lower() in ("1", "true", "signed")
        body = [[int(x) for x in r] for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"malformed matrix CSV: {exc}") from None
    if len(body) != n_rows or any(len(r) != n_cols for r in body):
        raise ConfigurationError(f"matrix CSV body does not match header {n_rows}x{n_cols}")
    for r in body:
        for v in r:
            if not fits(v, width, signed):
                raise ConfigurationError(f"value {v} does not fit {width} bits")
    return Matrix(body, width, signed)
