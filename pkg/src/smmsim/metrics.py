"""Analytical resource/efficiency model and measured-run metrics.

Throughput is counted in conventional operations: every multiply-accumulate
of a plain matrix product is 2 operations, whatever the architecture
actually executes. That is why a Strassen design can show a multiplier
compute efficiency (MCE) above 1.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fxp import random_matrix
from .gemm import plan_tiles, run_gemm_batch
from .mxu import CycleReport, MxuConfig

# both multipliers of a packed DSP block accept up to this many input bits
DSP_PACKED_INPUT_WIDTH = 18

REPORT_FIELDS = (
    "multipliers",
    "adders",
    "dsp_estimate",
    "mult_input_width",
    "min_matrix_h",
    "min_matrix_w",
    "mce_roof",
    "mse_roof",
    "throughput_roof_gops",
)


class SoftLogicWarning(UserWarning):
    """Multipliers too wide to pack two per DSP block."""


def multiplier_count(cfg: MxuConfig) -> int:
    return cfg.branching ** cfg.r * cfg.leaf_x * cfg.leaf_y


def conventional_slots(cfg: MxuConfig) -> int:
    """Conventional multiplications completed per cycle at full rate (8^r X Y)."""
    return 8 ** cfg.r * cfg.leaf_x * cfg.leaf_y


def mult_input_width(cfg: MxuConfig) -> int:
    return cfg.leaf_input_width


def dsp_estimate(mult_count: int, mult_input_width: int) -> int:
    if mult_input_width < 1:
        raise ValueError(f"multiplier input width must be >= 1, got {mult_input_width}")
    if mult_input_width <= DSP_PACKED_INPUT_WIDTH:
        return math.ceil(mult_count / 2)
    warnings.warn(
        f"{mult_count} multipliers of {mult_input_width} bits exceed the packed DSP "
        f"width of {DSP_PACKED_INPUT_WIDTH}; counting one multiplier per DSP",
        SoftLogicWarning,
        stacklevel=2,
    )
    return mult_count


def throughput_roof(cfg: MxuConfig, freq_mhz: float) -> float:
    """Peak GOPS at the given clock: 2 ops per conventional MAC slot per cycle."""
    if freq_mhz <= 0:
        raise ValueError(f"frequency must be positive, got {freq_mhz}")
    return 2 * conventional_slots(cfg) * freq_mhz * 1e6 / 1e9


def mce_roof(cfg: MxuConfig) -> Fraction:
    if cfg.family == "SMM":
        return Fraction(8, 7) ** cfg.r
    return Fraction(1)


def mse_roof(cfg: MxuConfig) -> int:
    return 2 ** cfg.r


def min_matrix_size(cfg: MxuConfig) -> tuple[int, int]:
    return cfg.leaf_y << cfg.r, cfg.leaf_x << cfg.r


def adder_count(cfg: MxuConfig, phrasing: str = "functional") -> int:
    """Scalar adders in the addition vectors of all recursion levels.

    ``functional`` counts one adder per element of the vectors actually added
    (quadrant slices shrink 4x per level). ``halving`` counts one adder per
    column of the quadrant blocks, so the count halves per level; the two
    agree at r = 1.
    """
    if phrasing not in ("functional", "halving"):
        raise ValueError(f"unknown phrasing {phrasing!r}")
    total = 0
    x, y = cfg.leaf_x, cfg.leaf_y
    for lvl in range(1, cfg.r + 1):
        nodes = cfg.branching ** (lvl - 1)
        below = cfg.r - lvl
        shrink = 4 ** below if phrasing == "functional" else 2 ** below
        a_slice, c_slice = x * shrink, y * shrink
        if cfg.family == "SMM":
            per_node = 5 * a_slice + 5 * a_slice + 8 * c_slice
        else:
            per_node = 4 * c_slice
        total += nodes * per_node
    return total


@dataclass(frozen=True)
class ResourceReport:
    multipliers: int
    adders: int
    adders_halving: int
    dsp_estimate: int
    mult_input_width: int
    min_matrix: tuple[int, int]
    mce_roof: float
    mse_roof: int
    throughput_roof_gops: float | None = None

    def to_dict(self) -> dict:
        d = {
            "multipliers": self.multipliers,
            "adders": self.adders,
            "dsp_estimate": self.dsp_estimate,
            "mult_input_width": self.mult_input_width,
            "min_matrix_h": self.min_matrix[0],
            "min_matrix_w": self.min_matrix[1],
            "mce_roof": self.mce_roof,
            "mse_roof": self.mse_roof,
            "throughput_roof_gops": self.throughput_roof_gops,
        }
        d["adders_paper_phrasing"] = self.adders_halving
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        d = self.to_dict()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        w.writerow("" if d[k] is None else d[k] for k in REPORT_FIELDS)
        return buf.getvalue()


def resource_report(cfg: MxuConfig, freq_mhz: float | None = None) -> ResourceReport:
    mults = multiplier_count(cfg)
    width = mult_input_width(cfg)
    dsps = dsp_estimate(mults, width)
    return ResourceReport(
        multipliers=mults,
        adders=adder_count(cfg),
        adders_halving=adder_count(cfg, "halving"),
        dsp_estimate=dsps,
        mult_input_width=width,
        min_matrix=min_matrix_size(cfg),
        mce_roof=float(mce_roof(cfg)),
        mse_roof=mse_roof(cfg),
        throughput_roof_gops=None if freq_mhz is None else throughput_roof(cfg, freq_mhz),
    )


# ---------------------------------------------------------------------------
# measured metrics
# ---------------------------------------------------------------------------

def mce_measured(report: CycleReport, cfg: MxuConfig) -> float:
    if report.cycles_total <= 0:
        raise ValueError("report has no cycles")
    return report.useful_conventional_mults / (multiplier_count(cfg) * report.cycles_total)


def utilization(report: CycleReport, cfg: MxuConfig) -> float:
    """Fraction of multiplier-cycles doing a (possibly padded) product."""
    if report.cycles_total <= 0:
        raise ValueError("report has no cycles")
    return report.mult_activations / (multiplier_count(cfg) * report.cycles_total)


def steady_tile_interval(report: CycleReport) -> int:
    """Most common spacing between consecutive tile completions."""
    done = report.tile_done_cycles
    if len(done) < 2:
        raise ValueError("need at least two tiles to measure an interval")
    gaps = np.diff(done)
    vals, counts = np.unique(gaps, return_counts=True)
    return int(vals[np.argmax(counts)])


def mse_measured(report: CycleReport, cfg: MxuConfig) -> float:
    """Steady-state conventional mults per cycle over the minimum matrix area."""
    h, w = min_matrix_size(cfg)
    per_tile = cfg.tile_m * cfg.tile_k * cfg.tile_n
    return per_tile / steady_tile_interval(report) / (h * w)


@dataclass(frozen=True)
class SweepPoint:
    n: int
    cycles: int
    mult_activations: int
    useful_mults: int
    mce: float
    utilization: float


def point_seed(seed: int, n: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, n])


def batch_size_for(cfg: MxuConfig, n: int, fill_fraction: float = 0.005) -> int:
    """Number of back-to-back n x n products needed so that the one-off
    pipeline fill is at most ``fill_fraction`` of the measured cycles."""
    if not 0 < fill_fraction < 1:
        raise ValueError(f"fill_fraction must be in (0, 1), got {fill_fraction}")
    plan = plan_tiles(n, n, n, cfg)
    per_product = plan.tile_passes * (cfg.tile_m >> cfg.r)
    overhead = cfg.fill_latency + 1  # B preload cycle + drain
    steady = overhead * (1 - fill_fraction) / fill_fraction
    return max(1, math.ceil(steady / per_product))


def measure_point(cfg: MxuConfig, n: int, seed: int = 0, fill_fraction: float = 0.005,
                  batch: int | None = None) -> SweepPoint:
    """Stream a batch of random n x n products through one MXU and measure MCE."""
    rng = np.random.Generator(np.random.PCG64(point_seed(seed, n)))
    if batch is None:
        batch = batch_size_for(cfg, n, fill_fraction)
    pairs = [(random_matrix(rng, n, n, cfg.input_width, cfg.signed),
              random_matrix(rng, n, n, cfg.input_width, cfg.signed)) for _ in range(batch)]
    _, report = run_gemm_batch(pairs, cfg)
    return SweepPoint(
        n=n,
        cycles=report.cycles_total,
        mult_activations=report.mult_activations,
        useful_mults=report.useful_conventional_mults,
        mce=mce_measured(report, cfg),
        utilization=utilization(report, cfg),
    )


def _measure_star(args):
    return measure_point(*args)


def utilization_sweep(cfg: MxuConfig, n_values, seed: int = 0, fill_fraction: float = 0.005,
                      jobs: int = 1) -> list[SweepPoint]:
    """Measured MCE for n x n products over ``n_values``, in input order.

    Each point streams enough back-to-back products that the pipeline fill
    costs at most ``fill_fraction`` of the run, i.e. it reports the rate the
    design sustains on a workload of n x n products.
    """
    n_values = [int(n) for n in n_values]
    if any(n < 1 for n in n_values):
        raise ValueError("matrix sizes must be positive")
    args = [(cfg, n, seed, fill_fraction) for n in n_values]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_measure_star, args))
    return [_measure_star(a) for a in args]


def sweep_csv(points, fh=None) -> str:
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "cycles", "mult_activations", "useful_mults", "mce", "utilization"])
    for p in points:
        w.writerow([p.n, p.cycles, p.mult_activations, p.useful_mults,
                    f"{p.mce:.4f}", f"{p.utilization:.4f}"])
    return buf.getvalue() if fh is None else ""

