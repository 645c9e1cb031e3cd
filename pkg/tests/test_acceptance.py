"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""

import time

import numpy as np
import pytest

from smmsim.fxp import DatapathOverflowError, Matrix, random_matrix
from smmsim.gemm import run_gemm
from smmsim.metrics import (
    dsp_estimate,
    mce_roof,
    measure_point,
    mse_measured,
    resource_report,
    steady_tile_interval,
    throughput_roof,
    utilization_sweep,
)
from smmsim.mxu import Mxu, MxuConfig
from smmsim.reference import (
    OpCounter,
    crossover,
    matmul_naive,
    matmul_strassen,
    ops_total_fractional,
)


def rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


EQUIVALENCE_CONFIGS = [
    MxuConfig("MM", 0, 4, 4),
    MxuConfig("MM", 1, 2, 2),
    MxuConfig("SMM", 1, 2, 2),
    MxuConfig("SMM", 2, 2, 2),
    MxuConfig("SMM", 1, 16, 16),
    MxuConfig("SMM", 2, 6, 6),
]

# name, cfg, multipliers, dsps, min size, clock (MHz), published roof (GOPS)
TABLE = [
    ("MM_0 48x48", MxuConfig("MM", 0, 48, 48), 2304, 1152, (48, 48), 399, 1839),
    ("MM_1 16x16", MxuConfig("MM", 1, 16, 16), 2048, 1024, (32, 32), 398, 1630),
    ("SMM_1 16x16", MxuConfig("SMM", 1, 16, 16), 1792, 896, (32, 32), 380, 1556),
    ("MM_2 6x6", MxuConfig("MM", 2, 6, 6), 2304, 1152, (24, 24), 388, 1788),
    ("SMM_2 6x6", MxuConfig("SMM", 2, 6, 6), 1764, 882, (24, 24), 291, 1341),
    ("SMM_2 6x6 regs", MxuConfig("SMM", 2, 6, 6, q_add_pipeline=True), 1764, 882, (24, 24),
     361, 1663),
]

# filled by criterion 1, read by criterion 7
_SUITE = {"range_checks": 0, "overflows": 0, "runs": 0}


def test_c1_oracle_equivalence(criterion):
    with criterion(1, "oracle equivalence, 6 configs x 100 random GEMMs, exact, < 120 s"):
        start = time.perf_counter()
        mismatches = []
        for ci, cfg in enumerate(EQUIVALENCE_CONFIGS):
            g = rng(1000 + ci)
            hmax, wmax = 2 * cfg.tile_m, 2 * cfg.tile_k
            for t in range(100):
                m = int(g.integers(1, hmax, endpoint=True))
                k = int(g.integers(1, wmax, endpoint=True))
                n = int(g.integers(1, 2 * cfg.tile_n, endpoint=True))
                a = random_matrix(g, m, k, cfg.input_width, cfg.signed)
                b = random_matrix(g, k, n, cfg.input_width, cfg.signed)
                try:
                    c, rep = run_gemm(a, b, cfg, Mxu(cfg))
                except DatapathOverflowError:
                    _SUITE["overflows"] += 1
                    raise
                _SUITE["range_checks"] += rep.range_checks
                _SUITE["runs"] += 1
                if not c.same_values(matmul_naive(a, b)):
                    mismatches.append((cfg.name, t, (m, k, n)))
        elapsed = time.perf_counter() - start
        print(f"criterion 1: {_SUITE['runs']} GEMMs in {elapsed:.1f} s")
        assert mismatches == []
        assert elapsed < 120


@pytest.mark.parametrize("row", TABLE[:5], ids=[r[0] for r in TABLE[:5]])
def test_c2_table_resources(row, criterion):
    name, cfg, mults, dsps, size, _, _ = row
    with criterion(2, "multipliers, DSP estimate and min matrix size match the table"):
        rep = resource_report(cfg)
        assert (rep.multipliers, rep.dsp_estimate, rep.min_matrix) == (mults, dsps, size)


def test_c3_throughput_roofs(criterion):
    with criterion(3, "throughput roofs at the table clocks within +-1 GOPS"):
        for name, cfg, *_, mhz, gops in TABLE:
            got = throughput_roof(cfg, mhz)
            print(f"criterion 3: {name} @ {mhz} MHz -> {got:.2f} GOPS (table {gops})")
            assert abs(got - gops) <= 1, name


@pytest.mark.parametrize("cfg", [
    MxuConfig("SMM", 1, 16, 16),
    MxuConfig("SMM", 2, 6, 6),
    MxuConfig("MM", 1, 16, 16),
    MxuConfig("MM", 2, 6, 6),
], ids=lambda c: c.name)
def test_c4_mce_roof(cfg, criterion):
    with criterion(4, "steady-state MCE over 1000 full tiles >= 0.99 x roof"):
        n = cfg.tile_m  # full-size square tile
        p = measure_point(cfg, n, seed=4, batch=1000)
        roof = float(mce_roof(cfg))
        print(f"criterion 4: {cfg.name} MCE {p.mce:.4f} (roof {roof:.4f})")
        assert p.useful_mults == 1000 * n ** 3
        assert p.mce >= 0.99 * roof


def _interval_run(cfg, tiles):
    g = rng(5)
    n = cfg.tile_m
    a = random_matrix(g, n * tiles, n, cfg.input_width)
    b = random_matrix(g, n, n, cfg.input_width)
    c, rep = run_gemm(a, b, cfg)
    assert c.same_values(matmul_naive(a, b))
    return rep


def test_c5_matrix_size_efficiency(criterion):
    with criterion(5, "SMM_2 6x6 one 24x24 tile per 6 cycles (MSE 4); MM_0 48x48 per 48 (MSE 1)"):
        smm = MxuConfig("SMM", 2, 6, 6)
        rep = _interval_run(smm, 40)
        assert steady_tile_interval(rep) == 6
        assert mse_measured(rep, smm) == 4
        mm = MxuConfig("MM", 0, 48, 48)
        rep = _interval_run(mm, 8)
        assert steady_tile_interval(rep) == 48
        assert mse_measured(rep, mm) == 1


def test_c6_op_count_crossovers(criterion):
    with criterion(6, "op-count crossovers 16/13, equality at 15/12, instrumented 7^r(n/2^r)^3"):
        assert crossover("strassen") == 16
        assert ops_total_fractional(15, "strassen") == ops_total_fractional(15, "conventional")
        assert crossover("winograd", even_only=False) == 13
        assert ops_total_fractional(12, "winograd") == ops_total_fractional(12, "conventional")
        for n in (16, 24, 32):
            g = rng(n)
            a, b = random_matrix(g, n, n, 8), random_matrix(g, n, n, 8)
            for r in (1, 2):
                counter = OpCounter()
                assert matmul_strassen(a, b, r, counter).same_values(matmul_naive(a, b))
                assert counter.mults == 7 ** r * (n // 2 ** r) ** 3


def test_c7_bitwidth_contract(criterion):
    with criterion(7, "8-bit signed r=2: 10-bit leaf inputs, no overflow, 2 mults per DSP"):
        cfg = MxuConfig("SMM", 2, 6, 6, input_width=8, signed=True)
        assert cfg.leaf_input_width == 10
        mxu = Mxu(cfg)
        assert mxu.leaves.in_width == 10
        assert dsp_estimate(cfg.leaf_count * 36, cfg.leaf_input_width) == 882
        # extreme-value operands exercise the widest intermediate values
        for va, vb in ((-128, -128), (127, -128), (127, 127)):
            ea = Matrix(np.full((48, 48), va), 8)
            eb = Matrix(np.full((48, 48), vb), 8)
            c, rep = run_gemm(ea, eb, cfg)
            assert c.same_values(matmul_naive(ea, eb))
            assert rep.range_checks > 0
        # the equivalence suite (criterion 1) ran every GEMM under range checks
        if _SUITE["runs"]:
            assert _SUITE["range_checks"] > 0
        assert _SUITE["overflows"] == 0


def test_c8_utilization_curve(criterion):
    with criterion(8, "sweep 8..96: SMM_2 6x6 >= 1.25 at n=24; MM_0 48x48 <= 0.25 at 24, first >= 0.99 at 48"):
        ns = list(range(8, 97, 8))
        smm = {p.n: p.mce for p in utilization_sweep(MxuConfig("SMM", 2, 6, 6), ns, seed=0)}
        mm = {p.n: p.mce for p in utilization_sweep(MxuConfig("MM", 0, 48, 48), ns, seed=0)}
        print("criterion 8: n   SMM_2 6x6   MM_0 48x48")
        for n in ns:
            print(f"criterion 8: {n:3d}  {smm[n]:.4f}     {mm[n]:.4f}")
        assert smm[24] >= 1.25
        assert mm[24] <= 0.25
        first = min(n for n in ns if mm[n] >= 0.99)
        assert first == 48
