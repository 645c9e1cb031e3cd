import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smmsim.fxp import ConfigurationError, Matrix, random_matrix
from smmsim.layout import QuadrantSlices, deinterleave_rows, pack_a, pack_b
from smmsim.metrics import adder_count, multiplier_count
from smmsim.mxu import (
    Mxu,
    MxuConfig,
    MxuError,
    TileJob,
    a_addition_bank,
    b_addition_bank,
    build_mxu,
    mxu_run_tile,
    q_addition_bank,
    run_tiles,
    tile_product,
)
from smmsim.reference import matmul_naive

CONFIGS = [
    MxuConfig("MM", 0, 2, 2),
    MxuConfig("MM", 1, 3, 2),
    MxuConfig("MM", 2, 2, 2),
    MxuConfig("SMM", 1, 2, 2),
    MxuConfig("SMM", 1, 2, 3),
    MxuConfig("SMM", 2, 2, 3, q_add_pipeline=True),
    MxuConfig("SMM", 2, 3, 2, input_width=6, signed=False),
]


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def random_tiles(cfg, g, m=None):
    m = cfg.tile_m if m is None else m
    a = random_matrix(g, m, cfg.tile_k, cfg.input_width, cfg.signed)
    b = random_matrix(g, cfg.tile_k, cfg.tile_n, cfg.input_width, cfg.signed)
    return a, b


def test_banks_reproduce_2x2_strassen():
    a = QuadrantSlices(*(np.array([v]) for v in (1, 2, 3, 4)))
    b = QuadrantSlices(*(np.array([v]) for v in (5, 6, 7, 8)))
    t, s = a_addition_bank(a), b_addition_bank(b)
    q = [x * y for x, y in zip(t, s)]
    c = [int(v[0]) for v in q_addition_bank(q)]
    assert c == [1 * 5 + 2 * 7, 1 * 6 + 2 * 8, 3 * 5 + 4 * 7, 3 * 6 + 4 * 8]


def test_q_bank_rejects_ragged_inputs():
    q = [np.zeros(2)] * 6 + [np.zeros(3)]
    with pytest.raises(ConfigurationError):
        q_addition_bank(q)


def test_mm0_2x2_example():
    cfg = MxuConfig("MM", 0, 2, 2)
    a = Matrix([[1, 2], [3, 4]], 8)
    c, rep = tile_product(build_mxu(cfg), pack_a(a, 0), pack_b(a, 0))
    assert c.tolist() == [[7, 10], [15, 22]]
    assert rep.fill_latency == cfg.fill_latency == 3


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c.name)
def test_single_tile_exact(cfg):
    g = rng(cfg.leaf_count)
    for _ in range(3):
        a, b = random_tiles(cfg, g)
        c, rep = tile_product(Mxu(cfg), pack_a(a, cfg.r), pack_b(b, cfg.r))
        assert c.same_values(matmul_naive(a, b))
        assert rep.fill_latency == cfg.fill_latency
        assert rep.c_vectors_out == rep.a_vectors_in == cfg.tile_m >> cfg.r


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c.name)
def test_back_to_back_equals_independent_runs(cfg):
    g = rng(99)
    tiles = [random_tiles(cfg, g) for _ in range(4)]
    jobs = [TileJob(pack_a(a, cfg.r).addresses, pack_b(b, cfg.r)) for a, b in tiles]
    outs, rep = run_tiles(Mxu(cfg), jobs)
    for (a, b), packed in zip(tiles, outs):
        solo, _ = mxu_run_tile(Mxu(cfg), pack_a(a, cfg.r), pack_b(b, cfg.r))
        assert packed.tolist() == solo.addresses.tolist()
    # back to back: one tile completes every m cycles once the pipe is full
    m = cfg.tile_m >> cfg.r
    assert np.diff(rep.tile_done_cycles).tolist() == [m] * 3


def test_reloading_the_same_b_tile_is_stable():
    cfg = MxuConfig("SMM", 1, 2, 2)
    a, b = random_tiles(cfg, rng(5))
    jobs = [TileJob(pack_a(a, 1).addresses, pack_b(b, 1))] * 3
    outs, _ = run_tiles(Mxu(cfg), jobs)
    ref = matmul_naive(a, b).values
    for packed in outs:
        assert (deinterleave_rows(packed, 1) == ref).all()


def test_steady_throughput_1000_cycles():
    cfg = MxuConfig("SMM", 1, 2, 2)
    g = rng(7)
    m = cfg.tile_m >> cfg.r
    n_tiles = 1000 // m
    jobs = []
    for _ in range(n_tiles):
        a, b = random_tiles(cfg, g)
        jobs.append(TileJob(pack_a(a, 1).addresses, pack_b(b, 1)))
    _, rep = run_tiles(Mxu(cfg), jobs)
    assert rep.cycles_total == n_tiles * m + cfg.fill_latency + 1
    assert rep.mult_activations == n_tiles * m * multiplier_count(cfg)


def test_tile_without_b_load_is_rejected():
    cfg = MxuConfig("MM", 0, 2, 2)
    mxu = Mxu(cfg)
    with pytest.raises(MxuError):
        mxu.step(np.zeros(2, dtype=np.int64), new_tile=True)
    mxu = Mxu(cfg)
    mxu.load_b(Matrix.zeros(2, 2, 8))
    # the load starts on this cycle, so the tile may only begin on the next one
    with pytest.raises(MxuError):
        mxu.step(np.zeros(2, dtype=np.int64), new_tile=True)


def test_input_out_of_range_rejected():
    cfg = MxuConfig("MM", 0, 2, 2, input_width=4)
    mxu = Mxu(cfg)
    with pytest.raises(Exception):
        mxu.load_b(Matrix([[100, 0], [0, 0]], 8))


@pytest.mark.parametrize("cfg,mults", [
    (MxuConfig("SMM", 2, 8, 8), 3136),
    (MxuConfig("MM", 1, 32, 32), 8192),
    (MxuConfig("SMM", 1, 16, 16), 1792),
    (MxuConfig("MM", 0, 48, 48), 2304),
])
def test_structural_counts(cfg, mults):
    mxu = build_mxu(cfg)
    assert mxu.multiplier_count == mults == multiplier_count(cfg)
    assert mxu.leaf_count == cfg.branching ** cfg.r
    assert mxu.adder_count == adder_count(cfg)


def test_fill_latency_formula():
    for cfg in CONFIGS:
        expect = cfg.leaf_x + cfg.leaf_y - 1 + (cfg.r if cfg.family == "SMM" else 0) \
            + cfg.r * (2 if cfg.q_add_pipeline else 1)
        assert cfg.fill_latency == expect


def test_bitwidths():
    cfg = MxuConfig("SMM", 2, 6, 6, input_width=8)
    assert cfg.leaf_input_width == 10
    assert cfg.accumulator_width == 2 * 10 + 3
    assert MxuConfig("SMM", 1, 2, 2, input_width=8, signed=False).leaf_input_width == 10
    assert MxuConfig("MM", 2, 2, 2, input_width=8).leaf_input_width == 8


def test_extreme_values_do_not_overflow():
    for cfg in (MxuConfig("SMM", 2, 2, 2, 8), MxuConfig("SMM", 2, 2, 2, 8, signed=False)):
        lo, hi = (-128, 127) if cfg.signed else (0, 255)
        for va, vb in ((lo, lo), (hi, hi), (lo, hi)):
            a = Matrix(np.full((cfg.tile_m, cfg.tile_k), va), 8, cfg.signed)
            b = Matrix(np.full((cfg.tile_k, cfg.tile_n), vb), 8, cfg.signed)
            c, _ = tile_product(Mxu(cfg), pack_a(a, 2), pack_b(b, 2))
            assert c.same_values(matmul_naive(a, b))


def test_fault_injection_is_detected():
    cfg = MxuConfig("SMM", 1, 2, 2)
    a, b = random_tiles(cfg, rng(3))
    c, _ = tile_product(Mxu(cfg, fault="q_bank"), pack_a(a, 1), pack_b(b, 1))
    assert not c.same_values(matmul_naive(a, b))


def test_determinism():
    cfg = MxuConfig("SMM", 2, 2, 2)
    runs = []
    for _ in range(2):
        a, b = random_tiles(cfg, rng(11))
        c, rep = mxu_run_tile(Mxu(cfg), pack_a(a, 2), pack_b(b, 2))
        runs.append((c.addresses.tolist(), rep.to_dict()))
    assert runs[0] == runs[1]


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(CONFIGS), st.integers(0, 2 ** 32 - 1))
def test_tile_product_property(cfg, seed):
    a, b = random_tiles(cfg, rng(seed))
    c, _ = tile_product(Mxu(cfg), pack_a(a, cfg.r), pack_b(b, cfg.r))
    assert c.same_values(matmul_naive(a, b))
