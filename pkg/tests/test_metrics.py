import csv
import io
import json
import warnings
from fractions import Fraction

import pytest

from smmsim.metrics import (
    REPORT_FIELDS,
    SoftLogicWarning,
    adder_count,
    batch_size_for,
    dsp_estimate,
    mce_roof,
    measure_point,
    min_matrix_size,
    mse_roof,
    multiplier_count,
    resource_report,
    sweep_csv,
    throughput_roof,
)
from smmsim.mxu import MxuConfig

TABLE = [
    # cfg, multipliers, dsps, min size (values from the published comparison table)
    (MxuConfig("MM", 0, 48, 48), 2304, 1152, (48, 48)),
    (MxuConfig("MM", 1, 16, 16), 2048, 1024, (32, 32)),
    (MxuConfig("SMM", 1, 16, 16), 1792, 896, (32, 32)),
    (MxuConfig("MM", 2, 6, 6), 2304, 1152, (24, 24)),
    (MxuConfig("SMM", 2, 6, 6), 1764, 882, (24, 24)),
]


@pytest.mark.parametrize("cfg,mults,dsps,size", TABLE, ids=lambda v: getattr(v, "name", None))
def test_table_resources(cfg, mults, dsps, size):
    rep = resource_report(cfg)
    assert (rep.multipliers, rep.dsp_estimate, rep.min_matrix) == (mults, dsps, size)


def test_roofs():
    assert mce_roof(MxuConfig("SMM", 2, 6, 6)) == Fraction(64, 49)
    assert round(float(mce_roof(MxuConfig("SMM", 1, 2, 2))), 4) == 1.1429
    assert mce_roof(MxuConfig("MM", 2, 6, 6)) == 1
    assert mse_roof(MxuConfig("SMM", 2, 6, 6)) == 4
    assert min_matrix_size(MxuConfig("SMM", 1, 4, 2)) == (4, 8)


def test_throughput_roof_formula():
    cfg = MxuConfig("MM", 0, 48, 48)
    # 2 ops per MAC, 2304 MAC slots, 399 MHz
    assert throughput_roof(cfg, 399) == pytest.approx(2 * 2304 * 399e6 / 1e9)
    with pytest.raises(ValueError):
        throughput_roof(cfg, 0)


def test_dsp_packing_threshold():
    assert dsp_estimate(7, 18) == 4
    with pytest.warns(SoftLogicWarning):
        assert dsp_estimate(7, 19) == 7
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        resource_report(MxuConfig("SMM", 2, 6, 6, input_width=16))


def test_adder_counts():
    assert adder_count(MxuConfig("SMM", 1, 16, 16)) == 288
    assert adder_count(MxuConfig("SMM", 1, 16, 16), "halving") == 288
    assert adder_count(MxuConfig("SMM", 2, 6, 6)) == 1188
    assert adder_count(MxuConfig("SMM", 2, 6, 6), "halving") == 972
    assert adder_count(MxuConfig("MM", 2, 6, 6), "halving") == 240
    assert adder_count(MxuConfig("MM", 0, 48, 48)) == 0


def test_report_serialization():
    rep = resource_report(MxuConfig("SMM", 2, 6, 6), 361)
    d = json.loads(rep.to_json())
    assert set(REPORT_FIELDS) <= set(d)
    assert d["mult_input_width"] == 10
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == REPORT_FIELDS
    assert rows[1][0] == "1764"
    assert resource_report(MxuConfig()).to_dict()["throughput_roof_gops"] is None


def test_measure_point_small():
    cfg = MxuConfig("SMM", 1, 2, 2)
    p = measure_point(cfg, 4, seed=1, batch=50)
    assert p.useful_mults == 50 * 64
    assert p.mce <= float(mce_roof(cfg))
    assert 0 < p.mce <= p.utilization * float(mce_roof(cfg)) + 1e-12
    assert batch_size_for(cfg, 4, 0.01) >= 1
    out = sweep_csv([p])
    assert out.splitlines()[0] == "n,cycles,mult_activations,useful_mults,mce,utilization"


def test_measure_point_is_seeded():
    cfg = MxuConfig("MM", 0, 2, 2)
    assert measure_point(cfg, 3, seed=4, batch=3) == measure_point(cfg, 3, seed=4, batch=3)
