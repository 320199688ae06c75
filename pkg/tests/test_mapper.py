import math

import numpy as np
import pytest

from cimforge import macro, mapper
from cimforge.errors import ConfigError, DomainError
from cimforge.macro import MacroConfig
from cimforge.mapper import DesignPoint, LayerSpec, SweepGrid

import oracles


def conv_layer(w, stride=1, padding=0):
    return LayerSpec("c", "conv2d", w, np.zeros(w.shape[0]), 1.0, 1.0, stride=stride, padding=padding)


def test_1x1_conv_equals_fc():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 16, (2, 6, 4, 5))
    w = rng.integers(-128, 128, (3, 6, 1, 1))
    p = mapper.lower_layer(conv_layer(w), x)
    out = p.fold(p.X @ p.W)
    fc = np.einsum("bchw,oc->bohw", x, w[:, :, 0, 0])
    assert np.array_equal(out, fc)


@pytest.mark.parametrize("stride, padding", [(1, 0), (1, 1), (2, 1)])
def test_3x3_conv_matches_direct(stride, padding):
    rng = np.random.default_rng(stride * 10 + padding)
    x = rng.integers(0, 16, (2, 3, 5, 5))
    w = rng.integers(-128, 128, (4, 3, 3, 3))
    p = mapper.lower_layer(conv_layer(w, stride, padding), x)
    assert np.array_equal(p.fold(p.X @ p.W), oracles.conv2d_direct(x, w, stride, padding))


def test_conv_through_macro_ideal():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 16, (1, 3, 5, 5))
    w = rng.integers(-128, 128, (4, 3, 3, 3))
    p = mapper.lower_layer(conv_layer(w, 1, 1), x)
    out = p.fold(macro.matmul(p.X, p.W, MacroConfig.ideal()))
    assert np.array_equal(out, oracles.conv2d_direct(x, w, 1, 1))


def test_lowering_shape_errors():
    with pytest.raises(DomainError):
        mapper.lower_layer(conv_layer(np.zeros((2, 3, 3, 3), int)), np.zeros((1, 2, 5, 5), int))
    fc = LayerSpec("f", "fc", np.zeros((4, 2), int), np.zeros(2), 1.0, 1.0)
    with pytest.raises(DomainError):
        mapper.lower_layer(fc, np.zeros((1, 5), int))
    with pytest.raises(DomainError):
        LayerSpec("f", "fc", np.full((4, 2), 200), np.zeros(2), 1.0, 1.0)


def test_quantize_activations_rounding():
    assert mapper.quantize_activations([0.0, 0.5, 1.5, 2.5, 20.0, -1.0], 1.0).tolist() == [0, 0, 2, 2, 15, 0]


def test_quantize_weights():
    q, s = mapper.quantize_weights(np.array([-1.0, 0.5, 1.0]))
    assert s == pytest.approx(1 / 127)
    assert q.tolist() == [-127, 64, 127]


def test_error_metrics_examples():
    m = mapper.error_metrics([1, 2, 4], [1, 2, 3])
    assert m["mse"] == pytest.approx(1 / 3)
    assert m["max_abs"] == 1
    assert m["sqnr_db"] == pytest.approx(10 * math.log10(14))
    assert m["exact_match"] == pytest.approx(2 / 3)
    assert mapper.error_metrics([5, 5], [5, 5])["sqnr_db"] == math.inf
    with pytest.raises(DomainError):
        mapper.error_metrics([1], [1, 2])


def test_error_metrics_recomputed():
    rng = np.random.default_rng(3)
    a = rng.normal(size=50)
    b = a + rng.normal(scale=0.1, size=50)
    m = mapper.error_metrics(b, a)
    mse = sum((x - y) ** 2 for x, y in zip(b, a)) / 50
    sig = sum(y * y for y in a) / 50
    assert m["mse"] == pytest.approx(mse)
    assert m["sqnr_db"] == pytest.approx(10 * math.log10(sig / mse))


def test_bundled_workload_shape():
    wl = mapper.bundled_workload()
    assert wl.inputs.shape[1] == wl.layers[0].weights.shape[0]
    assert len(wl.inputs) == len(wl.labels)
    assert mapper.float_accuracy(wl) > 0.9
    assert abs(mapper.integer_accuracy(wl) - mapper.float_accuracy(wl)) < 0.02


def test_workload_roundtrip(tmp_path):
    wl = mapper.bundled_workload()
    mapper.save_workload(wl, tmp_path / "wl")
    back = mapper.load_workload(tmp_path / "wl")
    assert np.array_equal(back.inputs, wl.inputs)
    assert np.array_equal(back.labels, wl.labels)
    for a, b in zip(back.layers, wl.layers):
        assert np.array_equal(a.weights, b.weights)
    assert mapper.integer_accuracy(back) == mapper.integer_accuracy(wl)


def test_ideal_point_is_exact():
    rec = mapper.evaluate_point(DesignPoint(16, None, 0.0, False))
    assert rec.adc_bits == 8
    assert rec.accuracy == rec.integer_accuracy
    assert all(v == 0 for v in rec.layer_mse)
    assert all(v == mapper.SQNR_CAP_DB for v in rec.layer_sqnr_db)


def test_clipping_error_grows_with_cutoff():
    # noiseless full-resolution readout: only clipping differs between points
    mses = [mapper.evaluate_point(DesignPoint(8, None, c, False)).layer_mse[0] for c in (0.0, 0.375, 0.5, 0.625)]
    assert mses[0] == 0
    assert all(a <= b for a, b in zip(mses, mses[1:]))
    assert mses[-1] > 0


def test_one_point_sweep_and_csv():
    recs = mapper.run_sweep(SweepGrid(), repeats=1)
    assert len(recs) == 1
    text = mapper.format_records(recs)
    lines = text.splitlines()
    assert lines[0].split(",") == mapper.CSV_FIELDS
    assert len(lines) == 2
    assert mapper.format_records(mapper.run_sweep(SweepGrid(), repeats=1)) == text
    hist = mapper.format_histograms(recs).splitlines()
    assert sum(int(l.split(",")[-1]) for l in hist[1:]) == recs[0].histogram.sum()


def test_sweep_order_and_parallel():
    grid = SweepGrid(rows=(16, 8), adc_bits=(5, 4), hw_errors=(False,))
    serial = mapper.run_sweep(grid)
    parallel = mapper.run_sweep(grid, workers=4)
    assert [(r.rows, r.adc_bits) for r in serial] == [(8, 4), (8, 5), (16, 4), (16, 5)]
    assert mapper.format_records(serial) == mapper.format_records(parallel)


def test_point_config_ref_mode():
    base = MacroConfig()
    assert mapper.point_config(DesignPoint(16, 4, 0.5), base, 0).adc.ref_mode.value == "in_sram"
    assert mapper.point_config(DesignPoint(8, 4, 0.5), base, 0).adc.ref_mode.value == "ideal"
    assert not mapper.point_config(DesignPoint(hw_errors=False), base, 0).noise.enabled


def test_grid_validation():
    with pytest.raises(ConfigError):
        SweepGrid.from_dict({"rows": [16], "colour": [1]})
    with pytest.raises(ConfigError):
        SweepGrid(rows=(12,))
    with pytest.raises(ConfigError):
        SweepGrid(adc_bits=())
    with pytest.raises(ConfigError):
        mapper.evaluate_point(DesignPoint(), repeats=0)


def test_accuracy_rises_with_bits_at_8_rows():
    wl = mapper.bundled_workload()
    n = len(wl.labels)
    accs = [mapper.evaluate_point(DesignPoint(8, b, 0.5, False)).accuracy for b in (3, 4, 6)]
    se = math.sqrt(0.25 / n)
    assert accs[0] <= accs[1] + 2 * se
    assert accs[1] <= accs[2] + 2 * se
    assert accs[0] < accs[2]
