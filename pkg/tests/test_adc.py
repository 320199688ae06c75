import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cimforge import adc, charge
from cimforge.adc import AdcConfig, ComparatorCounter, RefMode, Scheme
from cimforge.errors import ConfigError, DomainError

import oracles

IN_SRAM = AdcConfig()


def ladder(rho=1.0, vdd=1.0):
    return adc.build_reference_ladder(IN_SRAM, 128, rho, vdd)


@pytest.mark.parametrize(
    "cutoff, rows, expected",
    [(0.5, 16, 128), (0.625, 4, 24), (0.0, 16, 256), (0.5, 8, 64), (0.375, 4, 40), (0.0, 4, 64)],
)
def test_cutoff_threshold(cutoff, rows, expected):
    assert adc.cutoff_threshold(cutoff, rows) == expected


def test_cutoff_matches_definition():
    for rows in (4, 8, 16):
        q = math.ceil(math.log2(15 * rows + 1))
        for cutoff in (0.0, 0.375, 0.5, 0.625):
            th = adc.cutoff_threshold(cutoff, rows)
            assert math.isclose(1 - th / 2**q, cutoff)


def test_cutoff_rows_4_clips_to_23():
    th = adc.cutoff_threshold(0.625, 4)
    assert adc.clip_pmac(np.array([23, 24, 60]), th).tolist() == [23, 23, 23]


def test_unsupported_rows():
    with pytest.raises(ConfigError):
        adc.cutoff_threshold(0.5, 12)


def test_config_validation():
    with pytest.raises(ConfigError):
        AdcConfig(bits=5)
    with pytest.raises(ConfigError):
        AdcConfig(cutoff=1.0)
    AdcConfig(bits=6, ref_mode="ideal")


def test_in_sram_ladder_level_8():
    assert ladder(rho=0.0).level(8) == 0.75


def test_in_sram_needs_threshold_128():
    with pytest.raises(ConfigError):
        adc.build_reference_ladder(IN_SRAM, 64)


def test_ideal_one_bit_midpoint():
    lad = adc.build_reference_ladder(AdcConfig(bits=1, ref_mode="ideal"), 128, 0.0)
    assert lad.decision_points.tolist() == [64]
    assert lad.level(1) == charge.abl_from_pmac(64, 0.0)


def test_ideal_six_bit_steps_of_two():
    lad = adc.build_reference_ladder(AdcConfig(bits=6, ref_mode="ideal"), 128, 1.0)
    assert len(lad.levels) == 63
    assert lad.decision_points.tolist() == [2 * n for n in range(1, 64)]


def test_ideal_equals_in_sram_at_native_point():
    for rho in (0.0, 1.0, 2.0):
        a = adc.build_reference_ladder(IN_SRAM, 128, rho, 0.9)
        b = adc.build_reference_ladder(AdcConfig(ref_mode="ideal"), 128, rho, 0.9)
        assert np.array_equal(a.levels, b.levels)


def test_compare_tie_rule():
    assert adc.compare(0.70, 0.75) == 1
    assert adc.compare(0.80, 0.75) == 0
    assert adc.compare(0.75, 0.75) == 1


def test_coarse_fine_examples():
    lad = ladder()
    assert adc.coarse_fine_digitize(charge.abl_from_pmac(0, 1.0), lad) == 0
    assert adc.coarse_fine_digitize(charge.abl_from_pmac(64, 1.0), lad) == 8
    assert adc.coarse_fine_digitize(charge.abl_from_pmac(150, 1.0), lad) == 15


def test_full_flash_examples():
    lad = ladder()
    assert adc.full_flash_digitize(charge.abl_from_pmac(0, 1.0), lad) == 0
    assert adc.full_flash_digitize(charge.abl_from_pmac(127, 1.0), lad) == 15


@pytest.mark.parametrize("rho", [0.0, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("vdd", [0.6, 0.9, 1.0, 1.2])
def test_staircase_exhaustive(rho, vdd):
    lad = ladder(rho, vdd)
    levels = list(lad.levels)
    for p in range(241):
        v = charge.abl_from_pmac(p, rho, vdd)
        expected = min(p // 8, 15)
        assert adc.coarse_fine_digitize(v, lad) == expected
        assert adc.full_flash_digitize(v, lad) == expected
        assert oracles.flash_code(v, levels) == expected


def test_vectorized_digitizer_matches_scalar():
    lad = ladder(1.0, 0.9)
    rng = np.random.default_rng(3)
    v = rng.uniform(0.3, 0.9, (50, 4))
    off = rng.normal(0, 2e-3, (4, 8))
    off_ff = rng.normal(0, 2e-3, (4, 15))
    cf = adc.digitize_array(v, lad.levels, 4, Scheme.COARSE_FINE, off)
    ff = adc.digitize_array(v, lad.levels, 4, Scheme.FULL_FLASH, off_ff)
    for i in range(50):
        for c in range(4):
            assert cf[i, c] == adc.coarse_fine_digitize(v[i, c], lad, off[c])
            assert ff[i, c] == adc.full_flash_digitize(v[i, c], lad, off_ff[c])


def test_comparator_counts():
    lad = ladder()
    for p in (0, 63, 64, 200):
        v = charge.abl_from_pmac(p, 1.0)
        c = ComparatorCounter()
        adc.coarse_fine_digitize(v, lad, counter=c)
        assert c.count == 8
        c = ComparatorCounter()
        adc.full_flash_digitize(v, lad, counter=c)
        assert c.count == 15
    assert IN_SRAM.n_comparators == 8
    assert AdcConfig(bits=4, scheme="full_flash").n_comparators == 15


@settings(max_examples=50)
@given(st.lists(st.floats(-6e-3, 6e-3), min_size=8, max_size=8), st.sampled_from([0.0, 1.0, 2.0]))
def test_code_monotone_in_pmac_with_offsets(offsets, rho):
    lad = ladder(rho)
    codes = [adc.coarse_fine_digitize(charge.abl_from_pmac(p, rho), lad, offsets) for p in range(241)]
    assert all(a <= b for a, b in zip(codes, codes[1:]))


@settings(max_examples=50)
@given(st.lists(st.floats(-6e-3, 6e-3), min_size=15, max_size=15))
def test_full_flash_monotone_with_offsets(offsets):
    lad = ladder()
    codes = [adc.full_flash_digitize(charge.abl_from_pmac(p, 1.0), lad, offsets) for p in range(241)]
    assert all(a <= b for a, b in zip(codes, codes[1:]))


@pytest.mark.parametrize("k", range(1, 8))
@pytest.mark.parametrize("delta", [-3e-3, 3e-3])
def test_offset_locality(k, delta):
    # one pMAC step is 1/272 V at rho=1, VDD=1; 3 mV stays within a single step
    lad = ladder()
    off = np.zeros(8)
    off[k] = delta
    for p in range(241):
        v = charge.abl_from_pmac(p, 1.0)
        if adc.coarse_fine_digitize(v, lad, off) != adc.coarse_fine_digitize(v, lad):
            assert min(abs(p - 8 * k), abs(p - 8 * (8 + k))) < 8


def test_malformed_ladder_and_offsets():
    with pytest.raises(DomainError):
        adc.ReferenceLadder(np.array([0.5, 0.6, 0.4]), np.zeros(3), 2, 4, 0.0, 1.0)
    with pytest.raises(DomainError):
        adc.coarse_fine_digitize(0.5, ladder(), offsets=[0.0] * 7)


@pytest.mark.parametrize("code, threshold, bits, expected", [(8, 128, 4, 64), (0, 64, 4, 0), (15, 128, 4, 120)])
def test_dequantize(code, threshold, bits, expected):
    assert adc.dequantize(code, threshold, bits) == expected


def test_dequantize_errors_and_fractional_array():
    with pytest.raises(ConfigError):
        adc.dequantize(3, 24, 4)
    with pytest.raises(DomainError):
        adc.dequantize(16, 128, 4)
    assert adc.dequantize_array([0, 1, 15], 24, 4).tolist() == [0.0, 1.5, 22.5]
