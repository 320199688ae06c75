"""
Acceptance criteria, each at its stated tolerance and runtime limit.

A summary line per criterion is printed at the end of the pytest run.
"""

import contextlib
import time
from fractions import Fraction

import numpy as np
import pytest

from cimforge import adc, amu, charge, cli, costmodel, macro, mapper, tensorio, variation
from cimforge.adc import AdcConfig
from cimforge.macro import MacroConfig
from cimforge.mapper import DesignPoint

import oracles
from conftest import ACCEPTANCE


@contextlib.contextmanager
def criterion(key, limit_s):
    info = {"detail": ""}
    t0 = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        ACCEPTANCE[key] = (False, f"{type(exc).__name__}: {exc}".splitlines()[0])
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < limit_s
    ACCEPTANCE[key] = (ok, f"{info['detail']} ({elapsed:.2f}s, limit {limit_s}s)".strip())
    assert ok, f"criterion {key} took {elapsed:.2f}s, limit {limit_s}s"


def test_1_dac_transfer_table():
    with criterion(1, 1.0) as info:
        for vdd in (0.6, 0.9, 1.0, 1.2):
            for x in range(16):
                v = charge.dac_convert(x, vdd)
                assert v == (16 - x) * vdd / 16
                assert v == float(Fraction(vdd) * oracles.charge_sum(oracles.dac_capacitors(x)))
            assert charge.dac_convert(8, vdd) == vdd / 2
        info["detail"] = "16 codes x 4 supplies exact; code 8 = VDD/2"


def test_2_reference_ladder():
    with criterion(2, 1.0) as info:
        for vdd in (0.6, 0.9, 1.0, 1.2):
            v = [amu.ref_column_voltage(n, 0.0, vdd) for n in range(16)]
            assert v[0] == vdd
            assert v[8] == pytest.approx(48 / 64 * vdd, abs=1e-15)
            assert v[15] == pytest.approx(17 / 32 * vdd, abs=1e-15)
            assert all(a > b for a, b in zip(v, v[1:]))
        assert amu.ref_column_voltage(8, 0.0, 1.0) == 0.75
        assert amu.ref_column_voltage(15, 0.0, 1.0) == 17 / 32
        info["detail"] = "N=0,8,15 -> VDD, 48/64 VDD, 17/32 VDD; strictly decreasing"


def test_3_adc_staircase():
    with criterion(3, 1.0) as info:
        cfg = AdcConfig()
        for rho in (0.0, 0.5, 1.0, 2.0):
            ladder = adc.build_reference_ladder(cfg, 128, rho, 1.0)
            levels = list(ladder.levels)
            for p in range(241):
                v = charge.abl_from_pmac(p, rho, 1.0)
                code = adc.coarse_fine_digitize(v, ladder)
                assert code == min(p // 8, 15)
                assert code == oracles.flash_code(v, levels)
        info["detail"] = "241 levels x 4 rho values"


def test_4_exact_readout_matmul():
    with criterion(4, 10.0) as info:
        rng = np.random.default_rng(2024)
        macros = {r: macro.CimMacro(MacroConfig.ideal(r)) for r in (4, 8, 16)}
        for i in range(200):
            m, k, n = rng.integers(1, 17), rng.integers(1, 65), rng.integers(1, 25)
            X = rng.integers(0, 16, (m, k))
            W = rng.integers(-128, 128, (k, n))
            y = macros[(4, 8, 16)[i % 3]].matmul(X, W)
            assert y.dtype == np.int64
            assert y.tolist() == oracles.int_matmul(X, W)
        info["detail"] = "200 instances bit-exact"


def test_5_montecarlo_sigma_recovery():
    with criterion(5, 5.0) as info:
        stats = variation.run_montecarlo_dac(0.6, 8, 10_000, seed=0)
        rel = abs(stats.stddev - 1.8e-3) / 1.8e-3
        info["detail"] = f"sigma {stats.stddev * 1e3:.4f} mV, {rel * 100:.2f}% off"
        assert rel < 0.05


def test_6_cost_anchors():
    with criterion(6, 1.0) as info:
        for vdd, eff in ((0.6, 50.07), (0.9, 22.19), (1.2, 9.77)):
            assert round(costmodel.efficiency_at(vdd), 2) == eff
        for vdd, mhz in ((0.6, 76.9), (0.9, 227.27), (1.2, 435.0)):
            digits = 2 if vdd == 0.9 else 1
            assert round(costmodel.frequency_at(vdd) / 1e6, digits) == mhz
        for vdd, gops in ((0.9, 45.54), (1.2, 89.04)):
            report = costmodel.throughput_report(MacroConfig(vdd=vdd))
            assert round(report.gops_per_2kb, 2) == gops
        info["detail"] = "efficiency, frequency and throughput anchors to printed precision"


def test_7_adc_energy_comparison():
    with criterion(7, 1.0) as info:
        c = costmodel.adc_energy_comparison()
        assert round(c.saving * 100, 1) == 43.9
        assert (c.cf_comparisons, c.flash_comparisons) == (8, 15)
        info["detail"] = f"saving {c.saving * 100:.1f}%, comparators 8 vs 15"


def test_8_workload_substitute():
    with criterion(8, 60.0) as info:
        wl = mapper.bundled_workload()
        float_acc = mapper.float_accuracy(wl)

        # (i) noise-off accuracy non-decreasing in ADC bits
        accs = [mapper.evaluate_point(DesignPoint(8, b, 0.5, False), wl).accuracy for b in (3, 4, 5, 6)]
        assert all(a <= b for a, b in zip(accs, accs[1:])), accs

        # (ii) default noise, 4-bit, 8 rows, cutoff 0.5: every repeat within 2 pp of float
        rec = mapper.evaluate_point(DesignPoint(8, 4, 0.5, True), wl, repeats=10)
        worst = float_acc - rec.accuracy_min
        assert worst <= 0.02, worst

        # (iii) cutoff 0 + full-resolution ideal ADC equals the integer network exactly
        exact_logits, _ = mapper.run_network(wl, mapper.exact_matmul)
        for rows in (4, 8, 16):
            mac = macro.CimMacro(MacroConfig.ideal(rows))
            logits, _ = mapper.run_network(wl, lambda X, W, i: mac.matmul(X, W, stream=i))
            assert np.array_equal(logits, exact_logits)
        info["detail"] = (
            f"bits 3-6 acc {[round(a, 4) for a in accs]}; noisy mean drop "
            f"{(float_acc - rec.accuracy) * 100:.2f} pp, worst {worst * 100:.2f} pp"
        )


def _cli_outputs(tmp_path, argv, name):
    out = tmp_path / name
    assert cli.main([*argv, "-o", str(out)]) == 0
    return out.read_bytes()


def test_9_cli_determinism(tmp_path):
    with criterion(9, 30.0) as info:
        rng = np.random.default_rng(1)
        tensorio.save(tmp_path / "x.csv", rng.integers(0, 16, (8, 70)))
        tensorio.save(tmp_path / "w.csv", rng.integers(-128, 128, (70, 20)))
        x, w = str(tmp_path / "x.csv"), str(tmp_path / "w.csv")
        runs = {
            "dac-transfer": ["dac-transfer", "--montecarlo", "200"],
            "adc-transfer": ["adc-transfer"],
            "refgen": ["refgen"],
            "mac": ["mac"],
            "matmul": ["matmul", "--x", x, "--w", w],
            "montecarlo": ["montecarlo", "--trials", "500", "--vdds", "0.6,0.9"],
            "sweep": ["sweep"],
            "energy": ["energy"],
        }
        for name, argv in runs.items():
            first = _cli_outputs(tmp_path, [*argv, "--seed", "7"], f"{name}.a")
            again = _cli_outputs(tmp_path, [*argv, "--seed", "7"], f"{name}.b")
            par = _cli_outputs(tmp_path, [*argv, "--seed", "7", "--workers", "4"], f"{name}.c")
            assert first == again == par, name
        grid = tmp_path / "grid.json"
        grid.write_text('{"rows": [8, 16], "adc_bits": [4, 5], "hw_errors": [true]}')
        a = _cli_outputs(tmp_path, ["sweep", "--grid", str(grid), "--seed", "7"], "g.a")
        b = _cli_outputs(tmp_path, ["sweep", "--grid", str(grid), "--seed", "7", "--workers", "4"], "g.b")
        assert a == b
        info["detail"] = "8 commands x 3 runs (rerun, 4 workers) byte-identical; 4-point grid serial == parallel"
