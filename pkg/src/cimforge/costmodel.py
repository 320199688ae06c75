"""
Calibrated energy / latency / throughput model.

Descriptive, not physical: measured silicon figures are reproduced exactly at
their supply voltages and interpolated log-linearly in between.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import adc
from .adc import ComparatorCounter, Scheme
from .charge import VDD_MAX, VDD_MIN
from .errors import DomainError

EFFICIENCY_TOPS_W = ((0.6, 50.07), (0.9, 22.19), (1.2, 9.77))
FREQUENCY_HZ = ((0.6, 76.9e6), (0.9, 1.0 / 4.4e-9), (1.2, 435e6))
GOPS_PER_2KB = ((0.9, 45.54), (1.2, 89.04))
AMU_ENERGY_SHARE = 0.114
ADC_DELAY_SHARE = 0.318
ADC_ENERGY_RATIO = 1.0 - 0.439  # coarse-fine / R-ladder flash
ARRAY_KB = 4.5
AREA_MM2 = 0.0324
OUTPUTS_PER_CYCLE = 8


@dataclass(frozen=True)
class CostAnchors:
    efficiency: tuple = EFFICIENCY_TOPS_W
    frequency: tuple = FREQUENCY_HZ
    throughput: tuple = GOPS_PER_2KB
    amu_energy_share: float = AMU_ENERGY_SHARE
    adc_delay_share: float = ADC_DELAY_SHARE
    adc_energy_ratio: float = ADC_ENERGY_RATIO

    def __post_init__(self):
        for name in ("efficiency", "frequency", "throughput"):
            vdds = [v for v, _ in getattr(self, name)]
            if vdds != sorted(set(vdds)):
                raise DomainError(f"{name} anchors must be strictly increasing in vdd")


DEFAULT_ANCHORS = CostAnchors()


def _check_vdd(vdd: float) -> float:
    if not (VDD_MIN <= vdd <= VDD_MAX):
        raise DomainError(f"vdd={vdd} V outside [{VDD_MIN}, {VDD_MAX}] V")
    return float(vdd)


def _loglinear(vdd: float, series) -> float:
    """Linear interpolation of log(value) in vdd; linear extrapolation past the end anchors."""
    xs = np.array([v for v, _ in series])
    ys = np.log([y for _, y in series])
    for x, y in series:
        if vdd == x:
            return float(y)
    if len(xs) == 1:
        return float(math.exp(ys[0]))
    i = int(np.clip(np.searchsorted(xs, vdd) - 1, 0, len(xs) - 2))
    t = (vdd - xs[i]) / (xs[i + 1] - xs[i])
    return float(math.exp(ys[i] + t * (ys[i + 1] - ys[i])))


def efficiency_at(vdd: float, anchors: CostAnchors = DEFAULT_ANCHORS) -> float:
    """TOPS/W at 16 activated rows."""
    return _loglinear(_check_vdd(vdd), anchors.efficiency)


def frequency_at(vdd: float, anchors: CostAnchors = DEFAULT_ANCHORS) -> float:
    """Operating frequency in Hz."""
    return _loglinear(_check_vdd(vdd), anchors.frequency)


def ops_per_cycle(activated_rows: int) -> int:
    # multiply and add counted separately for every active row x output
    return 2 * activated_rows * OUTPUTS_PER_CYCLE


def raw_gops_per_2kb(vdd: float, activated_rows: int = 16, anchors: CostAnchors = DEFAULT_ANCHORS) -> float:
    """Mechanistic throughput: ops/cycle x frequency, scaled from the 4.5KB array to 2KB."""
    return ops_per_cycle(activated_rows) * frequency_at(vdd, anchors) * 1e-9 * (2.0 / ARRAY_KB)


def throughput_calibration(vdd: float, anchors: CostAnchors = DEFAULT_ANCHORS) -> float:
    """Ratio of the measured GOPS/2KB to the mechanistic figure, log-linear in vdd."""
    factors = tuple((v, g / raw_gops_per_2kb(v, 16, anchors)) for v, g in anchors.throughput)
    return _loglinear(_check_vdd(vdd), factors)


def gops_per_2kb(vdd: float, activated_rows: int = 16, anchors: CostAnchors = DEFAULT_ANCHORS) -> float:
    return raw_gops_per_2kb(vdd, activated_rows, anchors) * throughput_calibration(vdd, anchors)


@dataclass(frozen=True)
class AdcEnergyComparison:
    cf_comparisons: int
    flash_comparisons: int
    ladder_energy: float
    in_sram_ref_energy: float
    cf_energy: float
    flash_energy: float

    @property
    def ratio(self) -> float:
        return self.cf_energy / self.flash_energy

    @property
    def saving(self) -> float:
        return 1.0 - self.ratio

    @property
    def comparator_ratio(self) -> float:
        return self.cf_comparisons / self.flash_comparisons


def count_comparisons(scheme: Scheme, bits: int = 4) -> int:
    """Comparator evaluations per conversion, measured by running the digitizer."""
    cfg = adc.AdcConfig(bits=bits, ref_mode=adc.RefMode.IDEAL, cutoff=0.0)
    ladder = adc.build_reference_ladder(cfg, 1 << bits, 0.0, 1.0)
    counter = ComparatorCounter()
    adc.digitize(0.5, ladder, scheme, counter=counter)
    return counter.count


def adc_energy_comparison(
    ladder_energy: float = 4.0, zero_cost_references: bool = False, anchors: CostAnchors = DEFAULT_ANCHORS
) -> AdcEnergyComparison:
    """
    Energy per conversion in comparator-evaluation units:
    ``E = comparisons + reference term``. The R-ladder term is ``ladder_energy``;
    the in-SRAM reference term is solved so the coarse-fine/flash ratio hits the
    measured value. With ``zero_cost_references`` both reference terms are 0 and
    only the comparator count matters.
    """
    cf = count_comparisons(Scheme.COARSE_FINE)
    flash = count_comparisons(Scheme.FULL_FLASH)
    if zero_cost_references:
        ladder_energy = ref_energy = 0.0
    else:
        ref_energy = anchors.adc_energy_ratio * (flash + ladder_energy) - cf
        if ref_energy < 0:
            raise DomainError(f"ladder_energy={ladder_energy} cannot reproduce the calibrated ratio")
    return AdcEnergyComparison(cf, flash, ladder_energy, ref_energy, cf + ref_energy, flash + ladder_energy)


def adc_energy_proxy(bits: int, scheme: Scheme) -> float:
    """ADC energy relative to the 4-bit coarse-fine design, by comparator count."""
    return adc.n_comparators(bits, scheme) / adc.n_comparators(4, Scheme.COARSE_FINE)


@dataclass(frozen=True)
class CostReport:
    vdd: float
    activated_rows: int
    tops_per_watt: float
    frequency_hz: float
    cycle_time_s: float
    ops_per_cycle: int
    energy_per_cycle_J: float
    gops_per_2kb: float
    gops_per_2kb_raw: float
    energy_breakdown: dict = field(default_factory=dict)
    delay_breakdown: dict = field(default_factory=dict)
    area_mm2: float = AREA_MM2

    def to_dict(self) -> dict:
        return asdict(self)


def throughput_report(cfg, anchors: CostAnchors = DEFAULT_ANCHORS) -> CostReport:
    """Cost summary for a :class:`~cimforge.macro.MacroConfig` (only vdd and rows matter)."""
    vdd = _check_vdd(cfg.vdd)
    rows = cfg.activated_rows
    eff = efficiency_at(vdd, anchors)
    freq = frequency_at(vdd, anchors)
    ops = ops_per_cycle(rows)
    energy = {"amu": anchors.amu_energy_share, "periphery_adc": 1.0 - anchors.amu_energy_share}
    delay = {"adc": anchors.adc_delay_share, "other": 1.0 - anchors.adc_delay_share}
    return CostReport(
        vdd=vdd,
        activated_rows=rows,
        tops_per_watt=eff,
        frequency_hz=freq,
        cycle_time_s=1.0 / freq,
        ops_per_cycle=ops,
        energy_per_cycle_J=ops / (eff * 1e12),
        gops_per_2kb=gops_per_2kb(vdd, rows, anchors),
        gops_per_2kb_raw=raw_gops_per_2kb(vdd, rows, anchors),
        energy_breakdown=energy,
        delay_breakdown=delay,
    )
