"""
Flash ADC models for the ABL readout.

Larger pMAC means a lower ABL voltage, so a comparator fires (returns 1) when the
signal is at or below its reference. Scalar functions are the readable reference
path and count comparator evaluations; :func:`digitize_array` is the vectorized
path used by the macro.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import amu, charge
from .errors import ConfigError, DomainError

SUPPORTED_ROWS = (4, 8, 16)
IN_SRAM_BITS = 4
IN_SRAM_THRESHOLD = 128


class RefMode(str, enum.Enum):
    IN_SRAM = "in_sram"
    IDEAL = "ideal"


class Scheme(str, enum.Enum):
    COARSE_FINE = "coarse_fine"
    FULL_FLASH = "full_flash"


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 4
    ref_mode: RefMode = RefMode.IN_SRAM
    cutoff: float = 0.5
    scheme: Scheme = Scheme.COARSE_FINE

    def __post_init__(self):
        object.__setattr__(self, "ref_mode", RefMode(self.ref_mode))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if int(self.bits) != self.bits or self.bits < 1:
            raise ConfigError(f"ADC bits must be a positive integer, got {self.bits}")
        if not (0.0 <= self.cutoff < 1.0):
            raise ConfigError(f"cutoff must be in [0, 1), got {self.cutoff}")
        if self.ref_mode is RefMode.IN_SRAM and self.bits != IN_SRAM_BITS:
            raise ConfigError("in-SRAM references only provide a 4-bit ladder")

    @property
    def n_comparators(self) -> int:
        return n_comparators(self.bits, self.scheme)


def n_comparators(bits: int, scheme: Scheme) -> int:
    if Scheme(scheme) is Scheme.COARSE_FINE:
        # one coarse comparator plus a (bits-1)-bit thermometer over each half
        return 1 << (bits - 1)
    return (1 << bits) - 1


def full_resolution_bits(activated_rows: int) -> int:
    """Bits needed to read every pMAC level 0..15*R exactly."""
    if activated_rows not in SUPPORTED_ROWS:
        raise ConfigError(f"activated rows must be one of {SUPPORTED_ROWS}, got {activated_rows}")
    return math.ceil(math.log2(15 * activated_rows + 1))


def cutoff_threshold(cutoff: float, activated_rows: int) -> int:
    """threshold = round((1 - cutoff) * 2**q), q the full-readout resolution."""
    q = full_resolution_bits(activated_rows)
    if not (0.0 <= cutoff < 1.0):
        raise ConfigError(f"cutoff must be in [0, 1), got {cutoff}")
    return math.floor((1.0 - cutoff) * (1 << q) + 0.5)


def clip_pmac(pmac, threshold: int):
    """pMAC values at or above the threshold become the top code's value threshold-1."""
    return np.minimum(pmac, threshold - 1)


@dataclass(frozen=True)
class ReferenceLadder:
    """
    Comparison levels for N = 1 .. 2**bits - 1, strictly decreasing in volts.

    ``decision_points[i]`` is the pMAC at which level ``i+1`` starts firing.
    """

    levels: np.ndarray
    decision_points: np.ndarray
    bits: int
    threshold: int
    rho: float
    vdd: float

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.shape != ((1 << self.bits) - 1,):
            raise DomainError(f"ladder needs {(1 << self.bits) - 1} levels, got {levels.shape}")
        if not np.all(np.diff(levels) < 0):
            raise DomainError("reference ladder must be strictly decreasing")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    def level(self, n: int) -> float:
        """Reference N (1-based, as labelled in hardware)."""
        return float(self.levels[n - 1])


def build_reference_ladder(config: AdcConfig, threshold: int, rho: float = 1.0, vdd=1.0) -> ReferenceLadder:
    v = charge._vdd(vdd)
    n = np.arange(1, 1 << config.bits)
    if config.ref_mode is RefMode.IN_SRAM:
        if config.bits != IN_SRAM_BITS or threshold != IN_SRAM_THRESHOLD:
            raise ConfigError(
                f"in-SRAM ladder exists only for bits=4, threshold=128 (got bits={config.bits}, "
                f"threshold={threshold}); use ref_mode='ideal'"
            )
        levels = np.array([amu.ref_column_voltage(int(k), rho, v) for k in n])
        points = 8 * n
    else:
        if threshold < 1:
            raise ConfigError(f"threshold must be >= 1, got {threshold}")
        points = n * (threshold / (1 << config.bits))
        levels = charge.abl_from_pmac(points, rho, v)
    return ReferenceLadder(levels, np.asarray(points, dtype=float), config.bits, threshold, rho, v)


class ComparatorCounter:
    """Counts comparator evaluations; pass one to the scalar digitizers."""

    def __init__(self):
        self.count = 0

    def __call__(self, v_signal, v_ref, offset=0.0) -> int:
        self.count += 1
        return compare(v_signal, v_ref, offset)


def compare(v_signal: float, v_ref: float, offset: float = 0.0) -> int:
    """1 iff ``v_signal <= v_ref + offset``; ties fire."""
    return int(v_signal <= v_ref + offset)


def _offsets(offsets, count: int) -> np.ndarray:
    if offsets is None:
        return np.zeros(count)
    arr = np.asarray(offsets, dtype=float)
    if arr.shape != (count,) or not np.all(np.isfinite(arr)):
        raise DomainError(f"expected {count} finite comparator offsets, got shape {arr.shape}")
    return arr


def coarse_fine_digitize(v_abl: float, ladder: ReferenceLadder, offsets=None, counter=None) -> int:
    """
    Coarse MSB against the mid reference, then a thermometer over the selected half.

    Comparator 0 is the coarse one; comparator k (k >= 1) is reused for level k in
    the lower half and level half+k in the upper half, so it carries one offset.
    """
    cmp = counter if counter is not None else compare
    half = 1 << (ladder.bits - 1)
    off = _offsets(offsets, half)
    msb = cmp(v_abl, ladder.level(half), off[0])
    base = half if msb else 0
    fine = 0
    for k in range(1, half):
        fine += cmp(v_abl, ladder.level(base + k), off[k])
    return half * msb + fine


def full_flash_digitize(v_abl: float, ladder: ReferenceLadder, offsets=None, counter=None) -> int:
    """Thermometer over every level; the code is the number of comparators that fire."""
    cmp = counter if counter is not None else compare
    n = len(ladder.levels)
    off = _offsets(offsets, n)
    return sum(cmp(v_abl, ladder.level(k), off[k - 1]) for k in range(1, n + 1))


def digitize(v_abl: float, ladder: ReferenceLadder, scheme: Scheme, offsets=None, counter=None) -> int:
    if Scheme(scheme) is Scheme.COARSE_FINE:
        return coarse_fine_digitize(v_abl, ladder, offsets, counter)
    return full_flash_digitize(v_abl, ladder, offsets, counter)


def digitize_array(v, levels, bits: int, scheme: Scheme, offsets=None) -> np.ndarray:
    """
    Vectorized digitizer.

    ``v`` has shape (..., C); ``levels`` (2**bits - 1,) in the same units as ``v``;
    ``offsets`` is None or (C, n_comparators) and is broadcast over leading axes.
    """
    v = np.asarray(v, dtype=float)
    levels = np.asarray(levels, dtype=float)
    ncmp = n_comparators(bits, scheme)
    if offsets is None:
        offsets = np.zeros((v.shape[-1], ncmp))
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (v.shape[-1], ncmp):
        raise DomainError(f"offsets must have shape {(v.shape[-1], ncmp)}, got {offsets.shape}")
    if Scheme(scheme) is Scheme.FULL_FLASH:
        fired = v[..., None] <= levels + offsets
        return fired.sum(axis=-1).astype(np.int64)
    half = 1 << (bits - 1)
    msb = (v <= levels[half - 1] + offsets[:, 0]).astype(np.int64)
    if half == 1:
        return msb
    low = levels[: half - 1]
    high = levels[half:]
    refs = np.where(msb[..., None] == 1, high, low) + offsets[:, 1:]
    fine = (v[..., None] <= refs).sum(axis=-1)
    return half * msb + fine


def dequantize(code: int, threshold: int, bits: int) -> int:
    """Lower edge of the code's pMAC bucket: code * threshold / 2**bits."""
    if not (0 <= code < (1 << bits)):
        raise DomainError(f"code {code} out of range for {bits} bits")
    if threshold % (1 << bits):
        raise ConfigError(f"threshold {threshold} is not a multiple of 2**{bits}")
    return code * (threshold >> bits)


def dequantize_array(codes, threshold: int, bits: int) -> np.ndarray:
    """
    Vectorized :func:`dequantize`. When the step is fractional the result is a
    float array; values are dyadic rationals, so they are still exact.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if threshold % (1 << bits) == 0:
        return codes * (threshold >> bits)
    return codes * (threshold / (1 << bits))
