"""
Hardware-error models and the DAC Monte-Carlo harness.

Noise placement: one DAC draw per AMU per cycle (all its CBLs share the
post-sharing voltage), one ABL draw per column conversion, and one static
offset per comparator for the lifetime of a macro instance.

Random streams are derived from ``(seed, *key)`` through ``SeedSequence`` spawn
keys, so a tile's noise does not depend on the order tiles are evaluated in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import charge
from .adc import AdcConfig
from .errors import DomainError

ANCHOR_VDD = 0.6
ANCHOR_CODE = 8
ANCHOR_SIGMA = 1.8e-3
TABLE_VDDS = (0.6, 0.9, 1.2)

# stream tags, first element of every spawn key
STREAM_OFFSETS = 0
STREAM_TILE = 1
STREAM_MONTECARLO = 2


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def default_dac_table(anchor_sigma: float = ANCHOR_SIGMA) -> tuple:
    """
    sigma(vdd, code) anchor rows: 1/vdd scaling, mild peak at mid-code.

    Only the (0.6 V, code 8) entry is a measured figure; the shape is a modelling choice.
    """
    codes = np.arange(16)
    shape = 1.0 - 0.5 * ((codes - ANCHOR_CODE) / 8.0) ** 2
    return tuple(
        (vdd, tuple(float(s) for s in anchor_sigma * (ANCHOR_VDD / vdd) * shape)) for vdd in TABLE_VDDS
    )


@dataclass(frozen=True)
class NoiseModel:
    """
    Standard deviations in volts. ``dac_table`` rows are ``(vdd, sigma per code)``
    with vdd ascending; ``None`` means :func:`default_dac_table` at ``dac_anchor_sigma``.
    """

    enabled: bool = True
    dac_anchor_sigma: float = ANCHOR_SIGMA
    abl_sigma: float = 1.0e-3
    cmp_sigma: float = 2.0e-3
    dac_table: Optional[tuple] = None

    def __post_init__(self):
        for name in ("dac_anchor_sigma", "abl_sigma", "cmp_sigma"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        table = self.dac_table if self.dac_table is not None else default_dac_table(self.dac_anchor_sigma)
        table = tuple((float(v), tuple(float(s) for s in row)) for v, row in table)
        vdds = [v for v, _ in table]
        if any(len(row) != 16 for _, row in table) or any(s < 0 for _, row in table for s in row):
            raise DomainError("dac_table rows need 16 non-negative sigmas")
        if vdds != sorted(set(vdds)):
            raise DomainError("dac_table vdd anchors must be strictly increasing")
        object.__setattr__(self, "dac_table", table)

    @classmethod
    def disabled(cls) -> "NoiseModel":
        return cls(enabled=False)

    def dac_sigmas(self, vdd) -> np.ndarray:
        """Per-code sigma at ``vdd``, linear in vdd between anchors, clamped outside."""
        if not self.enabled:
            return np.zeros(16)
        v = charge._vdd(vdd)
        vdds = np.array([a for a, _ in self.dac_table])
        rows = np.array([r for _, r in self.dac_table])
        return np.array([np.interp(v, vdds, rows[:, c]) for c in range(16)])

    def dac_sigma(self, vdd, code: int) -> float:
        return float(self.dac_sigmas(vdd)[charge.check_activation(code)])

    def scaled(self, factor: float) -> "NoiseModel":
        """Every sigma multiplied by ``factor``."""
        table = tuple((v, tuple(s * factor for s in row)) for v, row in self.dac_table)
        return NoiseModel(
            self.enabled, self.dac_anchor_sigma * factor, self.abl_sigma * factor, self.cmp_sigma * factor, table
        )


def sample_dac_noise(model: NoiseModel, vdd, code: int, rng: np.random.Generator) -> float:
    if not model.enabled:
        return 0.0
    return float(rng.normal(0.0, model.dac_sigma(vdd, code)))


def dac_noise_array(model: NoiseModel, vdd, codes, rng: np.random.Generator) -> np.ndarray:
    """One draw per entry of ``codes`` (volts)."""
    codes = np.asarray(codes, dtype=np.int64)
    if not model.enabled:
        return np.zeros(codes.shape)
    return rng.standard_normal(codes.shape) * model.dac_sigmas(vdd)[codes]


def abl_noise_array(model: NoiseModel, shape, rng: np.random.Generator) -> np.ndarray:
    if not model.enabled or model.abl_sigma == 0:
        return np.zeros(shape)
    return rng.standard_normal(shape) * model.abl_sigma


def sample_comparator_offsets(
    model: NoiseModel, config: AdcConfig, rng: np.random.Generator, columns: Optional[int] = None
) -> np.ndarray:
    """Static offsets, shape (n_comparators,) or (columns, n_comparators)."""
    shape = (config.n_comparators,) if columns is None else (columns, config.n_comparators)
    if not model.enabled or model.cmp_sigma == 0:
        return np.zeros(shape)
    return rng.normal(0.0, model.cmp_sigma, size=shape)


@dataclass(frozen=True)
class TrialStatistics:
    n: int
    mean: float
    stddev: float
    min: float
    max: float

    @classmethod
    def from_samples(cls, samples) -> "TrialStatistics":
        s = np.asarray(samples, dtype=float)
        if s.size < 2:
            raise DomainError("need at least 2 samples")
        # numpy's var is two-pass: mean first, then squared deviations
        return cls(int(s.size), float(s.mean()), float(s.std(ddof=1)), float(s.min()), float(s.max()))


def run_montecarlo_dac(vdd, code: int, trials: int, seed: int, model: Optional[NoiseModel] = None) -> TrialStatistics:
    """Statistics of the DAC output voltage over ``trials`` independent noise draws."""
    if trials < 2:
        raise DomainError(f"trials must be >= 2, got {trials}")
    model = NoiseModel() if model is None else model
    v = charge._vdd(vdd)
    nominal = charge.dac_convert(code, v)
    rng = substream(seed, STREAM_MONTECARLO, code, round(v * 1000))
    noise = dac_noise_array(model, v, np.full(trials, code), rng)
    return TrialStatistics.from_samples(nominal + noise)
