"""
The 256x80 macro: 16 AMU rows x 5 AMU columns (4 signal + 1 reference).

Each AMU row receives one 4-bit input, broadcast along the row. The 64 signal
bit columns hold 8 outputs x 8 bit positions of two's-complement weights; column
``n*8 + b`` is bit ``b`` of output ``n`` and lives in signal AMU ``(n*8 + b) // 16``.
Every bit column has its own ADC; codes are recombined by shift-add with the
bit-7 column weighted by -128.

The analog path runs in normalized units (VDD = 1) so that noiseless ABL
voltages and reference levels compare exactly; volts appear only in reports.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adc, charge, variation
from .adc import AdcConfig, RefMode
from .charge import N_CBL, SupplyVoltage
from .errors import ConfigError, DomainError
from .variation import NoiseModel

N_OUTPUTS = 8
WEIGHT_BITS = 8
N_COLUMNS = N_OUTPUTS * WEIGHT_BITS
SIGNAL_AMUS = N_COLUMNS // N_CBL
BIT_WEIGHTS = np.array([1, 2, 4, 8, 16, 32, 64, -128], dtype=np.int64)


@dataclass(frozen=True)
class MacroConfig:
    vdd: float = 0.9
    activated_rows: int = 16
    rho: float = 1.0
    adc: AdcConfig = field(default_factory=AdcConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        SupplyVoltage(self.vdd)
        if self.activated_rows not in adc.SUPPORTED_ROWS:
            raise ConfigError(f"activated_rows must be one of {adc.SUPPORTED_ROWS}")
        if self.rho < 0:
            raise ConfigError("rho must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.adc.ref_mode is RefMode.IN_SRAM and self.threshold != adc.IN_SRAM_THRESHOLD:
            raise ConfigError(
                f"in-SRAM references need threshold 128; rows={self.activated_rows}, "
                f"cutoff={self.adc.cutoff} give {self.threshold} (use ref_mode='ideal')"
            )

    @property
    def threshold(self) -> int:
        return adc.cutoff_threshold(self.adc.cutoff, self.activated_rows)

    @property
    def analysis_mode(self) -> bool:
        """4 activated rows exist only for design-space analysis, not in silicon."""
        return self.activated_rows == 4

    @classmethod
    def ideal(cls, activated_rows: int = 16, **kwargs) -> "MacroConfig":
        """Full-resolution readout, no clipping, no noise: the exact-arithmetic corner."""
        bits = adc.full_resolution_bits(activated_rows)
        return cls(
            activated_rows=activated_rows,
            adc=AdcConfig(bits=bits, ref_mode=RefMode.IDEAL, cutoff=0.0),
            noise=NoiseModel.disabled(),
            **kwargs,
        )


@dataclass(frozen=True)
class BitSlicedWeights:
    """``bits[r, n*8 + b]`` is bit ``b`` of ``weights[r, n]`` in two's complement."""

    bits: np.ndarray

    def column(self, n: int, b: int) -> np.ndarray:
        return self.bits[:, n * WEIGHT_BITS + b]

    def reassemble(self) -> np.ndarray:
        k = self.bits.shape[0]
        sliced = self.bits.reshape(k, -1, WEIGHT_BITS).astype(np.int64)
        return sliced @ BIT_WEIGHTS


@dataclass(frozen=True)
class PMacSample:
    exact: int
    v_abl: float
    code: int
    dequantized: float


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights)
    if w.ndim != 2 or w.size == 0:
        raise DomainError(f"weights must be a non-empty 2-D array, got shape {w.shape}")
    if not np.issubdtype(w.dtype, np.integer):
        if not np.all(w == np.round(w)):
            raise DomainError("weights must be integers")
    w = w.astype(np.int64)
    if w.min() < -128 or w.max() > 127:
        raise DomainError("weights must lie in [-128, 127]")
    return w


def _check_inputs(x) -> np.ndarray:
    x = np.asarray(x)
    if x.size and not np.all(x == np.round(x)):
        raise DomainError("activations must be integers")
    x = x.astype(np.int64)
    if x.size and (x.min() < 0 or x.max() > 15):
        raise DomainError("activations must lie in [0, 15]")
    return x


def bit_slice(weights) -> BitSlicedWeights:
    w = _check_weights(weights)
    u = (w & 0xFF).astype(np.uint8)
    bits = (u[:, :, None] >> np.arange(WEIGHT_BITS, dtype=np.uint8)) & 1
    return BitSlicedWeights(bits.reshape(w.shape[0], -1).astype(np.uint8))


class CimMacro:
    """
    One macro instance: a configuration plus its static comparator offsets.

    Offsets are drawn once from ``(seed, offsets-stream)``; per-tile noise comes
    from ``(seed, tile-stream, stream, k_tile, n_tile)``.
    """

    def __init__(self, cfg: MacroConfig):
        self.cfg = cfg
        self.threshold = cfg.threshold
        self.ladder = adc.build_reference_ladder(cfg.adc, self.threshold, cfg.rho, 1.0)
        rng = variation.substream(cfg.seed, variation.STREAM_OFFSETS)
        offsets = variation.sample_comparator_offsets(cfg.noise, cfg.adc, rng, columns=N_COLUMNS)
        self.offsets = offsets / cfg.vdd
        self._dac_sigmas = cfg.noise.dac_sigmas(cfg.vdd) / cfg.vdd if cfg.noise.enabled else None

    @property
    def step(self) -> float:
        return self.threshold / (1 << self.cfg.adc.bits)

    def convert_tile(self, x, bits, rng: Optional[np.random.Generator] = None):
        """
        Analog pMAC + readout for one tile.

        ``x``: (M, R) activations; ``bits``: (R, C) weight bits with C <= 64.
        Returns exact pMAC, normalized ABL voltage and ADC code, each (M, C).
        """
        cfg = self.cfg
        m, r = x.shape
        c = bits.shape[1]
        if r != cfg.activated_rows or bits.shape[0] != r:
            raise DomainError(f"tile needs {cfg.activated_rows} rows, got x{x.shape} bits{bits.shape}")
        exact = x @ bits.astype(np.int64)

        v_dac = (N_CBL - x) / N_CBL
        if self._dac_sigmas is not None:
            amu_of_col = np.arange(c) // N_CBL
            dn = rng.standard_normal((m, r, SIGNAL_AMUS)) * self._dac_sigmas[x][:, :, None]
            v_dac = v_dac[:, :, None] + dn[:, :, amu_of_col]
        else:
            v_dac = v_dac[:, :, None]
        cbl = np.where(bits[None, :, :] == 1, v_dac, 1.0)
        # inactive rows sit at the zero-product voltage VDD
        total = cbl.sum(axis=1) + (N_CBL - r)
        v_abl = (total + cfg.rho) / (N_CBL + cfg.rho)
        if cfg.noise.enabled and cfg.noise.abl_sigma > 0:
            v_abl = v_abl + rng.standard_normal((m, c)) * (cfg.noise.abl_sigma / cfg.vdd)
        codes = adc.digitize_array(v_abl, self.ladder.levels, cfg.adc.bits, cfg.adc.scheme, self.offsets[:c])
        return exact, v_abl, codes

    def _tile_rng(self, stream: int, kt: int, nt: int):
        if not self.cfg.noise.enabled:
            return None
        return variation.substream(self.cfg.seed, variation.STREAM_TILE, stream, kt, nt)

    def pmac_column(self, inputs, column_bits, column: int = 0, stream: int = 0) -> PMacSample:
        x = _check_inputs(inputs)
        col = np.asarray(column_bits, dtype=np.uint8)
        if x.shape != (self.cfg.activated_rows,) or col.shape != x.shape:
            raise DomainError(f"need {self.cfg.activated_rows} inputs and weight bits")
        bits = np.zeros((x.size, column + 1), dtype=np.uint8)
        bits[:, column] = col
        exact, v, codes = self.convert_tile(x[None, :], bits, self._tile_rng(stream, 0, 0))
        code = int(codes[0, column])
        deq = adc.dequantize_array(code, self.threshold, self.cfg.adc.bits)
        return PMacSample(int(exact[0, column]), float(v[0, column]) * self.cfg.vdd, code, deq.item())

    def mac_cycle(self, inputs, weights, stream: int = 0, k_tile: int = 0, n_tile: int = 0):
        """
        One cycle: R inputs against a (R or 16) x 8 weight tile, 8 outputs.

        Returns ``(outputs, samples)`` where ``samples[n][b]`` is the PMacSample of bit column (n, b).
        """
        r = self.cfg.activated_rows
        x = _check_inputs(inputs)
        w = _check_weights(weights)
        if x.shape != (r,):
            raise DomainError(f"expected {r} inputs, got {x.shape}")
        if w.shape[1] != N_OUTPUTS or w.shape[0] not in (r, N_CBL):
            raise DomainError(f"weight tile must be {r}x8 or 16x8, got {w.shape}")
        bits = bit_slice(w[:r]).bits
        exact, v, codes = self.convert_tile(x[None, :], bits, self._tile_rng(stream, k_tile, n_tile))
        deq = adc.dequantize_array(codes[0], self.threshold, self.cfg.adc.bits)
        out = deq.reshape(N_OUTPUTS, WEIGHT_BITS) @ BIT_WEIGHTS
        samples = [
            [
                PMacSample(int(exact[0, j]), float(v[0, j]) * self.cfg.vdd, int(codes[0, j]), deq[j].item())
                for j in range(n * WEIGHT_BITS, (n + 1) * WEIGHT_BITS)
            ]
            for n in range(N_OUTPUTS)
        ]
        return out, samples

    def matmul(self, X, W, stream: int = 0, trace: Optional["MatmulTrace"] = None):
        """
        ``X`` (M, K) u4 times ``W`` (K, N) i8 through the macro.

        K is tiled by activated rows and N by 8, both zero-padded; tile results
        are accumulated digitally at full precision.
        """
        x = _check_inputs(X)
        w = _check_weights(W)
        if x.ndim != 2 or x.size == 0:
            raise DomainError(f"activations must be a non-empty 2-D array, got shape {x.shape}")
        if x.shape[1] != w.shape[0]:
            raise DomainError(f"inner dimensions differ: {x.shape} x {w.shape}")
        m, k = x.shape
        n = w.shape[1]
        r = self.cfg.activated_rows
        kt_count = -(-k // r)
        nt_count = -(-n // N_OUTPUTS)
        xp = np.zeros((m, kt_count * r), dtype=np.int64)
        xp[:, :k] = x
        wp = np.zeros((kt_count * r, nt_count * N_OUTPUTS), dtype=np.int64)
        wp[:k, :n] = w
        sliced = bit_slice(wp).bits

        def run(kt: int, nt: int):
            xs = xp[:, kt * r : (kt + 1) * r]
            bs = sliced[kt * r : (kt + 1) * r, nt * N_COLUMNS : (nt + 1) * N_COLUMNS]
            exact, _, codes = self.convert_tile(xs, bs, self._tile_rng(stream, kt, nt))
            deq = adc.dequantize_array(codes, self.threshold, self.cfg.adc.bits)
            return exact, deq.reshape(m, N_OUTPUTS, WEIGHT_BITS) @ BIT_WEIGHTS

        jobs = [(kt, nt) for nt in range(nt_count) for kt in range(kt_count)]
        if self.cfg.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(lambda j: run(*j), jobs))
        else:
            results = [run(*j) for j in jobs]

        integral = float(self.step).is_integer()
        out = np.zeros((m, nt_count * N_OUTPUTS), dtype=np.int64 if integral else float)
        for (kt, nt), (exact, part) in zip(jobs, results):
            out[:, nt * N_OUTPUTS : (nt + 1) * N_OUTPUTS] += part
            if trace is not None:
                trace.add(exact, r)
        return out[:, :n]


@dataclass
class MatmulTrace:
    """Collects the exact pMAC distribution seen by the ADCs."""

    histogram: np.ndarray = field(default_factory=lambda: np.zeros(241, dtype=np.int64))

    def add(self, exact, rows: int):
        self.histogram += np.bincount(np.asarray(exact).ravel(), minlength=241)[:241]

    @property
    def conversions(self) -> int:
        return int(self.histogram.sum())

    def fraction_below(self, level: int) -> float:
        total = self.conversions
        return float(self.histogram[:level].sum() / total) if total else 0.0


def pmac_column(inputs, column_bits, cfg: MacroConfig) -> PMacSample:
    return CimMacro(cfg).pmac_column(inputs, column_bits)


def mac_cycle(inputs, weights, cfg: MacroConfig):
    """The 8 shift-added outputs of one macro cycle."""
    return CimMacro(cfg).mac_cycle(inputs, weights)[0]


def matmul(X, W, cfg: MacroConfig, stream: int = 0) -> np.ndarray:
    return CimMacro(cfg).matmul(X, W, stream)


def reference_matmul(X, W) -> np.ndarray:
    """Exact integer product, independent of the macro path."""
    return np.asarray(X, dtype=np.int64) @ np.asarray(W, dtype=np.int64)


def quantized_reference_matmul(X, W, cfg: MacroConfig) -> np.ndarray:
    """
    Exact product with the noiseless per-tile pMAC readout applied arithmetically:
    each bit column's pMAC is clipped to threshold-1 and floored to the ADC step.
    """
    x = np.asarray(X, dtype=np.int64)
    w = np.asarray(W, dtype=np.int64)
    r = cfg.activated_rows
    threshold = cfg.threshold
    step_num, step_den = threshold, 1 << cfg.adc.bits
    out = np.zeros((x.shape[0], w.shape[1]), dtype=float)
    u = w & 0xFF
    for k0 in range(0, x.shape[1], r):
        xs = x[:, k0 : k0 + r]
        for b in range(WEIGHT_BITS):
            pm = xs @ ((u[k0 : k0 + r] >> b) & 1)
            pm = np.minimum(pm, threshold - 1)
            code = (pm * step_den) // step_num
            out += BIT_WEIGHTS[b] * code * (step_num / step_den)
    return out
