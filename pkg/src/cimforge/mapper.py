"""
Maps quantized network layers onto the macro and runs design-space sweeps.

The bundled workload is a deterministic synthetic 10-class task on 8x8 images
with a 64-32-10 fully connected network, trained here in numpy and quantized to
u4 activations / i8 weights (symmetric per-tensor scales, round-half-even).
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import adc, costmodel, tensorio
from .adc import AdcConfig, RefMode, Scheme
from .errors import ConfigError, DomainError
from .macro import CimMacro, MacroConfig, MatmulTrace
from .variation import NoiseModel

SQNR_CAP_DB = 300.0
ACT_LEVELS = 15
WEIGHT_MAX = 127


class LayerKind(str, enum.Enum):
    FULLY_CONNECTED = "fc"
    CONV2D = "conv2d"


@dataclass
class LayerSpec:
    """
    One integer layer. ``weights`` are i8 in matmul layout (K, N) for FC and
    (C_out, C_in, kh, kw) for Conv2D; ``act_scale`` is the scale of the u4 input
    activations, ``weight_scale`` that of the i8 weights.
    """

    name: str
    kind: LayerKind
    weights: np.ndarray
    bias: np.ndarray
    act_scale: float
    weight_scale: float
    relu: bool = True
    weights_float: Optional[np.ndarray] = None
    bias_float: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.kind = LayerKind(self.kind)
        self.weights = np.asarray(self.weights)
        if self.weights.min() < -128 or self.weights.max() > WEIGHT_MAX:
            raise DomainError(f"layer {self.name}: weights outside [-128, 127]")
        expected = 2 if self.kind is LayerKind.FULLY_CONNECTED else 4
        if self.weights.ndim != expected:
            raise DomainError(f"layer {self.name}: {self.kind.value} weights need {expected} dims")

    @property
    def out_features(self) -> int:
        return self.weights.shape[1] if self.kind is LayerKind.FULLY_CONNECTED else self.weights.shape[0]


def quantize_activations(x, scale: float) -> np.ndarray:
    return np.clip(np.round(np.asarray(x, dtype=float) / scale), 0, ACT_LEVELS).astype(np.int64)


def quantize_weights(w, percentile: float = 100.0) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor i8 quantization; the scale maps the ``percentile`` of |w| to 127."""
    w = np.asarray(w, dtype=float)
    peak = float(np.percentile(np.abs(w), percentile))
    scale = peak / WEIGHT_MAX if peak > 0 else 1.0
    return np.clip(np.round(w / scale), -128, WEIGHT_MAX).astype(np.int64), scale


# ---------------------------------------------------------------------------
# lowering


@dataclass
class LoweredProblem:
    X: np.ndarray
    W: np.ndarray
    out_shape: tuple

    def fold(self, out: np.ndarray) -> np.ndarray:
        """Matmul result (M, N) back to the layer's output layout."""
        if len(self.out_shape) == 2:
            return out.reshape(self.out_shape)
        b, c, h, w = self.out_shape
        return out.reshape(b, h, w, c).transpose(0, 3, 1, 2)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """(B, C, H, W) -> (B*H_out*W_out, C*kh*kw), patch order (c, i, j)."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DomainError("kernel larger than padded input")
    cols = np.empty((b, ho, wo, c, kh, kw), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride].transpose(
                0, 2, 3, 1
            )
    return cols.reshape(b * ho * wo, c * kh * kw)


def lower_layer(layer: LayerSpec, activations) -> LoweredProblem:
    x = np.asarray(activations)
    w = layer.weights
    if layer.kind is LayerKind.FULLY_CONNECTED:
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise DomainError(f"layer {layer.name}: input {x.shape} does not match weights {w.shape}")
        return LoweredProblem(x, w, (x.shape[0], w.shape[1]))
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DomainError(f"layer {layer.name}: input {x.shape} does not match weights {w.shape}")
    c_out, c_in, kh, kw = w.shape
    cols = im2col(x, kh, kw, layer.stride, layer.padding)
    b, _, h, wd = x.shape
    ho = (h + 2 * layer.padding - kh) // layer.stride + 1
    wo = (wd + 2 * layer.padding - kw) // layer.stride + 1
    return LoweredProblem(cols, w.reshape(c_out, -1).T, (b, c_out, ho, wo))


# ---------------------------------------------------------------------------
# workload


@dataclass
class Workload:
    name: str
    layers: list
    inputs: np.ndarray  # float, already in [0, 1]
    labels: np.ndarray
    input_scale: float

    @property
    def input_codes(self) -> np.ndarray:
        return quantize_activations(self.inputs, self.input_scale)


def _forward_float(layers, x):
    h = x
    for layer in layers:
        h = h @ layer.weights_float + layer.bias_float
        if layer.relu:
            h = np.maximum(h, 0.0)
    return h


def float_accuracy(workload: Workload) -> float:
    logits = _forward_float(workload.layers, workload.inputs)
    return float(np.mean(np.argmax(logits, axis=1) == workload.labels))


def _make_dataset(rng, n, prototypes, noise=0.3, shift=0):
    labels = rng.integers(0, len(prototypes), n)
    imgs = np.empty((n, 8, 8))
    for i, y in enumerate(labels):
        dy, dx = rng.integers(-shift, shift + 1, 2)
        imgs[i] = np.roll(prototypes[y], (dy, dx), axis=(0, 1))
    imgs += rng.normal(0.0, noise, imgs.shape)
    return np.clip(imgs, 0.0, 1.0).reshape(n, 64), labels


def _prototypes(rng, n_classes=10):
    yy, xx = np.mgrid[0:8, 0:8]
    protos = np.zeros((n_classes, 8, 8))
    for c in range(n_classes):
        for _ in range(3):
            cy, cx = rng.uniform(0, 7, 2)
            s = rng.uniform(0.8, 2.0)
            protos[c] += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        protos[c] /= protos[c].max()
    return protos


def _train_mlp(x, y, hidden, n_classes, rng, steps=600, lr=0.01):
    """Full-batch Adam on softmax cross-entropy."""
    d = x.shape[1]
    params = [
        rng.normal(0, math.sqrt(2.0 / d), (d, hidden)),
        np.zeros(hidden),
        rng.normal(0, math.sqrt(2.0 / hidden), (hidden, n_classes)),
        np.zeros(n_classes),
    ]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    onehot = np.eye(n_classes)[y]
    for t in range(1, steps + 1):
        w1, b1, w2, b2 = params
        z = x @ w1 + b1
        h = np.maximum(z, 0.0)
        logits = h @ w2 + b2
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(x)
        gw2 = h.T @ g
        gb2 = g.sum(0)
        gh = (g @ w2.T) * (z > 0)
        grads = [x.T @ gh, gh.sum(0), gw2, gb2]
        for i, gr in enumerate(grads):
            m[i] = 0.9 * m[i] + 0.1 * gr
            v[i] = 0.999 * v[i] + 0.001 * gr * gr
            mh = m[i] / (1 - 0.9**t)
            vh = v[i] / (1 - 0.999**t)
            params[i] = params[i] - lr * mh / (np.sqrt(vh) + 1e-8)
    return params


def make_synthetic_workload(
    seed: int = 0,
    n_train: int = 2000,
    n_test: int = 1000,
    hidden: int = 64,
    weight_percentile: float = 99.5,
    act_percentile: float = 99.0,
) -> Workload:
    rng = np.random.default_rng(seed)
    protos = _prototypes(rng)
    x_train, y_train = _make_dataset(rng, n_train, protos)
    x_test, y_test = _make_dataset(rng, n_test, protos)
    w1, b1, w2, b2 = _train_mlp(x_train, y_train, hidden, 10, rng)

    input_scale = 1.0 / ACT_LEVELS
    w1q, s1 = quantize_weights(w1, weight_percentile)
    w2q, s2 = quantize_weights(w2, weight_percentile)
    # hidden activation scale calibrated on the training set, as the integer path sees it
    acc1 = quantize_activations(x_train, input_scale) @ w1q
    h_train = np.maximum(acc1 * (input_scale * s1) + b1, 0.0)
    hidden_scale = float(np.percentile(h_train[h_train > 0], act_percentile)) / ACT_LEVELS
    layers = [
        LayerSpec("fc1", LayerKind.FULLY_CONNECTED, w1q, b1, input_scale, s1, True, w1, b1),
        LayerSpec("fc2", LayerKind.FULLY_CONNECTED, w2q, b2, hidden_scale, s2, False, w2, b2),
    ]
    return Workload("synthetic8x8", layers, x_test, y_test, input_scale)


BUNDLED_DIR = Path(__file__).parent / "data" / "synthetic8x8"


@lru_cache(maxsize=1)
def bundled_workload() -> Workload:
    """
    The committed workload files; regenerating with ``make_synthetic_workload(0)``
    reproduces them up to BLAS rounding in training.
    """
    if (BUNDLED_DIR / "manifest.json").exists():
        return load_workload(BUNDLED_DIR)
    return make_synthetic_workload(0)


def save_workload(workload: Workload, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layers = []
    for layer in workload.layers:
        entry = {
            "name": layer.name,
            "kind": layer.kind.value,
            "act_scale": layer.act_scale,
            "weight_scale": layer.weight_scale,
            "relu": layer.relu,
            "stride": layer.stride,
            "padding": layer.padding,
            "weights": f"{layer.name}.weights.cimt",
            "bias": f"{layer.name}.bias.cimt",
        }
        tensorio.save(d / entry["weights"], layer.weights.astype(np.int8))
        tensorio.save(d / entry["bias"], np.asarray(layer.bias, dtype=np.float64))
        if layer.weights_float is not None:
            entry["weights_float"] = f"{layer.name}.weights_float.cimt"
            entry["bias_float"] = f"{layer.name}.bias_float.cimt"
            tensorio.save(d / entry["weights_float"], np.asarray(layer.weights_float, dtype=np.float64))
            tensorio.save(d / entry["bias_float"], np.asarray(layer.bias_float, dtype=np.float64))
        layers.append(entry)
    tensorio.save(d / "inputs.cimt", np.asarray(workload.inputs, dtype=np.float64))
    tensorio.save(d / "labels.cimt", np.asarray(workload.labels, dtype=np.int64))
    manifest = {
        "name": workload.name,
        "input_scale": workload.input_scale,
        "inputs": "inputs.cimt",
        "labels": "labels.cimt",
        "layers": layers,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_workload(directory) -> Workload:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    layers = []
    for e in manifest["layers"]:
        wf = tensorio.load(d / e["weights_float"]) if "weights_float" in e else None
        bf = tensorio.load(d / e["bias_float"]) if "bias_float" in e else None
        layers.append(
            LayerSpec(
                e["name"],
                e["kind"],
                tensorio.load(d / e["weights"]).astype(np.int64),
                tensorio.load(d / e["bias"]),
                float(e["act_scale"]),
                float(e["weight_scale"]),
                bool(e.get("relu", True)),
                wf,
                bf,
                int(e.get("stride", 1)),
                int(e.get("padding", 0)),
            )
        )
    return Workload(
        manifest["name"],
        layers,
        tensorio.load(d / manifest["inputs"]),
        tensorio.load(d / manifest["labels"]),
        float(manifest["input_scale"]),
    )


# ---------------------------------------------------------------------------
# evaluation


def error_metrics(computed, reference) -> dict:
    c = np.asarray(computed, dtype=float)
    r = np.asarray(reference, dtype=float)
    if c.shape != r.shape:
        raise DomainError(f"shape mismatch: {c.shape} vs {r.shape}")
    err = c - r
    noise = float(np.sum(err * err))
    signal = float(np.sum(r * r))
    if noise == 0:
        sqnr = math.inf
    elif signal == 0:
        sqnr = -math.inf
    else:
        sqnr = 10.0 * math.log10(signal / noise)
    return {
        "mse": float(np.mean(err * err)) if err.size else 0.0,
        "max_abs": float(np.max(np.abs(err))) if err.size else 0.0,
        "sqnr_db": sqnr,
        "exact_match": float(np.mean(err == 0)) if err.size else 1.0,
    }


MatmulFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def run_network(workload: Workload, matmul: MatmulFn):
    """
    Integer forward pass with ``matmul(X, W, layer_index)`` doing the MACs.

    Returns logits and, per layer, the (inputs, accumulators) pair it saw.
    """
    a = workload.input_codes
    trace = []
    out = None
    for i, layer in enumerate(workload.layers):
        problem = lower_layer(layer, a)
        acc = problem.fold(matmul(problem.X, problem.W, i))
        trace.append((problem, acc))
        y = acc * (layer.act_scale * layer.weight_scale) + layer.bias
        if layer.relu:
            y = np.maximum(y, 0.0)
        out = y
        if i + 1 < len(workload.layers):
            a = quantize_activations(y, workload.layers[i + 1].act_scale)
    return out, trace


def exact_matmul(X, W, _layer=0):
    return np.asarray(X, dtype=np.int64) @ np.asarray(W, dtype=np.int64)


def integer_accuracy(workload: Workload) -> float:
    logits, _ = run_network(workload, exact_matmul)
    return float(np.mean(np.argmax(logits, axis=1) == workload.labels))


@dataclass(frozen=True)
class DesignPoint:
    """``adc_bits=None`` means full-resolution readout (bits = q)."""

    rows: int = 16
    adc_bits: Optional[int] = 4
    cutoff: float = 0.5
    hw_errors: bool = True

    def key(self):
        return (self.rows, self.adc_bits if self.adc_bits is not None else 99, self.cutoff, self.hw_errors)


def point_config(point: DesignPoint, base: MacroConfig, seed: int) -> MacroConfig:
    bits = adc.full_resolution_bits(point.rows) if point.adc_bits is None else point.adc_bits
    threshold = adc.cutoff_threshold(point.cutoff, point.rows)
    in_sram = bits == adc.IN_SRAM_BITS and threshold == adc.IN_SRAM_THRESHOLD
    adc_cfg = AdcConfig(
        bits=bits,
        ref_mode=RefMode.IN_SRAM if in_sram else RefMode.IDEAL,
        cutoff=point.cutoff,
        scheme=base.adc.scheme,
    )
    noise = base.noise if point.hw_errors else NoiseModel.disabled()
    if point.hw_errors and not noise.enabled:
        noise = NoiseModel()
    return replace(base, activated_rows=point.rows, adc=adc_cfg, noise=noise, seed=seed)


def point_seed(base_seed: int, point: DesignPoint, repeat: int = 0) -> int:
    ss = np.random.SeedSequence(
        int(base_seed), spawn_key=(point.rows, point.key()[1], round(point.cutoff * 1e6), int(point.hw_errors), repeat)
    )
    return int(ss.generate_state(1)[0])


@dataclass
class SweepRecord:
    rows: int
    adc_bits: int
    cutoff: float
    hw_errors: bool
    threshold: int
    repeats: int
    accuracy: float
    accuracy_std: float
    accuracy_min: float
    float_accuracy: float
    integer_accuracy: float
    layer_mse: list = field(default_factory=list)
    layer_max_abs: list = field(default_factory=list)
    layer_sqnr_db: list = field(default_factory=list)
    efficiency_tops_w: float = 0.0
    adc_energy_proxy: float = 0.0
    dac_energy_proxy: float = 0.0
    pmac_below_threshold: float = 1.0
    histogram: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def accuracy_drop(self) -> float:
        return self.float_accuracy - self.accuracy

    def row(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "histogram"}
        for k in ("layer_mse", "layer_max_abs", "layer_sqnr_db"):
            d[k] = ";".join(f"{v:.6g}" for v in d[k])
        return d


def evaluate_point(
    point: DesignPoint,
    workload: Optional[Workload] = None,
    base: Optional[MacroConfig] = None,
    repeats: int = 1,
    seed: Optional[int] = None,
) -> SweepRecord:
    """Run the workload at one design point; metrics are averaged over ``repeats`` seeds."""
    workload = bundled_workload() if workload is None else workload
    base = MacroConfig() if base is None else base
    seed = base.seed if seed is None else seed
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    accs = []
    mse, max_abs, sqnr = [], [], []
    hist = MatmulTrace()
    cfg = None
    for rep in range(repeats):
        cfg = point_config(point, base, point_seed(seed, point, rep))
        mac = CimMacro(cfg)
        logits, trace = run_network(workload, lambda X, W, i: mac.matmul(X, W, stream=i, trace=hist))
        accs.append(float(np.mean(np.argmax(logits, axis=1) == workload.labels)))
        per = [error_metrics(acc, p.fold(exact_matmul(p.X, p.W))) for p, acc in trace]
        mse.append([m["mse"] for m in per])
        max_abs.append([m["max_abs"] for m in per])
        sqnr.append([min(m["sqnr_db"], SQNR_CAP_DB) for m in per])
    accs = np.array(accs)
    threshold = cfg.threshold
    return SweepRecord(
        rows=point.rows,
        adc_bits=cfg.adc.bits,
        cutoff=point.cutoff,
        hw_errors=point.hw_errors,
        threshold=threshold,
        repeats=repeats,
        accuracy=float(accs.mean()),
        accuracy_std=float(accs.std(ddof=1)) if repeats > 1 else 0.0,
        accuracy_min=float(accs.min()),
        float_accuracy=float_accuracy(workload),
        integer_accuracy=integer_accuracy(workload),
        layer_mse=list(np.mean(mse, axis=0)),
        layer_max_abs=list(np.max(max_abs, axis=0)),
        layer_sqnr_db=list(np.mean(sqnr, axis=0)),
        efficiency_tops_w=costmodel.efficiency_at(base.vdd),
        adc_energy_proxy=costmodel.adc_energy_proxy(cfg.adc.bits, cfg.adc.scheme),
        dac_energy_proxy=point.rows / 16.0,
        pmac_below_threshold=hist.fraction_below(threshold),
        histogram=hist.histogram,
    )


@dataclass(frozen=True)
class SweepGrid:
    rows: tuple = (16,)
    adc_bits: tuple = (4,)
    cutoff: tuple = (0.5,)
    hw_errors: tuple = (True,)

    def __post_init__(self):
        for f in fields(self):
            values = tuple(getattr(self, f.name))
            if not values:
                raise ConfigError(f"sweep axis '{f.name}' is empty")
            object.__setattr__(self, f.name, values)
        for r in self.rows:
            if r not in adc.SUPPORTED_ROWS:
                raise ConfigError(f"rows must be in {adc.SUPPORTED_ROWS}, got {r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepGrid":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown sweep grid keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in d.items()})

    def points(self) -> list:
        pts = [DesignPoint(r, b, c, h) for r, b, c, h in itertools.product(self.rows, self.adc_bits, self.cutoff, self.hw_errors)]
        return sorted(pts, key=DesignPoint.key)


def run_sweep(
    grid: SweepGrid,
    workload: Optional[Workload] = None,
    base: Optional[MacroConfig] = None,
    repeats: int = 1,
    workers: int = 1,
) -> list:
    """Evaluate every grid point; output order is (rows, bits, cutoff, hw_errors) regardless of scheduling."""
    workload = bundled_workload() if workload is None else workload
    base = MacroConfig() if base is None else base
    points = grid.points()

    def run(p):
        return evaluate_point(p, workload, base, repeats)

    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, points))
    return [run(p) for p in points]


CSV_FIELDS = [f.name for f in fields(SweepRecord) if f.name != "histogram"]


def format_records(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = rec.row()
        writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def format_histograms(records: Sequence[SweepRecord]) -> str:
    """One row per (design point, pMAC value) with a non-zero count."""
    lines = ["rows,adc_bits,cutoff,hw_errors,pmac,count"]
    for rec in records:
        for p in np.flatnonzero(rec.histogram):
            lines.append(f"{rec.rows},{rec.adc_bits},{rec.cutoff:.10g},{rec.hw_errors},{p},{rec.histogram[p]}")
    return "\n".join(lines) + "\n"
