"""
Command-line interface.

Exit codes: 0 ok, 2 configuration / input error, 3 I/O error, 4 internal
invariant violation. Outputs are written atomically, so a failed run never
leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import adc, amu, charge, config, costmodel, mapper, tensorio, variation
from .errors import CimError, ConfigError, DomainError, InvariantError
from .macro import CimMacro, reference_matmul

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    return str(int(f)) if f.is_integer() and abs(f) < 2**53 else repr(f)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_num(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


class Outputs:
    """Buffers every output and commits them only after the command succeeded."""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.pending: list[tuple[Path | None, bytes]] = []

    def add(self, path, data):
        data = data.encode() if isinstance(data, str) else data
        if path is None or str(path) == "-":
            self.pending.append((None, data))
        else:
            p = Path(path)
            self.pending.append((p if p.is_absolute() else self.out_dir / p, data))

    def commit(self):
        for path, data in self.pending:
            if path is None:
                sys.stdout.buffer.write(data)
                sys.stdout.flush()
                continue
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "vdd", None) is not None:
        o["vdd"] = args.vdd
    if getattr(args, "rows", None) is not None:
        o["activated_rows"] = args.rows
    if getattr(args, "rho", None) is not None:
        o["rho"] = args.rho
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        o["workers"] = args.workers
    a = {}
    for flag, key in (("adc_bits", "bits"), ("cutoff", "cutoff"), ("ref_mode", "ref_mode"), ("scheme", "scheme")):
        if getattr(args, flag, None) is not None:
            a[key] = getattr(args, flag)
    if a:
        o["adc"] = a
    if getattr(args, "noise", None) is not None:
        o["noise"] = {"enabled": args.noise}
    return o


def _load(args):
    doc = config.load(args.config, _overrides(args))
    return doc, config.macro_config(doc)


# ---------------------------------------------------------------------------
# commands


def cmd_dac_transfer(args, doc, cfg, out: Outputs):
    header = ["code", "v_dac"]
    rows = []
    for code in range(16):
        rows.append([code, charge.dac_convert(code, cfg.vdd)])
    if args.montecarlo:
        header += ["mean_V", "std_mV"]
        for row in rows:
            st = variation.run_montecarlo_dac(cfg.vdd, row[0], args.montecarlo, cfg.seed, cfg.noise)
            row += [st.mean, st.stddev * 1e3]
    out.add(args.out, _csv(header, rows))


def cmd_adc_transfer(args, doc, cfg, out: Outputs):
    threshold = cfg.threshold
    ladder = adc.build_reference_ladder(cfg.adc, threshold, cfg.rho, cfg.vdd)
    rows = []
    for p in range(15 * cfg.activated_rows + 1):
        v = charge.abl_from_pmac(p, cfg.rho, cfg.vdd)
        code = adc.digitize(v, ladder, cfg.adc.scheme)
        rows.append([p, v, code, adc.dequantize_array(code, threshold, cfg.adc.bits).item()])
    out.add(args.out, _csv(["pMAC", "v_abl", "code", "dequantized"], rows))


def cmd_refgen(args, doc, cfg, out: Outputs):
    rows = [[n, 8 * n, amu.ref_column_voltage(n, cfg.rho, cfg.vdd)] for n in range(16)]
    out.add(args.out, _csv(["N", "pmac_level", "v_ref"], rows))


def cmd_mac(args, doc, cfg, out: Outputs):
    r = cfg.activated_rows
    rng = variation.substream(cfg.seed, 99)
    if args.inputs:
        x = np.array([int(v) for v in args.inputs.split(",")])
    else:
        x = rng.integers(0, 16, r)
    if args.weights:
        w = tensorio.load(args.weights)
    else:
        w = rng.integers(-128, 128, (r, 8))
    mac = CimMacro(cfg)
    outputs, samples = mac.mac_cycle(x, w)
    exact = reference_matmul(x[None, :], np.asarray(w)[:r])[0]
    report = {
        "inputs": x,
        "weights": np.asarray(w),
        "outputs": outputs,
        "exact_outputs": exact,
        "threshold": mac.threshold,
        "samples": [
            {"output": n, "bit": b, "exact": s.exact, "v_abl": s.v_abl, "code": s.code, "dequantized": s.dequantized}
            for n, col in enumerate(samples)
            for b, s in enumerate(col)
        ],
    }
    out.add(args.out, _json(report))


def cmd_matmul(args, doc, cfg, out: Outputs):
    X = tensorio.load(args.x)
    W = tensorio.load(args.w)
    mac = CimMacro(cfg)
    y = mac.matmul(X, W)
    ref = reference_matmul(X, W)
    metrics = mapper.error_metrics(y, ref)
    metrics.update({"shape": list(y.shape), "threshold": mac.threshold, "adc_bits": cfg.adc.bits})
    if args.out is None or str(args.out) == "-" or Path(args.out).suffix not in tensorio.BINARY_SUFFIXES:
        buf = io.StringIO()
        tensorio.write_csv(buf, y, fmt="%d" if np.issubdtype(y.dtype, np.integer) else "%.17g")
        out.add(args.out, buf.getvalue())
    else:
        out.add(args.out, tensorio.dumps(y))
    if args.metrics:
        out.add(args.metrics, _json({k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in metrics.items()}))


def cmd_montecarlo(args, doc, cfg, out: Outputs):
    vdds = [float(v) for v in args.vdds.split(",")] if args.vdds else [cfg.vdd]
    codes = [int(c) for c in args.codes.split(",")] if args.codes else list(range(16))
    rows = []
    for v in vdds:
        charge.SupplyVoltage(v)
        for c in codes:
            st = variation.run_montecarlo_dac(v, c, args.trials, cfg.seed, cfg.noise)
            rows.append([v, c, st.n, st.mean, st.stddev * 1e3])
    out.add(args.out, _csv(["vdd", "code", "n", "mean_V", "std_mV"], rows))


def cmd_sweep(args, doc, cfg, out: Outputs):
    if args.grid:
        try:
            grid_doc = json.loads(Path(args.grid).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.grid}: invalid JSON ({exc})") from None
        grid = mapper.SweepGrid.from_dict(grid_doc)
    else:
        grid = mapper.SweepGrid(
            rows=(cfg.activated_rows,), adc_bits=(cfg.adc.bits,), cutoff=(cfg.adc.cutoff,), hw_errors=(cfg.noise.enabled,)
        )
    workload = mapper.load_workload(args.workload) if args.workload else mapper.bundled_workload()
    records = mapper.run_sweep(grid, workload, cfg, repeats=args.repeats, workers=cfg.workers)
    for rec in records:
        if not all(np.isfinite(v) for v in (rec.accuracy, rec.efficiency_tops_w, *rec.layer_mse, *rec.layer_sqnr_db)):
            raise InvariantError(f"non-finite metric at rows={rec.rows} bits={rec.adc_bits}")
    out.add(args.out, mapper.format_records(records))
    if args.histogram:
        out.add(args.histogram, mapper.format_histograms(records))


def cmd_energy(args, doc, cfg, out: Outputs):
    report = costmodel.throughput_report(cfg).to_dict()
    cmp = costmodel.adc_energy_comparison()
    report["adc_comparison"] = {
        "coarse_fine_comparators": cmp.cf_comparisons,
        "flash_comparators": cmp.flash_comparisons,
        "comparator_ratio": cmp.comparator_ratio,
        "energy_ratio": cmp.ratio,
        "saving": cmp.saving,
    }
    out.add(args.out, _json(report))


# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="JSON run configuration (defaults: default-config.json)")
    g.add_argument("--vdd", type=float, help="supply voltage in volts, 0.6-1.2 (default 0.9)")
    g.add_argument("--rows", type=int, choices=(4, 8, 16), help="activated rows (default 16)")
    g.add_argument("--rho", type=float, help="C_ABL / C_CBL ratio (default 1.0)")
    g.add_argument("--seed", type=int, help=f"RNG seed (default: config, then ${config.SEED_ENV}, then 0)")
    g.add_argument("--adc-bits", type=int, help="ADC resolution (default 4)")
    g.add_argument("--cutoff", type=float, help="pMAC cutoff in [0, 1) (default 0.5)")
    g.add_argument("--ref-mode", choices=("in_sram", "ideal"), help="reference ladder (default in_sram)")
    g.add_argument("--scheme", choices=("coarse_fine", "full_flash"), help="ADC structure (default coarse_fine)")
    g.add_argument("--noise", dest="noise", action="store_true", default=None, help="enable hardware errors")
    g.add_argument("--no-noise", dest="noise", action="store_false", help="disable hardware errors")
    g.add_argument("--workers", type=int, help="threads for tile / grid evaluation (default 1)")
    p.add_argument("--out", "-o", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cimforge", description="Charge-domain SRAM CIM macro simulator")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        _common(p)
        p.set_defaults(fn=fn)
        return p

    p = add("dac-transfer", cmd_dac_transfer, "DAC transfer table, code 0..15 -> volts (CSV)")
    p.add_argument("--montecarlo", type=int, metavar="N", help="add mean/std columns from N noisy trials")
    add("adc-transfer", cmd_adc_transfer, "noiseless ADC staircase over every pMAC level (CSV)")
    add("refgen", cmd_refgen, "the 16 in-SRAM reference levels N=0..15 (CSV)")
    p = add("mac", cmd_mac, "one macro cycle: R inputs x R-by-8 weights (JSON)")
    p.add_argument("--inputs", help="comma-separated activations (default: random from seed)")
    p.add_argument("--weights", help="weight tile, CSV or .cimt (default: random from seed)")
    p = add("matmul", cmd_matmul, "activations (MxK, u4) times weights (KxN, i8) through the macro")
    p.add_argument("--x", required=True, help="activations, CSV or .cimt")
    p.add_argument("--w", required=True, help="weights, CSV or .cimt")
    p.add_argument("--metrics", help="write error metrics vs the exact product (JSON)")
    p = add("montecarlo", cmd_montecarlo, "DAC Monte-Carlo statistics per (vdd, code) (CSV)")
    p.add_argument("--trials", type=int, default=10000, help="trials per point (default 10000)")
    p.add_argument("--vdds", help="comma-separated supply voltages (default: config vdd)")
    p.add_argument("--codes", help="comma-separated DAC codes (default 0..15)")
    p = add("sweep", cmd_sweep, "design-space sweep on a workload (CSV)")
    p.add_argument("--grid", help="JSON grid {rows, adc_bits, cutoff, hw_errors} (default: the config point)")
    p.add_argument("--workload", help="workload directory with manifest.json (default: bundled)")
    p.add_argument("--repeats", type=int, default=1, help="seeded repeats per point (default 1)")
    p.add_argument("--histogram", help="also write pMAC histograms (CSV)")
    add("energy", cmd_energy, "energy / throughput report (JSON)")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc, cfg = _load(args)
        out = Outputs(doc.get("output", {}).get("dir", "."))
        args.fn(args, doc, cfg, out)
        out.commit()
    except InvariantError as exc:
        print(f"cimforge: internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, DomainError, CimError) as exc:
        print(f"cimforge: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cimforge: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
