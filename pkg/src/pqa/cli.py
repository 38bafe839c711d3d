"""Command-line front end.

Verbs: ``fit`` (learn prototypes and build dot-product tables), ``eval``
(error metrics against the dense reference), ``simulate`` (cycle/latency
model over a network), ``sweep`` (grid evaluation of the performance
model), ``quantize`` (apply a bitwidth scheme to saved artifacts), and
``zoo`` (bundled model descriptions).

Every flag has a config-file equivalent (JSON object keyed by the flag
name with dashes as underscores); config values override built-in
defaults and explicit flags override the config. Exit codes: 0 success,
1 usage error, 2 data/shape error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .core import (
    NumericError,
    PQConfig,
    ShapeError,
    derive_unrolled_dims,
    subspace_layout,
)
from .modelspec import ZOO_NAMES, load_model, zoo_model_text, dense_params, dense_flops
from .perfmodel import (
    HwConfig,
    LUT_PLUS_DENSE,
    LUT_PLUS_PROTOS_PLUS_DENSE,
    MEMORY_KINDS,
    SweepGrid,
    memory_footprint,
    network_report,
    sweep,
)
from .pipeline import (
    collect_pq_inputs,
    evaluate_model,
    fit_model,
    synthesize_weights,
    weight_shape,
)
from .encoder import LutPQ, PrototypeBank
from .inference import PQLayerRuntime
from .quantizer import (
    Calibration,
    Granularity,
    QuantScheme,
    calibrate_global,
    dequantize,
    quantize_runtime,
)
from .tensorio import TensorFileError, read_tensor, write_tensor

_FLOAT_FMT = ".12g"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, _FLOAT_FMT)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError("config file must contain a JSON object")
    return doc


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    for key, value in _load_config(getattr(args, "config", None)).items():
        if key not in defaults:
            raise ValueError(f"unknown config key {key!r}")
        merged[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _outdir(opts: dict) -> Path:
    if not opts.get("out"):
        raise ValueError("an output directory is required (--out)")
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _load_weights(model, weights_dir: Path) -> dict[str, np.ndarray]:
    out = {}
    for ml in model.layers:
        path = weights_dir / f"{_safe(ml.spec.name)}.weights.pqt"
        w = read_tensor(path).astype(np.float64)
        if w.shape != weight_shape(ml):
            raise ShapeError(
                f"layer {ml.spec.name!r}: weight file {path} has shape "
                f"{w.shape}, expected {weight_shape(ml)}")
        out[ml.spec.name] = w
    return out


def _load_runtimes(model, artifacts: Path, l_s, n_p, tau=1.0):
    runtimes = {}
    for ml in model.pq_layers:
        name = _safe(ml.spec.name)
        bank = PrototypeBank(read_tensor(artifacts / f"{name}.bank.pqt"))
        lut = LutPQ(read_tensor(artifacts / f"{name}.lut.pqt"))
        cfg = PQConfig(n_p=bank.n_p, l_s=bank.l_s, metric=ml.metric, tau=tau)
        if l_s is not None and cfg.l_s != l_s:
            raise ShapeError(f"layer {ml.spec.name!r}: artifacts use l_s={cfg.l_s}, "
                             f"not the requested {l_s}")
        if n_p is not None and cfg.n_p != n_p:
            raise ShapeError(f"layer {ml.spec.name!r}: artifacts use n_p={cfg.n_p}, "
                             f"not the requested {n_p}")
        dims = derive_unrolled_dims(ml.spec)
        layout = subspace_layout(dims.a, cfg.l_s)
        runtimes[ml.spec.name] = PQLayerRuntime(
            bank=bank, lut=lut, layout=layout, config=cfg, layer=ml.spec)
    return runtimes


def _hw_from(opts: dict) -> HwConfig:
    memory = opts["memory"]
    if memory == "custom":
        if not opts.get("bw"):
            raise ValueError("--memory custom requires --bw bytes/s")
        bw = float(opts["bw"])
    else:
        if memory not in MEMORY_KINDS:
            raise ValueError(f"unknown memory kind {memory!r}")
        bw = MEMORY_KINDS[memory]
    return HwConfig(ls_vec=opts["ls_vec"], np_vec=opts["np_vec"],
                    ns_vec=opts["ns_vec"], nout_vec=opts["nout_vec"],
                    fmax_hz=float(opts["fmax"]), mem_bw_bytes_per_s=bw,
                    proto_bits=opts["proto_bits"], lut_bits=opts["lut_bits"])


def _scheme_from(opts: dict) -> QuantScheme:
    return QuantScheme(proto_bits=opts["proto_bits"], lut_bits=opts["lut_bits"],
                       granularity=Granularity(opts["granularity"]),
                       calibration=Calibration(opts["calibration"]),
                       lo_pct=float(opts["lo_pct"]), hi_pct=float(opts["hi_pct"]))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

_FIT_DEFAULTS = dict(out=None, ls=None, np=None, seed=0, max_iters=20,
                     max_columns=4096, weights=None, figures=True)


def cmd_fit(args: argparse.Namespace) -> int:
    opts = _resolve(args, _FIT_DEFAULTS)
    model = load_model(args.model)
    out = _outdir(opts)
    samples = read_tensor(args.samples).astype(np.float64)
    if samples.ndim == 3:
        samples = samples[None]
    if not model.pq_layers:
        warnings.warn(f"model {model.name!r} has no PQ-enabled layers; "
                      "nothing to fit")
    if opts["weights"]:
        weights = _load_weights(model, Path(opts["weights"]))
    else:
        weights = synthesize_weights(model, opts["seed"])
    for ml in model.layers:
        write_tensor(out / f"{_safe(ml.spec.name)}.weights.pqt",
                     weights[ml.spec.name])

    pq_inputs = collect_pq_inputs(model, weights, samples, seed=opts["seed"],
                                  max_columns=opts["max_columns"])
    fitted = fit_model(model, weights, pq_inputs, l_s=opts["ls"],
                       n_p=opts["np"], seed=opts["seed"],
                       max_iters=opts["max_iters"])

    rows = []
    for f in fitted:
        name = f.layer.spec.name
        write_tensor(out / f"{_safe(name)}.bank.pqt", f.runtime.bank.values)
        write_tensor(out / f"{_safe(name)}.lut.pqt", f.runtime.lut.values)
        dims = derive_unrolled_dims(f.layer.spec)
        rows.append([name, dims.a, dims.cols, dims.c_out,
                     f.runtime.layout.n_s, f.config.n_p, f.config.l_s,
                     f.mse_enc])
    _write_csv(out / "fit_report.csv",
               ["layer", "a", "cols", "c_out", "n_s", "n_p", "l_s", "mse_enc"],
               rows)
    if rows and opts["figures"]:
        from .figures import save_fit_figure
        save_fit_figure([r[0] for r in rows], [r[7] for r in rows],
                        out / "fit_report.png")
    print(f"fit: {len(rows)} PQ layer(s) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_SIM_DEFAULTS = dict(out=None, ls=None, np=None, memory="ddr4", bw=None,
                     fmax=490e6, ls_vec=16, np_vec=16, ns_vec=16, nout_vec=16,
                     proto_bits=16, lut_bits=16, baseline_cycles=None,
                     figures=True)


def cmd_simulate(args: argparse.Namespace) -> int:
    opts = _resolve(args, _SIM_DEFAULTS)
    model = load_model(args.model)
    out = _outdir(opts)
    hw = _hw_from(opts)
    report = network_report(model, hw, l_s=opts["ls"], n_p=opts["np"])

    rows = []
    for ml, (name, rep) in zip(model.pq_layers, report.per_layer):
        dims = derive_unrolled_dims(ml.spec)
        pq = ml.pq_config(default_l_s=opts["ls"], default_n_p=opts["np"])
        layout = subspace_layout(dims.a, pq.l_s)
        rows.append([name, dims.a, dims.cols, dims.c_out, layout.n_s,
                     pq.l_s, pq.n_p, rep.compute_cycles, rep.load_cycles,
                     rep.total_cycles, rep.memory_bound, rep.bits_loaded])
    _write_csv(out / "simulate.csv",
               ["layer", "a", "cols", "c_out", "n_s", "l_s", "n_p",
                "compute_cycles", "load_cycles", "total_cycles",
                "memory_bound", "bits_loaded"], rows)

    params_lut = memory_footprint(model, opts["ls"], opts["np"], LUT_PLUS_DENSE)
    params_full = memory_footprint(model, opts["ls"], opts["np"],
                                   LUT_PLUS_PROTOS_PLUS_DENSE)
    dense_p = sum(dense_params(ml) for ml in model.layers)
    dense_f = sum(dense_flops(ml) for ml in model.layers)
    lines = [
        f"model: {model.name}",
        f"memory: {opts['memory']} ({_fmt(hw.mem_bw_bytes_per_s)} bytes/s)",
        f"fmax_hz: {_fmt(hw.fmax_hz)}",
        f"pq_layers: {len(report.per_layer)}",
        f"total_cycles: {report.total_cycles}",
        f"latency_us: {_fmt(report.latency_us)}",
        f"memory_bound_layers: {sum(1 for _, r in report.per_layer if r.memory_bound)}",
        f"params_lut_plus_dense: {params_lut}",
        f"params_lut_plus_protos_plus_dense: {params_full}",
        f"dense_params: {dense_p}",
        f"dense_flops: {dense_f}",
    ]
    if opts["baseline_cycles"]:
        base = float(opts["baseline_cycles"])
        lines.append(f"baseline_cycles: {_fmt(base)}")
        lines.append(f"speedup_vs_baseline: {_fmt(base / report.total_cycles)}")
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    if rows and opts["figures"]:
        from .figures import save_cycles_figure
        save_cycles_figure([r[0] for r in rows], [r[7] for r in rows],
                           [r[8] for r in rows], out / "simulate_cycles.png")
    sys.stdout.write(summary)
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_DEFAULTS = dict(out=None, figures=True)

_SWEEP_CSV_HEADER = [
    "memory", "input_size", "channels", "kernel", "n_p", "l_s", "cols", "n_s",
    "compute_cycles", "load_cycles", "total_cycles", "memory_bound",
    "bits_loaded", "flops_im2col", "flops_pq", "flops_enc", "flops_add",
    "flops_ratio", "lut_entries", "proto_entries", "params_pq", "speedup"]


def cmd_sweep(args: argparse.Namespace) -> int:
    opts = _resolve(args, _SWEEP_DEFAULTS)
    out = _outdir(opts)
    doc = json.loads(Path(args.grid).read_text())
    known = {"input_sizes", "channels", "n_p", "l_s", "memory", "kernel",
             "stride", "hw", "baseline_cycles"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    for key in ("input_sizes", "channels", "n_p", "l_s"):
        if not doc.get(key):
            raise ValueError(f"sweep grid needs a non-empty {key!r} list")
    grid = SweepGrid(input_sizes=tuple(doc["input_sizes"]),
                     channels=tuple(doc["channels"]),
                     n_p_values=tuple(doc["n_p"]),
                     l_s_values=tuple(doc["l_s"]),
                     memory_kinds=tuple(doc.get("memory", ["ddr4", "hbm"])),
                     kernel=doc.get("kernel", 3), stride=doc.get("stride", 1))
    hw = HwConfig(**doc.get("hw", {}))
    baseline = None
    if "baseline_cycles" in doc:
        baseline = {(int(s), int(c)): int(v) for s, c, v in doc["baseline_cycles"]}
    records = sweep(grid, hw, baseline)

    rows = []
    for r in records:
        rows.append([r.memory, r.input_size, r.channels, r.kernel, r.n_p,
                     r.l_s, r.cols, r.n_s, r.cycles.compute_cycles,
                     r.cycles.load_cycles, r.cycles.total_cycles,
                     r.cycles.memory_bound, r.cycles.bits_loaded,
                     r.footprint.flops_im2col, r.footprint.flops_pq,
                     r.footprint.flops_enc, r.footprint.flops_add,
                     r.footprint.ratio, r.footprint.lut_entries,
                     r.footprint.proto_entries, r.footprint.params_pq,
                     "" if r.speedup is None else _fmt(r.speedup)])
    _write_csv(out / "sweep.csv", _SWEEP_CSV_HEADER, rows)
    if opts["figures"]:
        from .figures import save_sweep_heatmaps
        save_sweep_heatmaps(records, out)
    print(f"sweep: {len(records)} grid points -> {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_EVAL_DEFAULTS = dict(out=None, ls=None, np=None, seed=0, quant=False,
                      proto_bits=16, lut_bits=16, granularity="per_layer",
                      calibration="full_range", lo_pct=30.0, hi_pct=70.0,
                      max_columns=2048, figures=True)


def cmd_eval(args: argparse.Namespace) -> int:
    opts = _resolve(args, _EVAL_DEFAULTS)
    model = load_model(args.model)
    out = _outdir(opts)
    artifacts = Path(args.artifacts)
    samples = read_tensor(args.inputs).astype(np.float64)
    if samples.ndim == 3:
        samples = samples[None]
    weights = _load_weights(model, artifacts)
    runtimes = _load_runtimes(model, artifacts, opts["ls"], opts["np"])
    scheme = _scheme_from(opts) if opts["quant"] else None
    calib = None
    if scheme is not None:
        calib = collect_pq_inputs(model, weights, samples, seed=opts["seed"],
                                  max_columns=opts["max_columns"])
    result = evaluate_model(model, weights, runtimes, samples, scheme,
                            calib_columns=calib)

    header = ["layer", "mse_enc", "mse_out", "max_abs_err"]
    if scheme is not None:
        header += ["quant_mse_vs_float", "quant_max_abs_vs_float",
                   "quant_bound", "saturations"]
    rows = []
    for le in result.layers:
        row = [le.name, le.mse_enc, le.mse_out, le.max_abs_err]
        if scheme is not None:
            row += [le.quant_mse, le.quant_max_abs, le.quant_bound,
                    le.saturations]
        rows.append(row)
    _write_csv(out / "eval_report.csv", header, rows)
    (out / "summary.txt").write_text(
        f"model: {model.name}\n"
        f"samples: {samples.shape[0]}\n"
        f"end_to_end_max_err: {_fmt(result.end_to_end_max_err)}\n")
    if rows and opts["figures"]:
        from .figures import save_error_figure
        save_error_figure([r[0] for r in rows], [r[1] for r in rows],
                          [r[2] for r in rows], out / "eval_report.png")
    print(f"eval: {len(rows)} PQ layer(s), end-to-end max err "
          f"{_fmt(result.end_to_end_max_err)} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# quantize
# ---------------------------------------------------------------------------

_QUANT_DEFAULTS = dict(out=None, ls=None, np=None, seed=0, proto_bits=16,
                       lut_bits=16, granularity="per_layer",
                       calibration="full_range", lo_pct=30.0, hi_pct=70.0,
                       samples=None, max_columns=2048)


def cmd_quantize(args: argparse.Namespace) -> int:
    opts = _resolve(args, _QUANT_DEFAULTS)
    model = load_model(args.model)
    out = _outdir(opts)
    artifacts = Path(args.artifacts)
    weights = _load_weights(model, artifacts)
    runtimes = _load_runtimes(model, artifacts, opts["ls"], opts["np"])
    scheme = _scheme_from(opts)
    calib = None
    if opts["samples"]:
        samples = read_tensor(opts["samples"]).astype(np.float64)
        if samples.ndim == 3:
            samples = samples[None]
        calib = collect_pq_inputs(model, weights, samples, seed=opts["seed"],
                                  max_columns=opts["max_columns"])

    rts = [runtimes[ml.spec.name] for ml in model.pq_layers]
    calibs = [None if calib is None else calib.get(ml.spec.name)
              for ml in model.pq_layers]
    shared_proto = shared_lut = None
    if scheme.granularity is Granularity.GLOBAL:
        shared_proto, shared_lut = calibrate_global(rts, scheme, calibs)

    rows = []
    for ml, rt, cal in zip(model.pq_layers, rts, calibs):
        name = ml.spec.name
        qrt = quantize_runtime(rt, scheme, cal, shared_proto_params=shared_proto,
                               shared_lut_params=shared_lut)
        safe = _safe(name)
        write_tensor(out / f"{safe}.bank_codes.pqt",
                     qrt.proto_codes.astype(np.int32))
        write_tensor(out / f"{safe}.lut_codes.pqt",
                     qrt.lut_codes.astype(np.int32))
        params_doc = {
            "acc_frac_bits": qrt.acc_frac_bits,
            "proto": [{"scale": p.scale, "zero_point": p.zero_point,
                       "bits": p.bits} for p in qrt.proto_params],
            "lut": [{"scale": p.scale, "zero_point": p.zero_point,
                     "bits": p.bits} for p in qrt.lut_params],
        }
        (out / f"{safe}.quant.json").write_text(
            json.dumps(params_doc, indent=2) + "\n")
        proto_err = max(
            float(np.max(np.abs(dequantize(qrt.proto_codes[n], qrt.proto_params[n])
                                - rt.bank.values[n])))
            for n in range(rt.layout.n_s))
        lut_err = max(
            float(np.max(np.abs(dequantize(qrt.lut_codes[:, n, :], qrt.lut_params[n])
                                - rt.lut.values[:, n, :])))
            for n in range(rt.layout.n_s))
        rows.append([name, scheme.proto_bits, scheme.lut_bits,
                     scheme.granularity.value, proto_err, lut_err])
    _write_csv(out / "quantize_report.csv",
               ["layer", "proto_bits", "lut_bits", "granularity",
                "proto_roundtrip_max_err", "lut_roundtrip_max_err"], rows)
    print(f"quantize: {len(rows)} PQ layer(s) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# zoo
# ---------------------------------------------------------------------------

def cmd_zoo(args: argparse.Namespace) -> int:
    if args.action == "list":
        for name in ZOO_NAMES:
            model = load_model(name)
            print(f"{name}: {len(model.layers)} layers, "
                  f"{len(model.pq_layers)} PQ-enabled")
        return 0
    text = zoo_model_text(args.name)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", help="output directory (all files land here)")
    p.add_argument("--no-figures", dest="figures", action="store_false",
                   default=None, help="skip PNG figure rendering")


def _add_pq_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ls", type=int, help="prototype length for all PQ layers")
    p.add_argument("--np", type=int, help="prototypes per subspace")


def _add_quant_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--proto-bits", dest="proto_bits", type=int)
    p.add_argument("--lut-bits", dest="lut_bits", type=int)
    p.add_argument("--granularity",
                   choices=[g.value for g in Granularity])
    p.add_argument("--calibration",
                   choices=[c.value for c in Calibration])
    p.add_argument("--lo-pct", dest="lo_pct", type=float)
    p.add_argument("--hi-pct", dest="hi_pct", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pqa", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit prototype banks and build LUTs")
    p.add_argument("--model", required=True, help="model file or zoo name")
    p.add_argument("--samples", required=True, help="input sample tensor file")
    _add_common(p)
    _add_pq_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--max-columns", dest="max_columns", type=int)
    p.add_argument("--weights", help="directory of per-layer weight tensors "
                   "(synthesized from the seed when omitted)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="cycle/latency model for a network")
    p.add_argument("--model", required=True)
    _add_common(p)
    _add_pq_flags(p)
    p.add_argument("--memory", choices=["ddr4", "hbm", "custom"])
    p.add_argument("--bw", type=float, help="bytes/s for --memory custom")
    p.add_argument("--fmax", type=float)
    p.add_argument("--ls-vec", dest="ls_vec", type=int)
    p.add_argument("--np-vec", dest="np_vec", type=int)
    p.add_argument("--ns-vec", dest="ns_vec", type=int)
    p.add_argument("--nout-vec", dest="nout_vec", type=int)
    p.add_argument("--proto-bits", dest="proto_bits", type=int)
    p.add_argument("--lut-bits", dest="lut_bits", type=int)
    p.add_argument("--baseline-cycles", dest="baseline_cycles", type=float,
                   help="external reference cycles for the speedup row")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="evaluate the performance model on a grid")
    p.add_argument("--grid", required=True, help="grid description JSON")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="error metrics vs. the dense reference")
    p.add_argument("--model", required=True)
    p.add_argument("--artifacts", required=True,
                   help="directory produced by fit")
    p.add_argument("--inputs", required=True, help="input tensor file")
    _add_common(p)
    _add_pq_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--quant", action="store_true", default=None,
                   help="also evaluate under the quantization scheme")
    _add_quant_flags(p)
    p.add_argument("--max-columns", dest="max_columns", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("quantize", help="apply a bitwidth scheme to artifacts")
    p.add_argument("--model", required=True)
    p.add_argument("--artifacts", required=True)
    _add_common(p)
    _add_pq_flags(p)
    p.add_argument("--seed", type=int)
    _add_quant_flags(p)
    p.add_argument("--samples", help="calibration sample tensor file")
    p.add_argument("--max-columns", dest="max_columns", type=int)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("zoo", help="bundled model descriptions")
    p.add_argument("action", choices=["list", "dump"])
    p.add_argument("name", nargs="?", help="model name for dump")
    p.add_argument("--out", help="write the dump here instead of stdout")
    p.set_defaults(func=cmd_zoo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "zoo" and args.action == "dump" and not args.name:
        parser.error("zoo dump requires a model name")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"pqa: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ShapeError, TensorFileError, OSError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"pqa: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
