"""Command-line front end.

Subcommands: verify, sweep, intervals, replay, lut, emit-smt, export-ce.
Exit codes for verification commands: 0 Safe, 1 Falsified, 2 Unknown;
64 usage error, 66 input/output error, 70 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import List, Optional, Sequence

from . import intervals, ir, pipeline, smt, zoo
from .executor import quantize_network, forward_fxp, forward_float32, \
    forward_real_exact, replay as replay_inputs, check_property
from .fxp import FxpFormat, RoundingMode, fxp_from_real
from .lut import build_table, default_spec, grid_step_spec, lut_to_fxp, \
    required_samples
from .modes import FLOAT32, Float32Mode, FxpMode, Mode, REAL, RealMode
from .network import (SIGMOID, TANH, HyperRect, Network, SafetyProperty,
                      load_nnet, load_property, parse_assertion,
                      parse_property)

EXIT_SAFE = 0
EXIT_FALSIFIED = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 64
EXIT_IO = 66
EXIT_INTERNAL = 70

_VERDICT_EXIT = {pipeline.SAFE: EXIT_SAFE, pipeline.FALSIFIED: EXIT_FALSIFIED,
                 pipeline.UNKNOWN: EXIT_UNKNOWN}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors must not collide with Unknown
        self.print_usage(sys.stderr)
        raise CliError(message, EXIT_USAGE)


_BUILTINS = {
    "two-input-relu": zoo.two_input_relu_net,
    "boolean-toy": zoo.boolean_toy_net,
    "iris-like": zoo.iris_like_net,
    "vocalic-like": zoo.vocalic_like_net,
}


def load_network(spec: str) -> Network:
    """A builtin name, `random:<seed>:<d0>x<d1>x...`, or an NNet file path."""
    if spec in _BUILTINS:
        return _BUILTINS[spec]()
    if spec.startswith("random:"):
        try:
            _, seed, dims = spec.split(":")
            return zoo.random_net(int(seed), [int(d) for d in dims.split("x")])
        except ValueError as exc:
            raise CliError(f"bad random net spec {spec!r}: {exc}")
    try:
        return load_nnet(spec)
    except OSError as exc:
        raise CliError(f"cannot read network {spec!r}: {exc}", EXIT_IO)
    except Exception as exc:
        raise CliError(f"cannot parse network {spec!r}: {exc}", EXIT_IO)


def _load_prop(args, net: Network) -> SafetyProperty:
    if getattr(args, "prop", None):
        try:
            return load_property(args.prop, net)
        except OSError as exc:
            raise CliError(f"cannot read property: {exc}", EXIT_IO)
        except Exception as exc:
            raise CliError(f"cannot parse property: {exc}", EXIT_IO)
    if getattr(args, "prop_json", None):
        try:
            prop = parse_property(args.prop_json, num_outputs=net.output_dim)
            prop.validate_against(net)
            return prop
        except Exception as exc:
            raise CliError(f"bad inline property: {exc}")
    raise CliError("a property is required (--prop FILE or --prop-json TEXT)")


def _mode_from_args(args) -> Mode:
    chosen = [bool(args.fxp), args.float32, args.real]
    if sum(chosen) > 1:
        raise CliError("choose exactly one of --fxp/--float32/--real")
    if args.fxp:
        try:
            fmt = FxpFormat.parse(args.fxp)
        except ValueError as exc:
            raise CliError(str(exc))
        rounding = RoundingMode(args.rounding)
        return FxpMode(fmt, rounding)
    if args.float32:
        return FLOAT32
    return REAL


def _options_from_args(args) -> pipeline.PipelineOptions:
    return pipeline.PipelineOptions(
        use_intervals=not args.no_intervals,
        use_simplify=not args.no_simplify,
        use_slice=not args.no_slice,
        use_balance=not args.no_balance,
        epsilon=args.epsilon,
        cutoff=args.cutoff,
        grid_step=args.grid_step,
    )


def _solver_from_args(args) -> Optional[smt.SolverConfig]:
    timeout = args.timeout
    if args.solver:
        return smt.SolverConfig.from_string(args.solver, timeout=timeout)
    try:
        return smt.default_solver(timeout=timeout)
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_IO)


def _add_mode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fxp", metavar="Qk.l",
                   help="fixed-point format, e.g. Q4.6")
    p.add_argument("--float32", action="store_true",
                   help="IEEE binary32 arithmetic")
    p.add_argument("--real", action="store_true",
                   help="exact real relaxation (default)")
    p.add_argument("--rounding", choices=["trunc", "nearest"],
                   default="trunc", help="fixed-point rounding mode")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="activation table error budget")
    p.add_argument("--cutoff", type=float, default=20.0,
                   help="activation table tail cutoff")
    p.add_argument("--grid-step", type=float, default=None,
                   help="table grid step (alternative to --epsilon)")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", help="solver command (script path appended)")
    p.add_argument("--timeout", type=float, default=300.0,
                   help="solver wall-clock limit in seconds")
    p.add_argument("--no-intervals", action="store_true",
                   help="skip interval analysis")
    p.add_argument("--no-simplify", action="store_true",
                   help="skip formula simplification")
    p.add_argument("--no-slice", action="store_true",
                   help="skip assertion-cone slicing")
    p.add_argument("--no-balance", action="store_true",
                   help="skip expression balancing")


def _add_prop_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prop", help="property JSON file")
    p.add_argument("--prop-json", help="inline property JSON")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="qnncheck",
                  description="SMT-based safety verification of quantized "
                              "neural networks")
    top.add_argument("--config", help="JSON file with default flag values")
    sub = top.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", parents=[], help="verify one property")
    pv.add_argument("net", help="network: NNet file, builtin name, or "
                                "random:<seed>:<dims>")
    _add_prop_flags(pv)
    _add_mode_flags(pv)
    _add_pipeline_flags(pv)
    pv.add_argument("--json", dest="json_out", help="write report JSON here")
    pv.add_argument("--keep-script", action="store_true",
                    help="include the SMT script in the JSON report")

    ps = sub.add_parser("sweep", help="verify across total bit widths")
    ps.add_argument("net")
    _add_prop_flags(ps)
    _add_mode_flags(ps)
    _add_pipeline_flags(ps)
    ps.add_argument("--widths", default="6..16",
                    help="total widths: 'a..b' or comma list")
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--csv", dest="csv_out", help="write CSV here")

    pi = sub.add_parser("intervals", help="print propagated bounds")
    pi.add_argument("net")
    _add_prop_flags(pi)
    _add_mode_flags(pi)
    pi.add_argument("--json", dest="json_out")
    pi.add_argument("--report", action="store_true",
                    help="print the bit-width recommendation report")

    pr = sub.add_parser("replay", help="concrete forward pass")
    pr.add_argument("net")
    _add_prop_flags(pr)
    _add_mode_flags(pr)
    pr.add_argument("--input", help="comma-separated real inputs")
    pr.add_argument("--from-ce", help="counterexample JSON from export-ce")
    pr.add_argument("--trace", action="store_true",
                    help="print per-layer values")

    pl = sub.add_parser("lut", help="build an activation lookup table")
    pl.add_argument("action", nargs="?", default="build",
                    choices=["build"])
    pl.add_argument("--activation", required=True,
                    choices=["sigmoid", "tanh"])
    pl.add_argument("--epsilon", type=float, default=0.01)
    pl.add_argument("--cutoff", type=float, default=20.0)
    pl.add_argument("--grid-step", type=float, default=None)
    pl.add_argument("--fxp", metavar="Qk.l",
                    help="also quantize the table to this format")
    pl.add_argument("--rounding", choices=["trunc", "nearest"],
                    default="trunc")
    pl.add_argument("--csv", dest="csv_out", help="write table CSV here")

    pe = sub.add_parser("emit-smt", help="write the SMT-LIB script")
    pe.add_argument("net")
    _add_prop_flags(pe)
    _add_mode_flags(pe)
    _add_pipeline_flags(pe)
    pe.add_argument("-o", "--output", help="output path (default stdout)")

    px = sub.add_parser("export-ce",
                        help="verify and export the counterexample")
    px.add_argument("net")
    _add_prop_flags(px)
    _add_mode_flags(px)
    _add_pipeline_flags(px)
    px.add_argument("--json", dest="json_out", required=True)
    px.add_argument("--pgm", dest="pgm_out")
    px.add_argument("--shape", help="HxW for PGM export, e.g. 5x5")

    return top


def _apply_config(args, argv: Sequence[str]) -> None:
    """Config-file values fill in flags the user did not pass explicitly."""
    if not args.config:
        return
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO)
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0]
                for a in argv if a.startswith("--")}
    mode_flags = {"fxp", "float32", "real"}
    if explicit & mode_flags:
        # an explicit mode choice suppresses any mode from the config
        explicit |= mode_flags
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and attr not in explicit:
            setattr(args, attr, value)


def _parse_widths(text: str) -> List[int]:
    text = text.strip()
    if ".." in text:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
        if lo < 2 or hi < lo:
            raise CliError(f"bad width range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"bad width list {text!r}")


def _parse_shape(text: str) -> tuple:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise CliError(f"bad shape {text!r}, expected HxW")


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_verify(args) -> int:
    net = load_network(args.net)
    prop = _load_prop(args, net)
    mode = _mode_from_args(args)
    options = _options_from_args(args)
    options.keep_script = getattr(args, "keep_script", False)
    solver = _solver_from_args(args)
    report = pipeline.verify(net, prop, mode, options, solver)
    print(report.render())
    if args.json_out:
        doc = report.to_json()
        if options.keep_script and report.smt_script:
            doc["smt_script"] = report.smt_script
        with open(args.json_out, "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    return _VERDICT_EXIT[report.verdict]


def _cmd_sweep(args) -> int:
    net = load_network(args.net)
    prop = _load_prop(args, net)
    options = _options_from_args(args)
    solver = _solver_from_args(args)
    widths = _parse_widths(args.widths)
    rounding = RoundingMode(args.rounding)
    report = pipeline.sweep(net, prop, widths, rounding, options, solver,
                            workers=args.workers)
    print(report.render())
    if args.csv_out:
        with open(args.csv_out, "w") as f:
            f.write(report.to_csv())
    verdicts = {r.verdict for r in report.rows}
    if pipeline.FALSIFIED in verdicts:
        return EXIT_FALSIFIED
    if verdicts == {pipeline.SAFE}:
        return EXIT_SAFE
    return EXIT_UNKNOWN


def _cmd_intervals(args) -> int:
    net = load_network(args.net)
    prop = _load_prop(args, net)
    mode = _mode_from_args(args)
    options = _options_from_args(args) if hasattr(args, "no_intervals") \
        else pipeline.PipelineOptions()
    tables = pipeline.build_tables(net, mode, pipeline.PipelineOptions(
        epsilon=args.epsilon, cutoff=args.cutoff, grid_step=args.grid_step))
    box = intervals.propagate(net, prop.input_region, mode, tables=tables)
    if args.json_out:
        with open(args.json_out, "w") as f:
            f.write(box.to_json())
            f.write("\n")
    for vid in sorted(box.bounds):
        lo, hi = box.bounds[vid]
        tag = " (wrap risk)" if vid in box.wrap_risk else ""
        print(f"{'/'.join(map(str, vid))}: [{float(lo):.6g}, "
              f"{float(hi):.6g}]{tag}")
    if args.report:
        cand = mode if isinstance(mode, FxpMode) else None
        real_tables = pipeline.build_tables(net, REAL,
                                            pipeline.PipelineOptions(
                                                epsilon=args.epsilon,
                                                cutoff=args.cutoff))
        print(intervals.range_report(net, prop.input_region, cand,
                                     tables=real_tables).render())
    return EXIT_SAFE


def _cmd_replay(args) -> int:
    net = load_network(args.net)
    mode = _mode_from_args(args)
    options = pipeline.PipelineOptions(epsilon=args.epsilon,
                                       cutoff=args.cutoff,
                                       grid_step=args.grid_step)
    tables = pipeline.build_tables(net, mode, options)
    if args.from_ce:
        try:
            with open(args.from_ce) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read counterexample: {exc}", EXIT_IO)
        if isinstance(mode, FxpMode):
            values = [int(v) for v in doc["inputs"]]
        elif isinstance(mode, Float32Mode):
            values = [float(v) for v in doc["inputs"]]
        else:
            values = [Fraction(str(v)) for v in doc["inputs"]]
    elif args.input:
        reals = [float(t) for t in args.input.split(",")]
        if isinstance(mode, FxpMode):
            values = [fxp_from_real(r, mode.format, mode.rounding).raw
                      for r in reals]
        elif isinstance(mode, Float32Mode):
            values = reals
        else:
            values = [Fraction(str(r)) for r in reals]
    else:
        raise CliError("need --input or --from-ce")
    if len(values) != net.input_dim:
        raise CliError(f"expected {net.input_dim} inputs, got {len(values)}")

    if isinstance(mode, FxpMode):
        qnet = quantize_network(net, mode, tables)
        trace = forward_fxp(qnet, values)
        scale = 1 << mode.format.l
        outs = [r / scale for r in trace.outputs]
        print(f"inputs (raw): {trace.inputs}")
        print(f"inputs (real): {[r / scale for r in trace.inputs]}")
        print(f"outputs (raw): {trace.outputs}")
        print(f"outputs (real): {outs}")
        print(f"wrap events: {trace.wrap_count}")
    elif isinstance(mode, Float32Mode):
        trace = forward_float32(net, values, tables)
        print(f"outputs: {[float(v) for v in trace.outputs]}")
    else:
        trace = forward_real_exact(net, values, tables)
        print(f"outputs: {[float(v) for v in trace.outputs]}")
    if args.trace:
        for li, (pre, post) in enumerate(zip(trace.pre_activations,
                                             trace.post_activations)):
            print(f"layer {li} pre:  {pre}")
            print(f"layer {li} post: {post}")
    if args.prop or args.prop_json:
        prop = _load_prop(args, net)
        holds = check_property(prop, trace.outputs, mode)
        print(f"property: {'Holds' if holds else 'Violated'}")
        return EXIT_SAFE if holds else EXIT_FALSIFIED
    return EXIT_SAFE


def _cmd_lut(args) -> int:
    act = SIGMOID if args.activation == "sigmoid" else TANH
    if args.grid_step is not None:
        spec, eps = grid_step_spec(act, args.cutoff, args.grid_step)
    else:
        spec, eps = default_spec(act, args.cutoff), args.epsilon
    table = build_table(spec, eps)
    for piece in table.pieces:
        kind = "constant" if len(piece.inputs) == 1 else "grid"
        print(f"piece [{piece.lo}, {piece.hi}]: {len(piece.inputs)} "
              f"samples ({kind})")
    total = sum(len(p.inputs) for p in table.pieces)
    print(f"total samples: {total} (epsilon {eps})")
    if args.fxp:
        fmt = FxpFormat.parse(args.fxp)
        ftab = lut_to_fxp(table, fmt, RoundingMode(args.rounding))
        print(f"fixed-point entries after snapping to {fmt}: "
              f"{len(ftab.grid_raws)}")
    if args.csv_out:
        with open(args.csv_out, "w") as f:
            f.write(table.to_csv())
    return EXIT_SAFE


def _cmd_emit_smt(args) -> int:
    net = load_network(args.net)
    prop = _load_prop(args, net)
    mode = _mode_from_args(args)
    options = _options_from_args(args)
    prog, _report, _tables = pipeline.compile_program(net, prop, mode,
                                                      options)
    script = smt.emit_smtlib(prog, comment=f"network {net.name}; "
                                           f"mode {mode}")
    if args.output:
        with open(args.output, "w") as f:
            f.write(script)
    else:
        sys.stdout.write(script)
    return EXIT_SAFE


def _cmd_export_ce(args) -> int:
    net = load_network(args.net)
    prop = _load_prop(args, net)
    mode = _mode_from_args(args)
    options = _options_from_args(args)
    solver = _solver_from_args(args)
    report = pipeline.verify(net, prop, mode, options, solver)
    print(report.render())
    if report.verdict != pipeline.FALSIFIED:
        print("no counterexample to export", file=sys.stderr)
        return _VERDICT_EXIT[report.verdict]
    shape = _parse_shape(args.shape) if args.shape else None
    try:
        pipeline.export_counterexample(report, json_path=args.json_out,
                                       pgm_path=args.pgm_out, shape=shape,
                                       region=prop)
    except ValueError as exc:
        raise CliError(str(exc))
    return EXIT_FALSIFIED


_COMMANDS = {
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "intervals": _cmd_intervals,
    "replay": _cmd_replay,
    "lut": _cmd_lut,
    "emit-smt": _cmd_emit_smt,
    "export-ce": _cmd_export_ce,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args, argv)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return EXIT_IO
    except Exception as exc:  # internal failure, distinct from Unknown
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
