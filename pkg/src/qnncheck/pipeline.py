"""End-to-end verification pipeline and the quantization sweep.

Workflow per task: quantize/discretize, interval analysis, lowering to the
SSA DAG, optimization passes, SMT solving, and replay validation of any
model the solver returns.  Verdicts: Safe (unsat), Falsified (sat and the
counterexample replays as a genuine violation), Unknown (everything else —
timeouts, solver errors, or replay mismatches)."""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import executor, intervals, ir, smt
from .fxp import FxpFormat, RoundingMode, min_integer_bits
from .lut import build_table, default_spec, grid_step_spec, lut_to_fxp
from .modes import Float32Mode, FxpMode, Mode, RealMode
from .network import ActivationKind, Network, SafetyProperty

SAFE = "Safe"
FALSIFIED = "Falsified"
UNKNOWN = "Unknown"


@dataclass
class PipelineOptions:
    use_intervals: bool = True
    use_simplify: bool = True
    use_slice: bool = True
    use_balance: bool = True
    epsilon: float = 0.01
    cutoff: float = 20.0
    grid_step: Optional[float] = None   # alternative table parameterization
    assume_post_activation: bool = False
    keep_script: bool = False


@dataclass
class StageStat:
    name: str
    seconds: float
    nodes_before: Optional[int] = None
    nodes_after: Optional[int] = None


@dataclass
class Counterexample:
    inputs: list            # payload domain: raws / rationals / floats
    inputs_real: list       # float rendering
    outputs: list           # payload domain
    outputs_real: list
    trace_wraps: int = 0

    def to_json(self) -> dict:
        return {
            "inputs": [_payload_json(v) for v in self.inputs],
            "inputs_real": self.inputs_real,
            "outputs": [_payload_json(v) for v in self.outputs],
            "outputs_real": self.outputs_real,
            "wrap_events": self.trace_wraps,
        }


def _payload_json(v):
    if isinstance(v, Fraction):
        return str(v)
    if hasattr(v, "item"):
        return v.item()
    return v


@dataclass
class VerificationReport:
    verdict: str
    mode: Mode
    solver_name: str = ""
    solver_status: str = ""
    reason: str = ""
    counterexample: Optional[Counterexample] = None
    stage_stats: list = field(default_factory=list)
    nodes_initial: int = 0
    nodes_final: int = 0
    wrap_risk: list = field(default_factory=list)
    guard_facts: dict = field(default_factory=dict)
    total_time: float = 0.0
    smt_script: Optional[str] = None
    network_name: str = ""

    def to_json(self) -> dict:
        doc = {
            "verdict": self.verdict,
            "mode": str(self.mode),
            "network": self.network_name,
            "solver": self.solver_name,
            "solver_status": self.solver_status,
            "reason": self.reason,
            "nodes_initial": self.nodes_initial,
            "nodes_final": self.nodes_final,
            "wrap_risk": ["/".join(map(str, v)) for v in self.wrap_risk],
            "stages": [{"name": s.name, "seconds": round(s.seconds, 6),
                        "nodes_before": s.nodes_before,
                        "nodes_after": s.nodes_after}
                       for s in self.stage_stats],
            "total_time": round(self.total_time, 6),
        }
        if self.counterexample is not None:
            doc["counterexample"] = self.counterexample.to_json()
        return doc

    def render(self) -> str:
        lines = [f"verdict: {self.verdict}",
                 f"mode: {self.mode}"]
        if self.reason:
            lines.append(f"reason: {self.reason}")
        lines.append(f"solver: {self.solver_name} ({self.solver_status})")
        lines.append(f"formula nodes: {self.nodes_initial} -> "
                     f"{self.nodes_final}")
        for s in self.stage_stats:
            extra = ""
            if s.nodes_before is not None:
                extra = f"  nodes {s.nodes_before} -> {s.nodes_after}"
            lines.append(f"  {s.name:<12} {s.seconds:8.3f}s{extra}")
        if self.wrap_risk:
            lines.append("wrap-risk neurons: " + ", ".join(
                "/".join(map(str, v)) for v in self.wrap_risk))
        if self.counterexample is not None:
            ce = self.counterexample
            lines.append(f"counterexample inputs: {ce.inputs_real}")
            lines.append(f"counterexample outputs: {ce.outputs_real}")
        lines.append(f"total time: {self.total_time:.3f}s")
        return "\n".join(lines)


def build_tables(net: Network, mode: Mode, options: PipelineOptions) -> dict:
    """Lookup tables for every tabled activation kind the network uses."""
    kinds = {layer.activation.kind for layer in net.layers}
    tabled = kinds & {ActivationKind.SIGMOID, ActivationKind.TANH}
    tables: Dict[ActivationKind, object] = {}
    for kind in sorted(tabled, key=lambda k: k.value):
        act = next(l.activation for l in net.layers
                   if l.activation.kind is kind)
        if options.grid_step is not None:
            spec, eps = grid_step_spec(act, options.cutoff, options.grid_step)
        else:
            spec, eps = default_spec(act, options.cutoff), options.epsilon
        table = build_table(spec, eps)
        if isinstance(mode, FxpMode):
            table = lut_to_fxp(table, mode.format, mode.rounding)
        tables[kind] = table
    return tables


def compile_program(net: Network, prop: SafetyProperty, mode: Mode,
                    options: Optional[PipelineOptions] = None) -> tuple:
    """Run the front half of the pipeline; returns (program, report)."""
    options = options or PipelineOptions()
    report = VerificationReport(UNKNOWN, mode, network_name=net.name)
    t0 = time.monotonic()

    def stage(name, fn, *, nodes_of=None, before=None):
        s = time.monotonic()
        out = fn()
        stat = StageStat(name, time.monotonic() - s)
        if nodes_of is not None:
            stat.nodes_before = before
            stat.nodes_after = nodes_of(out)
        report.stage_stats.append(stat)
        return out

    tables = stage("tables", lambda: build_tables(net, mode, options))

    box = None
    guards: dict = {}
    if options.use_intervals:
        box = stage("intervals",
                    lambda: intervals.propagate(net, prop.input_region, mode,
                                                tables=tables))
        report.wrap_risk = sorted(box.wrap_risk)
        guards = dict(intervals.decidable_guards(box, net))
        report.guard_facts = {"/".join(map(str, k)): v.value
                              for k, v in guards.items()}

    prog = stage("lower",
                 lambda: ir.lower(
                     net, prop, mode, box=box, guards=guards, tables=tables,
                     assume_post_activation=options.assume_post_activation),
                 nodes_of=lambda p: p.node_count())
    report.nodes_initial = prog.node_count()

    if options.use_simplify:
        before = prog.node_count()
        prog = stage("simplify", lambda: ir.simplify(prog, facts=box),
                     nodes_of=lambda p: p.node_count(), before=before)
    if options.use_slice:
        before = prog.node_count()
        prog = stage("slice", lambda: ir.slice_program(prog),
                     nodes_of=lambda p: p.node_count(), before=before)
    if options.use_balance:
        before = prog.node_count()
        prog = stage("balance", lambda: ir.balance(prog),
                     nodes_of=lambda p: p.node_count(), before=before)
    report.nodes_final = prog.node_count()
    report.total_time = time.monotonic() - t0
    return prog, report, tables


def verify(net: Network, prop: SafetyProperty, mode: Mode,
           options: Optional[PipelineOptions] = None,
           solver: Optional[smt.SolverConfig] = None) -> VerificationReport:
    options = options or PipelineOptions()
    t0 = time.monotonic()
    try:
        prog, report, tables = compile_program(net, prop, mode, options)
    except ir.LoweringError as exc:
        report = VerificationReport(UNKNOWN, mode, reason=f"lowering: {exc}",
                                    network_name=net.name)
        report.total_time = time.monotonic() - t0
        return report

    s = time.monotonic()
    script = smt.emit_smtlib(
        prog, comment=f"network {net.name}; mode {mode}")
    report.stage_stats.append(StageStat("emit", time.monotonic() - s))
    if options.keep_script:
        report.smt_script = script

    if solver is None:
        try:
            solver = smt.default_solver()
        except RuntimeError as exc:
            report.reason = str(exc)
            report.total_time = time.monotonic() - t0
            return report
    report.solver_name = solver.name
    result = smt.run_solver(solver, script)
    report.stage_stats.append(StageStat("solve", result.wall_time))
    report.solver_status = result.status

    if result.status == "unsat":
        report.verdict = SAFE
    elif result.status == "sat":
        _attach_counterexample(report, prog, result, net, prop, mode, tables)
    else:
        report.verdict = UNKNOWN
        report.reason = {
            "timeout": "solver timeout",
            "unknown": "solver returned unknown",
        }.get(result.status, f"solver error: {result.stderr[:200]}")
    report.total_time = time.monotonic() - t0
    return report


def _attach_counterexample(report: VerificationReport, prog, result,
                           net: Network, prop: SafetyProperty, mode: Mode,
                           tables: dict) -> None:
    """Decode the model and replay it; only a confirmed violation counts."""
    if result.model is None:
        report.verdict = UNKNOWN
        report.reason = "sat but no parsable model"
        return
    try:
        values = smt.decode_model(prog, result.model)
    except smt.ModelDecodeError as exc:
        report.verdict = UNKNOWN
        report.reason = f"model decode failed: {exc}"
        return
    rr = executor.replay(net, prop, mode, values, tables=tables)
    if not rr.in_region:
        report.verdict = UNKNOWN
        report.reason = "solver model outside the input region"
        return
    if not rr.violates:
        report.verdict = UNKNOWN
        report.reason = ("replay disagrees with the solver model "
                         "(encoder/executor mismatch)")
        return
    report.verdict = FALSIFIED
    report.counterexample = _make_counterexample(rr, mode)


def _make_counterexample(rr: executor.ReplayResult,
                         mode: Mode) -> Counterexample:
    trace = rr.trace
    if isinstance(mode, FxpMode):
        scale = 1 << mode.format.l
        in_real = [r / scale for r in trace.inputs]
        out_real = [r / scale for r in trace.outputs]
    else:
        in_real = [float(v) for v in trace.inputs]
        out_real = [float(v) for v in trace.outputs]
    return Counterexample(list(trace.inputs), in_real, list(trace.outputs),
                          out_real, trace.wrap_count)


# ---------------------------------------------------------------------------
# Quantization sweep


@dataclass
class SweepRow:
    total_bits: int
    format: FxpFormat
    verdict: str
    seconds: float
    reason: str = ""
    report: Optional[VerificationReport] = None


@dataclass
class SweepReport:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["total_bits", "format", "verdict", "seconds", "reason"])
        for r in self.rows:
            w.writerow([r.total_bits, str(r.format), r.verdict,
                        f"{r.seconds:.3f}", r.reason])
        return buf.getvalue()

    def render(self) -> str:
        lines = [f"{'bits':>5}  {'format':<8} {'verdict':<10} {'time':>8}"]
        for r in self.rows:
            lines.append(f"{r.total_bits:>5}  {str(r.format):<8} "
                         f"{r.verdict:<10} {r.seconds:>7.2f}s")
        return "\n".join(lines)


def format_for_total_bits(net: Network, prop: SafetyProperty,
                          total: int) -> FxpFormat:
    """Split a total width into ⟨k,l⟩: integer bits per the range analysis
    (capped by the total), remainder fractional.

    The integer part must also hold every weight and bias, otherwise the
    parameters themselves wrap at quantization time.
    """
    report = intervals.range_report(net, prop.input_region)
    w_max = max((abs(v) for layer in net.layers
                 for row in layer.weights for v in row), default=0.0)
    b_max = max((abs(b) for layer in net.layers for b in layer.biases),
                default=0.0)
    k = max(report.recommended_k, min_integer_bits(max(w_max, b_max, 1.0)))
    k = min(max(k, 1), total)
    return FxpFormat(k, total - k)


def sweep(net: Network, prop: SafetyProperty, totals: Sequence[int],
          rounding: RoundingMode = RoundingMode.TRUNCATE,
          options: Optional[PipelineOptions] = None,
          solver: Optional[smt.SolverConfig] = None,
          workers: int = 1) -> SweepReport:
    options = options or PipelineOptions()

    def one(total: int) -> SweepRow:
        t0 = time.monotonic()
        try:
            fmt = format_for_total_bits(net, prop, total)
            mode = FxpMode(fmt, rounding)
            rep = verify(net, prop, mode, options, solver)
            return SweepRow(total, fmt, rep.verdict,
                            time.monotonic() - t0, rep.reason, rep)
        except Exception as exc:  # per-row containment: sweep continues
            return SweepRow(total, FxpFormat(max(total - 1, 1), 1), UNKNOWN,
                            time.monotonic() - t0, f"error: {exc}")

    if workers <= 1:
        rows = [one(t) for t in totals]
    else:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(one, totals))
    return SweepReport(rows)


# ---------------------------------------------------------------------------
# Counterexample export


def export_counterexample(report: VerificationReport,
                          json_path: Optional[str] = None,
                          pgm_path: Optional[str] = None,
                          shape: Optional[Tuple[int, int]] = None,
                          region: Optional[SafetyProperty] = None) -> dict:
    """Write a Falsified report's counterexample as JSON and optional PGM."""
    if report.verdict != FALSIFIED or report.counterexample is None:
        raise ValueError("no counterexample to export: verdict is "
                         f"{report.verdict}")
    ce = report.counterexample
    doc = {"verdict": report.verdict, "mode": str(report.mode),
           "network": report.network_name, **ce.to_json()}
    if json_path:
        with open(json_path, "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    if pgm_path:
        if shape is None:
            raise ValueError("PGM export needs --shape HxW")
        h, w = shape
        if h * w != len(ce.inputs_real):
            raise ValueError(f"shape {h}x{w} does not match "
                             f"{len(ce.inputs_real)} inputs")
        bounds = region.input_region.bounds if region is not None else None
        with open(pgm_path, "wb") as f:
            f.write(render_pgm(ce.inputs_real, h, w, bounds))
    return doc


def render_pgm(values: Sequence[float], height: int, width: int,
               bounds: Optional[Sequence[tuple]] = None) -> bytes:
    """Binary P5 grayscale image; values scaled from their native range."""
    if bounds is not None:
        los = [float(lo) for lo, _ in bounds]
        his = [float(hi) for _, hi in bounds]
    else:
        lo = min(values)
        hi = max(values)
        los = [lo] * len(values)
        his = [hi] * len(values)
    pixels = bytearray()
    for v, lo, hi in zip(values, los, his):
        span = hi - lo
        g = 0.0 if span == 0 else (v - lo) / span
        pixels.append(max(0, min(255, round(g * 255))))
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + bytes(pixels)
