"""Concrete network execution in each arithmetic mode.

The fixed-point path is the ground truth used to validate solver models:
it reproduces, raw integer by raw integer, exactly what the bit-vector
encoding constrains, including wrap-around and rounding behavior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from .fxp import (FxpFormat, RoundingMode, WrapCounter, fxp_from_real,
                  mult_raw, wrap_raw)
from .lut import FxpLookupTable, LookupTable, lut_eval
from .modes import Float32Mode, FxpMode, Mode, RealMode
from .network import (ActivationKind, BoolOp, Comparison, Network, OutputRef,
                      SafetyProperty)


@dataclass
class QuantizedNetwork:
    """Network with weights/biases pre-quantized to raw integers."""

    source: Network
    mode: FxpMode
    weights_raw: list   # per layer: list of rows of raw ints
    biases_raw: list
    tables: dict        # ActivationKind -> FxpLookupTable
    quantization_wraps: int = 0


def quantize_network(net: Network, mode: FxpMode,
                     tables: Optional[dict] = None) -> QuantizedNetwork:
    fmt, rounding = mode.format, mode.rounding
    counter = WrapCounter()
    weights_raw, biases_raw = [], []
    for layer in net.layers:
        weights_raw.append([[fxp_from_real(w, fmt, rounding, counter).raw
                             for w in row] for row in layer.weights])
        biases_raw.append([fxp_from_real(b, fmt, rounding, counter).raw
                           for b in layer.biases])
    return QuantizedNetwork(net, mode, weights_raw, biases_raw,
                            dict(tables or {}), counter.count)


@dataclass
class Trace:
    inputs: list
    pre_activations: list    # per layer
    post_activations: list   # per layer
    wrap_count: int = 0
    wrap_events: list = field(default_factory=list)

    @property
    def outputs(self) -> list:
        return self.post_activations[-1]


def forward_fxp(qnet: QuantizedNetwork, x_raws: Sequence[int],
                counter: Optional[WrapCounter] = None) -> Trace:
    """Bit-exact fixed-point forward pass on raw integers.

    Accumulation order matches the formula encoding: products in input
    order, each added with wrap-around, bias last, activation on the raw
    accumulator.
    """
    fmt = qnet.mode.format
    rounding = qnet.mode.rounding
    counter = counter if counter is not None else WrapCounter()
    net = qnet.source
    if len(x_raws) != net.input_dim:
        raise ValueError(f"expected {net.input_dim} inputs, got {len(x_raws)}")
    for r in x_raws:
        if not (fmt.min_raw <= r <= fmt.max_raw):
            raise ValueError(f"input raw {r} does not fit {fmt}")
    current = list(x_raws)
    pres, posts = [], []
    for li, layer in enumerate(net.layers):
        kind = layer.activation.kind
        table = qnet.tables.get(kind)
        if not layer.activation.is_linear and table is None:
            raise ValueError(f"layer {li}: no table for {kind.value}")
        pre, post = [], []
        for row, b in zip(qnet.weights_raw[li], qnet.biases_raw[li]):
            acc = 0
            for w, x in zip(row, current):
                term = mult_raw(w, x, fmt, rounding, counter)
                acc = wrap_raw(acc + term, fmt, counter, "add")
            acc = wrap_raw(acc + b, fmt, counter, "add")
            pre.append(acc)
            if kind is ActivationKind.RELU:
                post.append(acc if acc >= 0 else 0)
            elif kind is ActivationKind.IDENTITY:
                post.append(acc)
            else:
                post.append(table.eval_raw(acc))
        pres.append(pre)
        posts.append(post)
        current = post
    return Trace(list(x_raws), pres, posts, counter.count,
                 list(counter.events))


def forward_real_exact(net: Network, x: Sequence[Fraction],
                       tables: Optional[dict] = None) -> Trace:
    """Exact rational forward pass; matches the real-relaxation encoding."""
    tables = tables or {}
    current = [Fraction(v) for v in x]
    pres, posts = [], []
    for li, layer in enumerate(net.layers):
        kind = layer.activation.kind
        table = tables.get(kind)
        pre, post = [], []
        for row, b in zip(layer.weights, layer.biases):
            acc = Fraction(0)
            for w, v in zip(row, current):
                acc += Fraction(w) * v
            acc += Fraction(b)
            pre.append(acc)
            if kind is ActivationKind.RELU:
                post.append(max(Fraction(0), acc))
            elif kind is ActivationKind.IDENTITY:
                post.append(acc)
            elif table is not None:
                post.append(Fraction(lut_eval(table, float(acc))))
            else:
                post.append(Fraction(layer.activation(float(acc))))
        pres.append(pre)
        posts.append(post)
        current = post
    return Trace([Fraction(v) for v in x], pres, posts)


def forward_float32(net: Network, x: Sequence[float],
                    tables: Optional[dict] = None) -> Trace:
    """IEEE binary32 forward pass with round-nearest-even at every step."""
    tables = tables or {}
    f32 = np.float32
    current = [f32(v) for v in x]
    pres, posts = [], []
    for li, layer in enumerate(net.layers):
        kind = layer.activation.kind
        table = tables.get(kind)
        pre, post = [], []
        for row, b in zip(layer.weights, layer.biases):
            acc = f32(0)
            for w, v in zip(row, current):
                acc = f32(acc + f32(f32(w) * v))
            acc = f32(acc + f32(b))
            pre.append(acc)
            if kind is ActivationKind.RELU:
                post.append(acc if acc >= 0 else f32(0))
            elif kind is ActivationKind.IDENTITY:
                post.append(acc)
            elif table is not None:
                post.append(f32(lut_eval(table, float(acc))))
            else:
                post.append(f32(layer.activation(float(acc))))
        pres.append(pre)
        posts.append(post)
        current = post
    return Trace([f32(v) for v in x], pres, posts)


# ---------------------------------------------------------------------------
# Property evaluation


def check_property(prop: SafetyProperty, outputs: Sequence,
                   mode: Mode) -> bool:
    """Evaluate the output condition on concrete outputs.

    Comparisons are exact: fixed-point outputs compare as rationals against
    the exact constant, mirroring the raw-threshold rewrite in the
    encoding; float32 outputs compare after casting the constant to
    binary32, mirroring the float encoding.
    """
    if isinstance(mode, FxpMode):
        vals = [Fraction(o, 1 << mode.format.l) if isinstance(o, int) else o
                for o in outputs]
        conv = Fraction
    elif isinstance(mode, Float32Mode):
        vals = [np.float32(o) for o in outputs]
        conv = np.float32
    else:
        vals = [Fraction(o) for o in outputs]
        conv = Fraction

    def side(s):
        if isinstance(s, OutputRef):
            return vals[s.index]
        return conv(s)

    def walk(node) -> bool:
        if isinstance(node, BoolOp):
            if node.op == "and":
                return all(walk(a) for a in node.args)
            if node.op == "or":
                return any(walk(a) for a in node.args)
            return not walk(node.args[0])
        assert isinstance(node, Comparison)
        a, b = side(node.lhs), side(node.rhs)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
                "=": a == b}[node.op]

    return walk(prop.output_condition.root)


def input_in_region(prop: SafetyProperty, inputs: Sequence,
                    mode: Mode) -> bool:
    """Region membership under the mode's quantized bound semantics."""
    for v, (lo, hi) in zip(inputs, prop.input_region.bounds):
        if isinstance(mode, FxpMode):
            fmt, rnd = mode.format, mode.rounding
            lo_q = fxp_from_real(lo, fmt, rnd).raw
            hi_q = fxp_from_real(hi, fmt, rnd).raw
            if not (lo_q <= v <= hi_q):
                return False
        elif isinstance(mode, Float32Mode):
            if not (np.float32(lo) <= np.float32(v) <= np.float32(hi)):
                return False
        else:
            if not (Fraction(lo) <= Fraction(v) <= Fraction(hi)):
                return False
    return True


@dataclass
class ReplayResult:
    violates: bool          # counterexample candidate confirmed
    in_region: bool
    trace: Trace

    @property
    def confirmed(self) -> bool:
        return self.violates and self.in_region


def replay(net: Network, prop: SafetyProperty, mode: Mode,
           inputs: Sequence, tables: Optional[dict] = None,
           qnet: Optional[QuantizedNetwork] = None) -> ReplayResult:
    """Re-execute a counterexample candidate with the concrete semantics.

    `inputs` are payload-domain values: raw ints in fixed-point mode,
    rationals in real mode, floats in float32 mode.
    """
    if isinstance(mode, FxpMode):
        if qnet is None:
            qnet = quantize_network(net, mode, tables)
        trace = forward_fxp(qnet, inputs)
    elif isinstance(mode, Float32Mode):
        trace = forward_float32(net, inputs, tables)
    else:
        trace = forward_real_exact(net, inputs, tables)
    holds = check_property(prop, trace.outputs, mode)
    return ReplayResult(not holds, input_in_region(prop, inputs, mode), trace)
