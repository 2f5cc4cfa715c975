"""Feedforward network model, safety properties and the on-disk formats.

Networks are plain layered weight/bias containers with per-layer activation
kinds.  The NNet text format (github.com/sisl/NNet) is the native input
format; safety properties come in as JSON documents pairing an input
hyperrectangle with a boolean assertion over the outputs.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import enum
import io
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Optional, Sequence, Union


class ParseError(ValueError):
    """Malformed network or property file; carries a line number if known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# Activations


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"
    PIECEWISE_LINEAR = "pwl"


@dataclass(frozen=True)
class Activation:
    """An activation function tag.

    PIECEWISE_LINEAR carries (x, y) knots with strictly increasing x; the
    function is the linear interpolation of the knots, extended beyond the
    first/last knot with the slope of the boundary segment.
    """

    kind: ActivationKind
    knots: tuple = ()

    def __post_init__(self) -> None:
        if self.kind is ActivationKind.PIECEWISE_LINEAR:
            if len(self.knots) < 2:
                raise ValueError("piecewise-linear activation needs >= 2 knots")
            xs = [x for x, _ in self.knots]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("knot abscissae must be strictly increasing")
        elif self.knots:
            raise ValueError("knots only apply to piecewise-linear activations")

    def __call__(self, u: float) -> float:
        k = self.kind
        if k is ActivationKind.RELU:
            return max(0.0, u)
        if k is ActivationKind.IDENTITY:
            return u
        if k is ActivationKind.SIGMOID:
            return sigmoid(u)
        if k is ActivationKind.TANH:
            return math.tanh(u)
        return self._pwl(u)

    def _pwl(self, u: float) -> float:
        knots = self.knots
        if u <= knots[0][0]:
            (x0, y0), (x1, y1) = knots[0], knots[1]
        elif u >= knots[-1][0]:
            (x0, y0), (x1, y1) = knots[-2], knots[-1]
        else:
            for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
                if u <= x1:
                    break
        t = (u - x0) / (x1 - x0)
        return y0 + t * (y1 - y0)

    @property
    def is_linear(self) -> bool:
        """True when the function is exact under piecewise-linear encoding."""
        return self.kind in (ActivationKind.RELU, ActivationKind.IDENTITY,
                             ActivationKind.PIECEWISE_LINEAR)


def sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


RELU = Activation(ActivationKind.RELU)
IDENTITY = Activation(ActivationKind.IDENTITY)
SIGMOID = Activation(ActivationKind.SIGMOID)
TANH = Activation(ActivationKind.TANH)


# ---------------------------------------------------------------------------
# Network


@dataclass(frozen=True)
class Layer:
    weights: tuple  # tuple of rows, one row per neuron
    biases: tuple
    activation: Activation

    @property
    def size(self) -> int:
        return len(self.biases)

    @property
    def fan_in(self) -> int:
        return len(self.weights[0])

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ValueError("weight row count differs from bias count")
        if not self.weights:
            raise ValueError("empty layer")
        width = len(self.weights[0])
        for row in self.weights:
            if len(row) != width:
                raise ValueError("ragged weight matrix")
        for v in (x for row in self.weights for x in row):
            if not math.isfinite(v):
                raise ValueError("non-finite weight")
        for v in self.biases:
            if not math.isfinite(v):
                raise ValueError("non-finite bias")


@dataclass(frozen=True)
class NormalizationInfo:
    """NNet normalization metadata; parsed but never applied implicitly."""

    input_mins: tuple
    input_maxes: tuple
    means: tuple
    ranges: tuple

    def normalize_input(self, x: Sequence[float]) -> list:
        out = []
        for i, v in enumerate(x):
            v = min(max(v, self.input_mins[i]), self.input_maxes[i])
            out.append((v - self.means[i]) / self.ranges[i])
        return out

    def denormalize_output(self, y: Sequence[float]) -> list:
        mean, rng = self.means[-1], self.ranges[-1]
        return [v * rng + mean for v in y]


@dataclass(frozen=True)
class Network:
    layers: tuple
    name: str = "net"
    normalization: Optional[NormalizationInfo] = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one layer")
        fan_in = self.layers[0].fan_in
        for i, layer in enumerate(self.layers):
            if layer.fan_in != fan_in:
                raise ValueError(
                    f"layer {i} expects {layer.fan_in} inputs, previous "
                    f"layer provides {fan_in}")
            fan_in = layer.size

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].size

    @property
    def num_neurons(self) -> int:
        return sum(layer.size for layer in self.layers)


def make_network(weights: Sequence, biases: Sequence,
                 activations: Sequence[Activation],
                 name: str = "net") -> Network:
    layers = tuple(
        Layer(tuple(tuple(float(w) for w in row) for row in wm),
              tuple(float(b) for b in bv), act)
        for wm, bv, act in zip(weights, biases, activations))
    return Network(layers, name=name)


def forward_real(net: Network, x: Sequence[float]) -> list:
    """Reference forward pass in double precision (Eq. semantics, no
    quantization)."""
    if len(x) != net.input_dim:
        raise ValueError(f"expected {net.input_dim} inputs, got {len(x)}")
    values = [float(v) for v in x]
    for layer in net.layers:
        nxt = []
        for row, b in zip(layer.weights, layer.biases):
            u = sum(w * v for w, v in zip(row, values)) + b
            nxt.append(layer.activation(u))
        values = nxt
    return values


# ---------------------------------------------------------------------------
# Output assertions

CMP_OPS = ("<=", ">=", "<", ">", "=")


@dataclass(frozen=True)
class OutputRef:
    index: int


@dataclass(frozen=True)
class Comparison:
    op: str  # one of CMP_OPS
    lhs: Union[OutputRef, float]
    rhs: Union[OutputRef, float]


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or" | "not"
    args: tuple


AssertionNode = Union[Comparison, BoolOp]


@dataclass(frozen=True)
class OutputAssertion:
    """Boolean comparator tree over network outputs y_0..y_{n-1}."""

    root: AssertionNode
    source: str = ""

    def referenced_outputs(self) -> set:
        refs: set = set()

        def walk(node):
            if isinstance(node, BoolOp):
                for a in node.args:
                    walk(a)
            else:
                for side in (node.lhs, node.rhs):
                    if isinstance(side, OutputRef):
                        refs.add(side.index)

        walk(self.root)
        return refs

    def evaluate(self, outputs: Sequence) -> bool:
        """Evaluate on concrete outputs (floats, Fractions or raw ints)."""

        def val(side):
            return outputs[side.index] if isinstance(side, OutputRef) else side

        def walk(node) -> bool:
            if isinstance(node, BoolOp):
                if node.op == "and":
                    return all(walk(a) for a in node.args)
                if node.op == "or":
                    return any(walk(a) for a in node.args)
                return not walk(node.args[0])
            a, b = val(node.lhs), val(node.rhs)
            return {"<": a < b, "<=": a <= b, ">": a > b,
                    ">=": a >= b, "=": a == b}[node.op]

        return walk(self.root)


def robust_class(index: int, num_outputs: int) -> OutputAssertion:
    """The assertion that class `index` scores strictly above all others."""
    terms = tuple(
        Comparison(">", OutputRef(index), OutputRef(j))
        for j in range(num_outputs) if j != index)
    if len(terms) == 1:
        root: AssertionNode = terms[0]
    else:
        root = BoolOp("and", terms)
    return OutputAssertion(root, source=f"robust_class({index})")


class _AssertionParser:
    """Recursive-descent parser for expressions such as
    "y_0 >= 2.7 && (y_1 < y_0 || !(y_2 = 0))"."""

    _TOKEN = re.compile(
        r"\s*(?:(y_\d+)|(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)|"
        r"(&&|\|\||and\b|or\b|not\b|!|<=|>=|<|>|==|=|\(|\)))")

    def __init__(self, text: str):
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = self._TOKEN.match(text, pos)
            if m is None:
                if text[pos:].strip():
                    raise ParseError(f"bad token near {text[pos:pos+20]!r}")
                break
            self.tokens.append(m.group(1) or m.group(2) or m.group(3))
            pos = m.end()
        self.pos = 0

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of assertion expression")
        self.pos += 1
        return tok

    def parse(self) -> AssertionNode:
        node = self.parse_or()
        if self.peek() is not None:
            raise ParseError(f"trailing tokens at {self.peek()!r}")
        return node

    def parse_or(self) -> AssertionNode:
        args = [self.parse_and()]
        while self.peek() in ("||", "or"):
            self.take()
            args.append(self.parse_and())
        return args[0] if len(args) == 1 else BoolOp("or", tuple(args))

    def parse_and(self) -> AssertionNode:
        args = [self.parse_unary()]
        while self.peek() in ("&&", "and"):
            self.take()
            args.append(self.parse_unary())
        return args[0] if len(args) == 1 else BoolOp("and", tuple(args))

    def parse_unary(self) -> AssertionNode:
        if self.peek() in ("!", "not"):
            self.take()
            return BoolOp("not", (self.parse_unary(),))
        if self.peek() == "(":
            self.take()
            node = self.parse_or()
            if self.take() != ")":
                raise ParseError("expected ')'")
            return node
        return self.parse_comparison()

    def parse_comparison(self) -> Comparison:
        lhs = self.parse_operand()
        op = self.take()
        if op == "==":
            op = "="
        if op not in CMP_OPS:
            raise ParseError(f"expected comparator, got {op!r}")
        rhs = self.parse_operand()
        return Comparison(op, lhs, rhs)

    def parse_operand(self):
        tok = self.take()
        if tok.startswith("y_"):
            return OutputRef(int(tok[2:]))
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"expected output variable or constant, got {tok!r}")


def parse_assertion(text: str) -> OutputAssertion:
    return OutputAssertion(_AssertionParser(text).parse(), source=text)


# ---------------------------------------------------------------------------
# Safety properties


@dataclass(frozen=True)
class HyperRect:
    """Per-dimension closed intervals [lo, hi]."""

    bounds: tuple  # of (lo, hi) floats

    def __post_init__(self) -> None:
        for i, (lo, hi) in enumerate(self.bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"dimension {i}: bounds must be finite")
            if lo > hi:
                raise ValueError(f"dimension {i}: lo {lo} > hi {hi}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def contains(self, x: Sequence[float]) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(x, self.bounds))

    @classmethod
    def around(cls, center: Sequence[float], radius: float) -> "HyperRect":
        return cls(tuple((c - radius, c + radius) for c in center))


@dataclass(frozen=True)
class SafetyProperty:
    input_region: HyperRect
    output_condition: OutputAssertion

    def validate_against(self, net: Network) -> None:
        if self.input_region.dim != net.input_dim:
            raise ValueError(
                f"property has {self.input_region.dim} input dimensions, "
                f"network expects {net.input_dim}")
        refs = self.output_condition.referenced_outputs()
        bad = [i for i in refs if i >= net.output_dim]
        if bad:
            raise ValueError(f"assertion references outputs {bad} but the "
                             f"network has only {net.output_dim}")


def parse_property(source: Union[str, IO[str]], *,
                   num_outputs: Optional[int] = None) -> SafetyProperty:
    """Parse the property JSON document.

    The "robust_class" form needs the output count; it is taken from
    `num_outputs` or, failing that, inferred later via `validate_against`.
    """
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        doc = json.loads(source)
    if not isinstance(doc, dict) or "input" not in doc or "assert" not in doc:
        raise ParseError('property JSON needs "input" and "assert" keys')
    bounds = []
    for i, entry in enumerate(doc["input"]):
        try:
            bounds.append((float(entry["lo"]), float(entry["hi"])))
        except (TypeError, KeyError):
            raise ParseError(f'input entry {i} must be {{"lo": r, "hi": r}}')
    region = HyperRect(tuple(bounds))
    spec = doc["assert"]
    if isinstance(spec, dict) and "robust_class" in spec:
        idx = int(spec["robust_class"])
        if num_outputs is None:
            raise ParseError("robust_class property needs the output count")
        if idx >= num_outputs:
            raise ParseError(f"robust_class index {idx} out of range")
        assertion = robust_class(idx, num_outputs)
    elif isinstance(spec, str):
        assertion = parse_assertion(spec)
    else:
        raise ParseError('"assert" must be an expression string or '
                         '{"robust_class": i}')
    return SafetyProperty(region, assertion)


def load_property(path: str, net: Optional[Network] = None) -> SafetyProperty:
    with open(path) as fh:
        prop = parse_property(fh, num_outputs=net.output_dim if net else None)
    if net is not None:
        prop.validate_against(net)
    return prop


# ---------------------------------------------------------------------------
# NNet text format


def _numeric_row(line: str, lineno: int) -> list:
    parts = [p for p in line.strip().rstrip(",").split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"non-numeric token in {line.strip()!r}", lineno)


def parse_nnet(source: Union[str, IO[str]], name: str = "net") -> Network:
    """Parse NNet text: comments, header counts, layer sizes, flag line,
    mins/maxes/means/ranges, then per-layer weight rows and bias rows."""
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = source.read().splitlines()
    pos = 0

    def next_line() -> tuple:
        nonlocal pos
        while pos < len(lines):
            line = lines[pos]
            pos += 1
            if line.strip().startswith("//") or not line.strip():
                continue
            return line, pos
        raise ParseError("truncated file", len(lines))

    line, ln = next_line()
    header = _numeric_row(line, ln)
    if len(header) < 4:
        raise ParseError("header needs numLayers, inputSize, outputSize, "
                         "maxLayerSize", ln)
    num_layers, input_size, output_size, max_layer = (int(v) for v in header[:4])
    if num_layers < 1:
        raise ParseError("need at least one layer", ln)

    line, ln = next_line()
    sizes = [int(v) for v in _numeric_row(line, ln)]
    if len(sizes) != num_layers + 1:
        raise ParseError(
            f"expected {num_layers + 1} layer sizes, got {len(sizes)}", ln)
    if sizes[0] != input_size or sizes[-1] != output_size:
        raise ParseError("layer-size list disagrees with header", ln)
    if max(sizes) > max_layer:
        raise ParseError("a layer exceeds the declared maxLayerSize", ln)

    next_line()  # legacy flag line, ignored

    meta_rows = []
    for what, want in (("input minimums", input_size),
                       ("input maximums", input_size),
                       ("means", input_size + 1),
                       ("ranges", input_size + 1)):
        line, ln = next_line()
        row = _numeric_row(line, ln)
        if len(row) != want:
            raise ParseError(f"expected {want} {what}, got {len(row)}", ln)
        meta_rows.append(tuple(row))
    norm = NormalizationInfo(*meta_rows)

    layers = []
    for li in range(num_layers):
        fan_in, size = sizes[li], sizes[li + 1]
        rows = []
        for ni in range(size):
            line, ln = next_line()
            row = _numeric_row(line, ln)
            if len(row) != fan_in:
                raise ParseError(
                    f"layer {li} neuron {ni}: expected {fan_in} weights, "
                    f"got {len(row)}", ln)
            rows.append(tuple(row))
        biases = []
        for ni in range(size):
            line, ln = next_line()
            row = _numeric_row(line, ln)
            if len(row) != 1:
                raise ParseError(
                    f"layer {li} neuron {ni}: expected a single bias", ln)
            biases.append(row[0])
        act = RELU if li < num_layers - 1 else IDENTITY
        layers.append(Layer(tuple(rows), tuple(biases), act))

    # spare trailing numeric rows mean the declared sizes were wrong
    while pos < len(lines):
        line = lines[pos]
        pos += 1
        if line.strip() and not line.strip().startswith("//"):
            raise ParseError("unexpected trailing data", pos)

    return Network(tuple(layers), name=name, normalization=norm)


def load_nnet(path: str) -> Network:
    import os
    with open(path) as fh:
        return parse_nnet(fh, name=os.path.splitext(os.path.basename(path))[0])


def serialize_nnet(net: Network) -> str:
    """Write NNet text; parse_nnet(serialize_nnet(n)) == n up to formatting.

    Activation kinds are not part of the NNet format (hidden ReLU, identity
    output is implied), so only networks of that shape round-trip.
    """
    sizes = [net.input_dim] + [layer.size for layer in net.layers]
    out = [f"// {net.name}"]
    out.append(f"{len(net.layers)},{net.input_dim},{net.output_dim},"
               f"{max(sizes)},")
    out.append(",".join(str(s) for s in sizes) + ",")
    out.append("0,")
    norm = net.normalization
    if norm is None:
        norm = NormalizationInfo(
            tuple([-3.4e38] * net.input_dim),
            tuple([3.4e38] * net.input_dim),
            tuple([0.0] * (net.input_dim + 1)),
            tuple([1.0] * (net.input_dim + 1)))
    for row in (norm.input_mins, norm.input_maxes, norm.means, norm.ranges):
        out.append(",".join(repr(v) for v in row) + ",")
    for layer in net.layers:
        for row in layer.weights:
            out.append(",".join(repr(v) for v in row) + ",")
        for b in layer.biases:
            out.append(f"{b!r},")
    return "\n".join(out) + "\n"
