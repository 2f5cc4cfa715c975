"""Guarded SSA expression DAG: lowering, simplification, slicing, balancing.

The network plus property compile into a hash-consed expression DAG with a
thin SSA veneer: inputs are nondet nodes, every pre-/post-activation value is
a named node, assumes/asserts are boolean roots.  All transformation passes
preserve replay semantics; the DAG interpreter in this module is the
reference used by the tests to check exactly that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import fxp
from .fxp import FxpFormat, RoundingMode
from .intervals import GuardFact, IntervalBox
from .lut import FxpLookupTable, LookupTable
from .modes import Float32Mode, FxpMode, Mode, RealMode
from .network import (Activation, ActivationKind, BoolOp, Comparison, Network,
                      OutputRef, SafetyProperty)

BOOL = ("bool",)
REAL_SORT = ("real",)
FP32_SORT = ("fp32",)


def bv_sort(width: int) -> tuple:
    return ("bv", width)


class Node:
    __slots__ = ("kind", "sort", "args", "payload")

    def __init__(self, kind: str, sort: tuple, args: tuple, payload=None):
        self.kind = kind
        self.sort = sort
        self.args = args
        self.payload = payload

    def __repr__(self) -> str:
        if self.kind in ("const", "nondet"):
            return f"{self.kind}({self.payload})"
        return f"{self.kind}/{len(self.args)}"


class ExprDag:
    """Hash-consing node factory; structurally identical nodes are unified."""

    def __init__(self) -> None:
        self._intern: Dict[tuple, Node] = {}
        self._all: List[Node] = []  # keeps ids stable for the intern keys

    def node(self, kind: str, sort: tuple, args: tuple = (),
             payload=None) -> Node:
        key = (kind, sort, payload, tuple(id(a) for a in args))
        hit = self._intern.get(key)
        if hit is not None:
            return hit
        n = Node(kind, sort, args, payload)
        self._intern[key] = n
        self._all.append(n)
        return n

    # -- convenience constructors ------------------------------------------

    def const(self, sort: tuple, value) -> Node:
        return self.node("const", sort, (), value)

    def nondet(self, name: str, sort: tuple, index: int) -> Node:
        return self.node("nondet", sort, (), (name, index))

    def add(self, a: Node, b: Node) -> Node:
        return self.node("add", a.sort, (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        return self.node("mul", a.sort, (a, b))

    def cmp(self, op: str, a: Node, b: Node) -> Node:
        return self.node("cmp", BOOL, (a, b), op)

    def ite(self, c: Node, t: Node, e: Node) -> Node:
        return self.node("ite", t.sort, (c, t, e))

    def and_(self, *args: Node) -> Node:
        if not args:
            return self.true()
        out = args[0]
        for a in args[1:]:
            out = self.node("and", BOOL, (out, a))
        return out

    def or_(self, *args: Node) -> Node:
        if not args:
            return self.false()
        out = args[0]
        for a in args[1:]:
            out = self.node("or", BOOL, (out, a))
        return out

    def not_(self, a: Node) -> Node:
        return self.node("not", BOOL, (a,))

    def xor(self, a: Node, b: Node) -> Node:
        return self.node("xor", BOOL, (a, b))

    def true(self) -> Node:
        return self.const(BOOL, True)

    def false(self) -> Node:
        return self.const(BOOL, False)


@dataclass
class SsaProgram:
    dag: ExprDag
    mode: Mode
    inputs: list        # ordered [(name, nondet Node)]
    named: list         # ordered [(name, Node)], defs precede uses
    assumes: list       # Bool nodes
    asserts: list       # Bool nodes

    def roots(self) -> list:
        return ([n for _, n in self.inputs] + [n for _, n in self.named]
                + self.assumes + self.asserts)

    def reachable(self) -> set:
        seen: set = set()
        stack = list(self.roots())
        while stack:
            n = stack.pop()
            if id(n) in seen:
                continue
            seen.add(id(n))
            stack.extend(n.args)
        return seen

    def node_count(self) -> int:
        return len(self.reachable())

    def names_for(self) -> dict:
        table: Dict[int, str] = {}
        for name, n in self.inputs + self.named:
            table.setdefault(id(n), name)
        return table


# ---------------------------------------------------------------------------
# Lowering


class LoweringError(ValueError):
    pass


def _value_sort(mode: Mode) -> tuple:
    if isinstance(mode, FxpMode):
        return bv_sort(mode.format.width)
    if isinstance(mode, Float32Mode):
        return FP32_SORT
    return REAL_SORT


def _quantize_const(value, mode: Mode):
    """Constant payload for a weight/bias/bound in the mode's sort."""
    if isinstance(mode, FxpMode):
        return fxp.fxp_from_real(value, mode.format, mode.rounding).raw
    if isinstance(mode, Float32Mode):
        import numpy as np
        return float(np.float32(value))
    return Fraction(value)


def _cmp_const_threshold(op: str, c: float, fmt: FxpFormat) -> tuple:
    """Exact raw-domain rewrite of (y OP c): returns (op, raw) or
    ("false"/"true", None) when no raw satisfies/falsifies it."""
    scaled = Fraction(c) * (1 << fmt.l)
    if op == ">":
        return (">", scaled.numerator // scaled.denominator)  # floor
    if op == ">=":
        return (">=", -((-scaled.numerator) // scaled.denominator))  # ceil
    if op == "<":
        return ("<", -((-scaled.numerator) // scaled.denominator))
    if op == "<=":
        return ("<=", scaled.numerator // scaled.denominator)
    # equality only holds when the constant is on the lattice
    if scaled.denominator == 1:
        return ("=", scaled.numerator)
    return ("false", None)


def _interval_to_raw(lo: Fraction, hi: Fraction, fmt: FxpFormat) -> tuple:
    lo_raw = math.floor(lo * (1 << fmt.l))
    hi_raw = math.ceil(hi * (1 << fmt.l))
    lo_raw = max(fmt.min_raw, min(fmt.max_raw, lo_raw))
    hi_raw = max(fmt.min_raw, min(fmt.max_raw, hi_raw))
    return lo_raw, hi_raw


def _lower_table_select(dag: ExprDag, u: Node, outputs: Sequence,
                        thresholds: Sequence, sort: tuple,
                        const) -> Node:
    """Balanced ite tree keyed on threshold comparisons against u."""

    def build(lo: int, hi: int) -> Node:  # entries [lo, hi]
        if lo == hi:
            return dag.const(sort, const(outputs[lo]))
        mid = (lo + hi + 1) // 2
        guard = dag.cmp("<", u, dag.const(sort, const(thresholds[mid - 1])))
        return dag.ite(guard, build(lo, mid - 1), build(mid, hi))

    return build(0, len(outputs) - 1)


def lower(net: Network, prop: SafetyProperty, mode: Mode,
          box: Optional[IntervalBox] = None,
          guards: Optional[dict] = None,
          tables: Optional[dict] = None,
          assume_post_activation: bool = False) -> SsaProgram:
    """Compile network + property into a guarded SSA program.

    `guards` maps ("u", layer, neuron) to a GuardFact; decided ReLU guards
    are not emitted as ite nodes.  When `box` is given its pre-activation
    bounds become extra assumes (post-activation too if requested).
    """
    prop.validate_against(net)
    dag = ExprDag()
    sort = _value_sort(mode)
    guards = guards or {}
    tables = tables or {}
    is_fxp = isinstance(mode, FxpMode)
    fmt = mode.format if is_fxp else None

    def const(v) -> Node:
        return dag.const(sort, v if is_fxp and isinstance(v, int)
                         else _quantize_const(v, mode))

    def raw_const(raw: int) -> Node:
        return dag.const(sort, raw)

    inputs = []
    assumes = []
    current: List[Node] = []
    for i, (lo, hi) in enumerate(prop.input_region.bounds):
        x = dag.nondet(f"x_{i}", sort, i)
        inputs.append((f"x_{i}", x))
        current.append(x)
        lo_c = dag.const(sort, _quantize_const(lo, mode))
        hi_c = dag.const(sort, _quantize_const(hi, mode))
        assumes.append(dag.cmp("<=", lo_c, x))
        assumes.append(dag.cmp("<=", x, hi_c))

    named = []
    zero = dag.const(sort, 0 if is_fxp else _quantize_const(0, mode))
    for li, layer in enumerate(net.layers):
        act = layer.activation
        if is_fxp and act.kind is ActivationKind.PIECEWISE_LINEAR:
            raise LoweringError(
                "piecewise-linear activations are supported in real/float "
                "mode only")
        table = tables.get(act.kind)
        if not act.is_linear and table is None:
            raise LoweringError(
                f"layer {li}: activation {act.kind.value} needs a lookup table")
        nxt: List[Node] = []
        for ni, (row, b) in enumerate(zip(layer.weights, layer.biases)):
            acc: Optional[Node] = None
            for w, x in zip(row, current):
                wq = _quantize_const(w, mode)
                if is_fxp and not (fmt.min_raw <= wq <= fmt.max_raw):
                    raise LoweringError(
                        f"layer {li} neuron {ni}: weight {w} does not fit "
                        f"{fmt}")
                term = dag.mul(dag.const(sort, wq), x)
                acc = term if acc is None else dag.add(acc, term)
            acc = dag.add(acc, dag.const(sort, _quantize_const(b, mode)))
            u_name = f"u{li}_{ni}"
            named.append((u_name, acc))
            if box is not None and ("u", li, ni) in box:
                lo, hi = box[("u", li, ni)]
                if is_fxp:
                    lo_raw, hi_raw = _interval_to_raw(lo, hi, fmt)
                    lo_c, hi_c = raw_const(lo_raw), raw_const(hi_raw)
                else:
                    lo_c = dag.const(sort, _const_cast(lo, mode, down=True))
                    hi_c = dag.const(sort, _const_cast(hi, mode, down=False))
                assumes.append(dag.cmp("<=", lo_c, acc))
                assumes.append(dag.cmp("<=", acc, hi_c))

            y = _lower_activation(dag, acc, act, table, mode, sort, zero,
                                  guards.get(("u", li, ni)))
            if y is not acc:
                named.append((f"y{li}_{ni}", y))
            if (assume_post_activation and box is not None
                    and ("y", li, ni) in box):
                lo, hi = box[("y", li, ni)]
                if is_fxp:
                    lo_raw, hi_raw = _interval_to_raw(lo, hi, fmt)
                    lo_c, hi_c = raw_const(lo_raw), raw_const(hi_raw)
                else:
                    lo_c = dag.const(sort, _const_cast(lo, mode, down=True))
                    hi_c = dag.const(sort, _const_cast(hi, mode, down=False))
                assumes.append(dag.cmp("<=", lo_c, y))
                assumes.append(dag.cmp("<=", y, hi_c))
            nxt.append(y)
        current = nxt

    asserts = _lower_assertion(dag, prop.output_condition.root, current, mode,
                               sort)
    return SsaProgram(dag, mode, inputs, named, assumes, asserts)


def _const_cast(v: Fraction, mode: Mode, down: bool):
    if isinstance(mode, Float32Mode):
        import numpy as np
        f = float(np.float32(float(v)))
        # keep the bound sound after the float32 cast
        if down and Fraction(f) > v:
            f = float(np.nextafter(np.float32(f), np.float32(-np.inf)))
        if not down and Fraction(f) < v:
            f = float(np.nextafter(np.float32(f), np.float32(np.inf)))
        return f
    return Fraction(v)


def _lower_activation(dag: ExprDag, u: Node, act: Activation,
                      table, mode: Mode, sort: tuple, zero: Node,
                      guard: Optional[GuardFact]) -> Node:
    kind = act.kind
    if kind is ActivationKind.IDENTITY:
        return u
    if kind is ActivationKind.RELU:
        if guard is GuardFact.ALWAYS_ACTIVE:
            return u
        if guard is GuardFact.ALWAYS_INACTIVE:
            return zero
        return dag.ite(dag.cmp("<", u, zero), zero, u)
    if kind is ActivationKind.PIECEWISE_LINEAR:
        return _lower_pwl(dag, u, act, mode, sort)
    # tabled activation
    if isinstance(mode, FxpMode):
        assert isinstance(table, FxpLookupTable)
        return _lower_table_select(dag, u, table.output_raws,
                                   table.thresholds, sort, lambda r: r)
    assert isinstance(table, LookupTable)
    grid, outputs = _flatten_real_table(table)
    thresholds = _real_table_thresholds(grid)
    conv = (lambda v: _quantize_const(v, mode))
    return _lower_table_select(dag, u, outputs, thresholds, sort, conv)


def _flatten_real_table(table: LookupTable) -> tuple:
    grid: List[float] = []
    outputs: List[float] = []
    for piece in table.pieces:
        for u, v in zip(piece.inputs, piece.outputs):
            if grid and u <= grid[-1]:
                continue
            grid.append(u)
            outputs.append(v)
    return grid, outputs


def _real_table_thresholds(grid: Sequence[float]) -> list:
    """Nearest-point cut points with ties toward zero, as exact rationals."""
    cuts = []
    for a, b in zip(grid, grid[1:]):
        cuts.append((Fraction(a) + Fraction(b)) / 2)
    return cuts


def _lower_pwl(dag: ExprDag, u: Node, act: Activation, mode: Mode,
               sort: tuple) -> Node:
    """Cascade of ites selecting the active segment's affine form."""
    knots = act.knots

    def affine(x0, y0, x1, y1) -> Node:
        slope = (Fraction(y1) - Fraction(y0)) / (Fraction(x1) - Fraction(x0))
        off = Fraction(y0) - slope * Fraction(x0)
        if isinstance(mode, Float32Mode):
            import numpy as np
            s = dag.const(sort, float(np.float32(float(slope))))
            o = dag.const(sort, float(np.float32(float(off))))
        else:
            s = dag.const(sort, slope)
            o = dag.const(sort, off)
        return dag.add(dag.mul(s, u), o)

    expr = affine(*knots[-2], *knots[-1])
    for (x0, y0), (x1, y1) in reversed(list(zip(knots, knots[1:]))[:-1]):
        cut = dag.const(sort, _quantize_const(x1, mode))
        expr = dag.ite(dag.cmp("<=", u, cut), affine(x0, y0, x1, y1), expr)
    return expr


def _lower_assertion(dag: ExprDag, root, outputs: Sequence[Node],
                     mode: Mode, sort: tuple) -> list:
    """Split the top-level conjunction into individual assert roots."""

    def operand(side) -> Node:
        if isinstance(side, OutputRef):
            return outputs[side.index]
        if isinstance(mode, FxpMode):
            raise AssertionError("constants handled in comparison lowering")
        return dag.const(sort, _quantize_const(side, mode))

    def walk(node) -> Node:
        if isinstance(node, BoolOp):
            parts = tuple(walk(a) for a in node.args)
            if node.op == "and":
                return dag.and_(*parts)
            if node.op == "or":
                return dag.or_(*parts)
            return dag.not_(parts[0])
        return comparison(node)

    def comparison(node: Comparison) -> Node:
        lhs, rhs = node.lhs, node.rhs
        op = node.op
        if isinstance(mode, FxpMode):
            # fold real constants into exact raw thresholds
            if not isinstance(lhs, OutputRef) and isinstance(rhs, OutputRef):
                lhs, rhs, op = rhs, lhs, _flip(op)
            if isinstance(lhs, OutputRef) and not isinstance(rhs, OutputRef):
                new_op, raw = _cmp_const_threshold(op, rhs, mode.format)
                if new_op == "false":
                    return dag.false()
                return _cmp_node(dag, new_op, operand_fxp(lhs),
                                 dag.const(sort, raw))
            if not isinstance(lhs, OutputRef) and not isinstance(rhs, OutputRef):
                result = {"<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs,
                          ">=": lhs >= rhs, "=": lhs == rhs}[op]
                return dag.true() if result else dag.false()
            return _cmp_node(dag, op, operand_fxp(lhs), operand_fxp(rhs))
        return _cmp_node(dag, op, operand(lhs), operand(rhs))

    def operand_fxp(side: OutputRef) -> Node:
        return outputs[side.index]

    if isinstance(root, BoolOp) and root.op == "and":
        # an empty conjunction is vacuously true; keep one const assert so
        # the negated query is unsat rather than assertion-free
        return [walk(a) for a in root.args] or [dag.true()]
    return [walk(root)]


def _flip(op: str) -> str:
    return {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "="}[op]


def _cmp_node(dag: ExprDag, op: str, a: Node, b: Node) -> Node:
    return dag.cmp(op, a, b)


# ---------------------------------------------------------------------------
# Concrete node semantics (constant folding and the replay interpreter)


class NodeSemantics:
    """Evaluate operators on constant payloads for a given mode."""

    def __init__(self, mode: Mode):
        self.mode = mode

    def add(self, a, b):
        mode = self.mode
        if isinstance(mode, FxpMode):
            return fxp.wrap_raw(a + b, mode.format)
        if isinstance(mode, Float32Mode):
            import numpy as np
            return float(np.float32(np.float32(a) + np.float32(b)))
        return a + b

    def mul(self, a, b):
        mode = self.mode
        if isinstance(mode, FxpMode):
            return fxp.mult_raw(a, b, mode.format, mode.rounding)
        if isinstance(mode, Float32Mode):
            import numpy as np
            return float(np.float32(np.float32(a) * np.float32(b)))
        return a * b

    def cmp(self, op: str, a, b) -> bool:
        return {"<": a < b, "<=": a <= b, ">": a > b,
                ">=": a >= b, "=": a == b}[op]

    def zero(self):
        if isinstance(self.mode, FxpMode):
            return 0
        if isinstance(self.mode, Float32Mode):
            return 0.0
        return Fraction(0)

    def one(self):
        if isinstance(self.mode, FxpMode):
            return 1 << self.mode.format.l
        if isinstance(self.mode, Float32Mode):
            return 1.0
        return Fraction(1)


def evaluate(program: SsaProgram, input_values: Sequence) -> dict:
    """Replay the program on concrete inputs.

    `input_values` are payload-domain values in input order (raws for bv).
    Returns {"named": {name: value}, "assumes": [bool], "asserts": [bool]}.
    """
    sem = NodeSemantics(program.mode)
    env: Dict[int, object] = {}
    for (name, node), v in zip(program.inputs, input_values):
        env[id(node)] = v
    memo: Dict[int, object] = {}

    def ev(n: Node):
        key = id(n)
        if key in env:
            return env[key]
        if key in memo:
            return memo[key]
        k = n.kind
        if k == "const":
            v = n.payload
        elif k == "nondet":
            raise KeyError(f"no value for input {n.payload[0]}")
        elif k == "add":
            v = sem.add(ev(n.args[0]), ev(n.args[1]))
        elif k == "mul":
            v = sem.mul(ev(n.args[0]), ev(n.args[1]))
        elif k == "cmp":
            v = sem.cmp(n.payload, ev(n.args[0]), ev(n.args[1]))
        elif k == "ite":
            v = ev(n.args[1]) if ev(n.args[0]) else ev(n.args[2])
        elif k == "and":
            v = ev(n.args[0]) and ev(n.args[1])
        elif k == "or":
            v = ev(n.args[0]) or ev(n.args[1])
        elif k == "xor":
            v = ev(n.args[0]) != ev(n.args[1])
        elif k == "not":
            v = not ev(n.args[0])
        else:
            raise ValueError(f"unknown node kind {k}")
        memo[key] = v
        return v

    return {
        "named": {name: ev(node) for name, node in program.named},
        "assumes": [ev(a) for a in program.assumes],
        "asserts": [ev(a) for a in program.asserts],
    }


# ---------------------------------------------------------------------------
# Simplification


def simplify(program: SsaProgram,
             facts: Optional[IntervalBox] = None) -> SsaProgram:
    """Fixpoint of local boolean/ite rules plus constant folding.

    When an interval box is provided, comparisons over pre-activation
    variables with known bounds fold to constants (the static counterpart of
    the guard queries).  Assumes are never folded to true by those facts:
    the facts were derived from the same constraints, and dropping them
    would silently widen the solver's search space.
    """
    sem = NodeSemantics(program.mode)
    fact_map = _node_facts(program, facts)
    current = program
    for _ in range(20):  # fixpoint loop; local rules converge fast
        nxt, fact_map, changed = _simplify_pass(current, sem, fact_map)
        if not changed:
            return nxt
        current = nxt
    return current


def _node_facts(program: SsaProgram,
                facts: Optional[IntervalBox]) -> dict:
    """Map node ids to (lo, hi) payload-domain bounds from the interval box.

    Only pre-activation (u) variables contribute: their bounds are what the
    static analysis decides guards and assertion comparisons with.
    """
    out: Dict[int, tuple] = {}
    if facts is None:
        return out
    is_fxp = isinstance(program.mode, FxpMode)
    fmt = program.mode.format if is_fxp else None
    for name, node in program.named:
        vid = _name_to_vid(name)
        if vid is None or vid[0] != "u" or vid not in facts:
            continue
        lo, hi = facts[vid]
        if is_fxp:
            out[id(node)] = _interval_to_raw(lo, hi, fmt)
        else:
            out[id(node)] = (lo, hi)
    return out


def _name_to_vid(name: str) -> Optional[tuple]:
    if name.startswith("x_"):
        return ("x", int(name[2:]))
    for prefix in ("u", "y"):
        if name.startswith(prefix) and "_" in name[1:]:
            head, _, tail = name[1:].partition("_")
            try:
                return (prefix, int(head), int(tail))
            except ValueError:
                return None
    return None


def _simplify_pass(program: SsaProgram, sem: NodeSemantics,
                   fact_map: dict) -> tuple:
    dag = ExprDag()
    memo: Dict[int, Node] = {}
    new_facts: Dict[int, tuple] = {}
    changed = False

    def mk(n: Node) -> Node:
        nonlocal changed
        if id(n) in memo:
            return memo[id(n)]
        args = tuple(mk(a) for a in n.args)
        out = _rebuild(dag, sem, n, args, fact_map, new_facts)
        if (out.kind != n.kind or out.payload != n.payload
                or len(out.args) != len(args)
                or any(x is not y for x, y in zip(out.args, args))):
            changed = True
        memo[id(n)] = out
        if id(n) in fact_map:
            new_facts.setdefault(id(out), fact_map[id(n)])
        return out

    def mk_assume(n: Node) -> Node:
        # rebuild the top-level comparison without fact folding so the
        # constraint itself survives; children still simplify normally
        nonlocal changed
        if n.kind != "cmp":
            return mk(n)
        args = tuple(mk(a) for a in n.args)
        if all(a.kind == "const" for a in args):
            return dag.const(BOOL, sem.cmp(n.payload, *[a.payload
                                                        for a in args]))
        out = dag.node("cmp", BOOL, args, n.payload)
        if any(x is not y for x, y in zip(args, n.args)):
            changed = True
        return out

    new_inputs = [(name, mk(node)) for name, node in program.inputs]
    new_named = [(name, mk(node)) for name, node in program.named]
    new_assumes = []
    for a in program.assumes:
        out = mk_assume(a)
        if out.kind == "const" and out.payload is True:
            changed = True
            continue  # trivially satisfied, carries no information
        new_assumes.append(out)
    outs = [mk(a) for a in program.asserts]
    new_asserts = [o for o in outs
                   if not (o.kind == "const" and o.payload is True)]
    if len(new_asserts) < len(outs):
        if not (len(outs) == 1 and program.asserts[0].kind == "const"):
            changed = True
    if not new_asserts:  # everything discharged: keep one vacuous assert
        new_asserts = [dag.true()]
    new_program = SsaProgram(dag, program.mode, new_inputs, new_named,
                             new_assumes, new_asserts)
    return new_program, new_facts, changed


def _rebuild(dag: ExprDag, sem: NodeSemantics, n: Node, args: tuple,
             fact_map: dict, new_facts: dict) -> Node:
    k = n.kind
    if k in ("const", "nondet"):
        return dag.node(k, n.sort, (), n.payload)

    def const_of(a: Node):
        return a.payload if a.kind == "const" else None

    if k == "add":
        a, b = args
        if a.kind == "const" and b.kind == "const":
            return dag.const(n.sort, sem.add(a.payload, b.payload))
        if a.kind == "const" and a.payload == sem.zero():
            return b
        if b.kind == "const" and b.payload == sem.zero():
            return a
        return dag.node("add", n.sort, args)
    if k == "mul":
        a, b = args
        if a.kind == "const" and b.kind == "const":
            return dag.const(n.sort, sem.mul(a.payload, b.payload))
        for c, other in ((a, b), (b, a)):
            if c.kind == "const":
                if c.payload == sem.zero():
                    return dag.const(n.sort, sem.zero())
                if c.payload == sem.one():
                    return other
        return dag.node("mul", n.sort, args)
    if k == "cmp":
        a, b = args
        if a.kind == "const" and b.kind == "const":
            return dag.const(BOOL, sem.cmp(n.payload, a.payload, b.payload))
        folded = _fold_cmp_by_facts(dag, sem, n.payload, a, b, fact_map,
                                    new_facts)
        if folded is not None:
            return folded
        return dag.node("cmp", BOOL, args, n.payload)
    if k == "ite":
        c, t, e = args
        if c.kind == "const":
            return t if c.payload else e
        if t is e:
            return t
        if t.kind == "and" and t.args[0] is c:  # ite(f, f & a, b)
            return dag.node("ite", n.sort, (c, t.args[1], e))
        return dag.node("ite", n.sort, args)
    if k in ("and", "or"):
        a, b = args
        for x, other in ((a, b), (b, a)):
            if x.kind == "const":
                if k == "and":
                    return other if x.payload else dag.false()
                return dag.true() if x.payload else other
        if a is b:
            return a
        return dag.node(k, BOOL, args)
    if k == "xor":
        a, b = args
        for x, other in ((a, b), (b, a)):
            if x.kind == "const":
                return dag.not_(other) if x.payload else other
        return dag.node("xor", BOOL, args)
    if k == "not":
        (a,) = args
        if a.kind == "const":
            return dag.const(BOOL, not a.payload)
        if a.kind == "not":
            return a.args[0]
        return dag.node("not", BOOL, args)
    raise ValueError(f"unknown node kind {k}")


def _fold_cmp_by_facts(dag: ExprDag, sem: NodeSemantics, op: str,
                       a: Node, b: Node, fact_map: dict,
                       new_facts: dict) -> Optional[Node]:
    def bounds(n: Node):
        if n.kind == "const":
            return (n.payload, n.payload)
        return new_facts.get(id(n)) or fact_map.get(id(n))

    ba, bb = bounds(a), bounds(b)
    if ba is None or bb is None:
        return None
    alo, ahi = ba
    blo, bhi = bb
    if op in ("<", "<="):
        if sem.cmp(op, ahi, blo):
            return dag.true()
        if not sem.cmp(op, alo, bhi):
            return dag.false()
    elif op in (">", ">="):
        if sem.cmp(op, alo, bhi):
            return dag.true()
        if not sem.cmp(op, ahi, blo):
            return dag.false()
    elif op == "=":
        if alo == ahi == blo == bhi:
            return dag.true()
        if ahi < blo or bhi < alo:
            return dag.false()
    return None


# ---------------------------------------------------------------------------
# Slicing


def slice_program(program: SsaProgram,
                  keep_inputs: bool = True) -> SsaProgram:
    """Drop assignments outside the backward cone of the asserts.

    Input nondets and their region assumes are kept regardless so that a
    model always decodes to a full input vector.
    """
    cone: set = set()

    def mark(n: Node) -> None:
        stack = [n]
        while stack:
            m = stack.pop()
            if id(m) in cone:
                continue
            cone.add(id(m))
            stack.extend(m.args)

    for a in program.asserts:
        mark(a)
    if keep_inputs:
        for _, n in program.inputs:
            mark(n)

    # keep assumes anchored in the cone, growing it until stable
    kept_assumes: List[Node] = []
    pending = list(program.assumes)
    while True:
        still = []
        grew = False
        for a in pending:
            anchors = _anchor_nodes(a)
            if any(id(x) in cone for x in anchors):
                kept_assumes.append(a)
                mark(a)
                grew = True
            else:
                still.append(a)
        pending = still
        if not grew:
            break

    order = {id(a): i for i, a in enumerate(program.assumes)}
    kept_assumes.sort(key=lambda a: order[id(a)])
    named = [(name, n) for name, n in program.named if id(n) in cone]
    return SsaProgram(program.dag, program.mode, list(program.inputs), named,
                      kept_assumes, list(program.asserts))


def _anchor_nodes(n: Node) -> list:
    """The variables an assume constrains.

    For the common shape cmp(const, v) / cmp(v, const) the anchor is v
    alone; a bound on a dropped neuron must not resurrect it just because
    the neuron reads live inputs.  Other shapes anchor on every non-const
    immediate operand.
    """
    if n.kind == "cmp":
        subjects = [a for a in n.args if a.kind != "const"]
        if subjects:
            return subjects
    out = []
    stack = [n]
    seen = set()
    while stack:
        m = stack.pop()
        if id(m) in seen:
            continue
        seen.add(id(m))
        if m.kind != "const" and m is not n:
            out.append(m)
        stack.extend(m.args)
    return out


# ---------------------------------------------------------------------------
# Balancing


def balance(program: SsaProgram, reassociate_inexact: bool = False
            ) -> SsaProgram:
    """Rewrite maximal add chains into balanced binary trees.

    Wrap-around bit-vector addition is associative, so bv chains always
    balance; real/float chains only when `reassociate_inexact` is set since
    reassociation changes rounding behavior.
    """
    mode = program.mode
    legal = isinstance(mode, FxpMode) or (
        reassociate_inexact and isinstance(mode, (RealMode, Float32Mode)))
    if isinstance(mode, RealMode):
        legal = True  # exact rational addition is associative
    if isinstance(mode, Float32Mode) and not reassociate_inexact:
        legal = False
    if not legal:
        return program

    dag = ExprDag()
    memo: Dict[int, Node] = {}

    def leaves(n: Node) -> list:
        if n.kind == "add":
            return leaves(n.args[0]) + leaves(n.args[1])
        return [n]

    def mk(n: Node) -> Node:
        if id(n) in memo:
            return memo[id(n)]
        if n.kind == "add":
            terms = [mk(t) for t in leaves(n)]
            while len(terms) > 1:
                nxt = [dag.add(a, b) for a, b in zip(terms[::2], terms[1::2])]
                if len(terms) % 2:
                    nxt.append(terms[-1])
                terms = nxt
            out = terms[0]
        else:
            out = dag.node(n.kind, n.sort, tuple(mk(a) for a in n.args),
                           n.payload)
        memo[id(n)] = out
        return out

    return SsaProgram(
        dag, mode,
        [(name, mk(node)) for name, node in program.inputs],
        [(name, mk(node)) for name, node in program.named],
        [mk(a) for a in program.assumes],
        [mk(a) for a in program.asserts],
    )


# ---------------------------------------------------------------------------
# Debug output


def dump_ssa(program: SsaProgram) -> str:
    """Readable SSA listing in the classic nondet/assert style."""
    names = program.names_for()

    def ref(n: Node) -> str:
        if id(n) in names and n.kind not in ("const",):
            return names[id(n)]
        return expr(n)

    def expr(n: Node) -> str:
        k = n.kind
        if k == "const":
            return str(n.payload)
        if k == "nondet":
            return f"nondet_symbol(nondet{n.payload[1]})"
        if k == "add":
            return f"({ref(n.args[0])} + {ref(n.args[1])})"
        if k == "mul":
            return f"({ref(n.args[0])} * {ref(n.args[1])})"
        if k == "cmp":
            return f"({ref(n.args[0])} {n.payload} {ref(n.args[1])})"
        if k == "ite":
            return (f"({ref(n.args[0])} ? {ref(n.args[1])} : "
                    f"{ref(n.args[2])})")
        if k in ("and", "or"):
            glue = " && " if k == "and" else " || "
            return "(" + glue.join(ref(a) for a in n.args) + ")"
        if k == "xor":
            return f"({ref(n.args[0])} ^ {ref(n.args[1])})"
        if k == "not":
            return f"!{ref(n.args[0])}"
        return repr(n)

    lines = []
    for name, node in program.inputs:
        lines.append(f"{name} == {expr(node)}")
    for name, node in program.named:
        lines.append(f"{name} == {expr(node)}")
    for a in program.assumes:
        lines.append(f"(assume) {expr(a)}")
    for a in program.asserts:
        lines.append(f"(assert) {expr(a)}")
    return "\n".join(lines)


def to_dot(program: SsaProgram) -> str:
    names = program.names_for()
    lines = ["digraph ssa {"]
    ids: Dict[int, int] = {}

    def nid(n: Node) -> int:
        if id(n) not in ids:
            ids[id(n)] = len(ids)
        return ids[id(n)]

    seen = set()
    stack = program.roots()
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        label = names.get(id(n))
        if n.kind == "const":
            label = str(n.payload)
        elif label is None:
            label = n.kind if n.kind != "cmp" else n.payload
        lines.append(f'  n{nid(n)} [label="{label}"];')
        for a in n.args:
            lines.append(f"  n{nid(n)} -> n{nid(a)};")
            stack.append(a)
    lines.append("}")
    return "\n".join(lines)
