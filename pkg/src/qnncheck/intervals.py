"""Sound forward interval propagation through (quantized) networks.

All bounds are exact rationals, so there is no outward-rounding subtlety:
whatever the matching concrete executor computes lies inside the propagated
interval by construction.  In fixed-point mode every multiplication is
widened by one rounding step and any interval that leaves the representable
range marks the neuron as wrap-risk and widens to the full format range
(sound but deliberately coarse; the SMT stage finds real wrap behavior).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

from .fxp import FxpFormat, RoundingMode, fxp_from_real, min_integer_bits
from .lut import FxpLookupTable, LookupTable, lut_eval
from .modes import FxpMode, Mode, RealMode
from .network import Activation, ActivationKind, HyperRect, Network

VarId = Tuple  # ("x", i) | ("u", layer, i) | ("y", layer, i)
Interval = Tuple[Fraction, Fraction]


@dataclass
class IntervalBox:
    bounds: Dict[VarId, Interval] = field(default_factory=dict)
    wrap_risk: set = field(default_factory=set)  # ("u", layer, i) entries

    def __getitem__(self, key: VarId) -> Interval:
        return self.bounds[key]

    def __contains__(self, key: VarId) -> bool:
        return key in self.bounds

    def set(self, key: VarId, lo: Fraction, hi: Fraction) -> None:
        assert lo <= hi
        self.bounds[key] = (lo, hi)

    def to_json(self) -> str:
        doc = {
            "bounds": {"/".join(map(str, k)): [str(lo), str(hi)]
                       for k, (lo, hi) in self.bounds.items()},
            "wrap_risk": ["/".join(map(str, k)) for k in sorted(self.wrap_risk)],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "IntervalBox":
        doc = json.loads(text)
        box = cls()
        for key, (lo, hi) in doc["bounds"].items():
            parts = key.split("/")
            vid = (parts[0], *map(int, parts[1:]))
            box.bounds[vid] = (Fraction(lo), Fraction(hi))
        for key in doc["wrap_risk"]:
            parts = key.split("/")
            box.wrap_risk.add((parts[0], *map(int, parts[1:])))
        return box


class GuardFact(enum.Enum):
    ALWAYS_ACTIVE = "always_active"      # u >= 0: the ReLU is a pass-through
    ALWAYS_INACTIVE = "always_inactive"  # u < 0 always: output pinned to 0
    UNDECIDED = "undecided"


def _float_bounds_outward(f, lo: float, hi: float, steps: int = 4) -> Interval:
    """Monotone endpoint evaluation with a few ulps of outward slack to
    absorb libm rounding."""
    a, b = f(lo), f(hi)
    if a > b:
        a, b = b, a
    for _ in range(steps):
        a = math.nextafter(a, -math.inf)
        b = math.nextafter(b, math.inf)
    return (Fraction(a), Fraction(b))


def _pwl_bounds(act: Activation, lo: Fraction, hi: Fraction) -> Interval:
    pts = [float(lo), float(hi)]
    pts += [x for x, _ in act.knots if lo < Fraction(x) < hi]
    vals = [act(p) for p in pts]
    a, b = min(vals), max(vals)
    for _ in range(4):  # slack for float interpolation rounding
        a = math.nextafter(a, -math.inf)
        b = math.nextafter(b, math.inf)
    return (Fraction(a), Fraction(b))


def _real_activation_bounds(act: Activation, lo: Fraction, hi: Fraction,
                            table: Optional[LookupTable]) -> Interval:
    kind = act.kind
    if kind is ActivationKind.RELU:
        return (max(Fraction(0), lo), max(Fraction(0), hi))
    if kind is ActivationKind.IDENTITY:
        return (lo, hi)
    if kind is ActivationKind.PIECEWISE_LINEAR:
        return _pwl_bounds(act, lo, hi)
    if table is not None:
        # tables of monotone activations are monotone by construction
        a = Fraction(lut_eval(table, float(lo)))
        b = Fraction(lut_eval(table, float(hi)))
        return (min(a, b), max(a, b))
    return _float_bounds_outward(act, float(lo), float(hi))


def propagate(net: Network, region: HyperRect, mode: Mode = RealMode(),
              tables: Optional[dict] = None) -> IntervalBox:
    """Forward interval analysis; `tables` maps ActivationKind to the table
    actually used by the encoder/executor so bounds match what is encoded."""
    if region.dim != net.input_dim:
        raise ValueError(f"region has {region.dim} dimensions, network "
                         f"expects {net.input_dim}")
    tables = tables or {}
    if isinstance(mode, FxpMode):
        return _propagate_fxp(net, region, mode, tables)
    return _propagate_real(net, region, tables)


def _propagate_real(net: Network, region: HyperRect,
                    tables: dict) -> IntervalBox:
    box = IntervalBox()
    current = []
    for i, (lo, hi) in enumerate(region.bounds):
        iv = (Fraction(lo), Fraction(hi))
        box.set(("x", i), *iv)
        current.append(iv)
    for li, layer in enumerate(net.layers):
        table = tables.get(layer.activation.kind)
        if isinstance(table, FxpLookupTable):
            raise TypeError("real-mode propagation got a fixed-point table")
        nxt = []
        for ni, (row, b) in enumerate(zip(layer.weights, layer.biases)):
            lo = hi = Fraction(b)
            for w, (xlo, xhi) in zip(row, current):
                wf = Fraction(w)
                p1, p2 = wf * xlo, wf * xhi
                lo += min(p1, p2)
                hi += max(p1, p2)
            box.set(("u", li, ni), lo, hi)
            ylo, yhi = _real_activation_bounds(layer.activation, lo, hi, table)
            box.set(("y", li, ni), ylo, yhi)
            nxt.append((ylo, yhi))
        current = nxt
    return box


def _propagate_fxp(net: Network, region: HyperRect, mode: FxpMode,
                   tables: dict) -> IntervalBox:
    fmt, rounding = mode.format, mode.rounding
    lo_rep, hi_rep = fmt.min_value, fmt.max_value
    if rounding is RoundingMode.TRUNCATE:
        step = fmt.ulp
    else:
        step = fmt.ulp / 2
    box = IntervalBox()
    current = []
    for i, (lo, hi) in enumerate(region.bounds):
        qlo = fxp_from_real(lo, fmt, rounding).value
        qhi = fxp_from_real(hi, fmt, rounding).value
        if qlo > qhi:  # wrap during input quantization; fall back to full range
            qlo, qhi = lo_rep, hi_rep
        box.set(("x", i), qlo, qhi)
        current.append((qlo, qhi))
    for li, layer in enumerate(net.layers):
        table = tables.get(layer.activation.kind)
        nxt = []
        for ni, (row, b) in enumerate(zip(layer.weights, layer.biases)):
            vid = ("u", li, ni)
            wrapped = False
            acc = (Fraction(0), Fraction(0))

            def widen_check(lo: Fraction, hi: Fraction):
                nonlocal wrapped
                if lo < lo_rep or hi > hi_rep:
                    wrapped = True
                return (lo, hi)

            for w, (xlo, xhi) in zip(row, current):
                wq = fxp_from_real(w, fmt, rounding)
                # integral weights multiply lattice points exactly; only
                # fractional weights can trigger the product rounding step
                w_step = 0 if wq.raw % (1 << fmt.l) == 0 else step
                p1, p2 = wq.value * xlo, wq.value * xhi
                plo, phi = min(p1, p2) - w_step, max(p1, p2) + w_step
                widen_check(plo, phi)
                acc = widen_check(acc[0] + plo, acc[1] + phi)
            bq = fxp_from_real(b, fmt, rounding).value
            acc = widen_check(acc[0] + bq, acc[1] + bq)
            if wrapped:
                box.wrap_risk.add(vid)
                acc = (lo_rep, hi_rep)
            box.set(vid, *acc)
            ylo, yhi = _fxp_activation_bounds(layer.activation, acc, fmt, table)
            box.set(("y", li, ni), ylo, yhi)
            nxt.append((ylo, yhi))
        current = nxt
    return box


def _fxp_activation_bounds(act: Activation, iv: Interval, fmt: FxpFormat,
                           table: Optional[FxpLookupTable]) -> Interval:
    lo, hi = iv
    kind = act.kind
    if kind is ActivationKind.RELU:
        return (max(Fraction(0), lo), max(Fraction(0), hi))
    if kind is ActivationKind.IDENTITY:
        return (lo, hi)
    if table is None:
        raise ValueError(f"no fixed-point table for activation {kind.value}")
    # endpoints may sit off the 2**-l lattice; round outward to raws first
    lo_raw = math.floor(lo * (1 << fmt.l))
    hi_raw = math.ceil(hi * (1 << fmt.l))
    lo_raw = max(fmt.min_raw, min(fmt.max_raw, lo_raw))
    hi_raw = max(fmt.min_raw, min(fmt.max_raw, hi_raw))
    a = Fraction(table.eval_raw(lo_raw), 1 << fmt.l)
    b = Fraction(table.eval_raw(hi_raw), 1 << fmt.l)
    return (min(a, b), max(a, b))


def decidable_guards(box: IntervalBox, net: Network) -> list:
    """Classify every ReLU guard (u < 0) by the sign of its interval."""
    facts = []
    for li, layer in enumerate(net.layers):
        if layer.activation.kind is not ActivationKind.RELU:
            continue
        for ni in range(layer.size):
            vid = ("u", li, ni)
            lo, hi = box[vid]
            if hi < 0:
                fact = GuardFact.ALWAYS_INACTIVE
            elif lo >= 0:
                fact = GuardFact.ALWAYS_ACTIVE
            else:
                fact = GuardFact.UNDECIDED
            facts.append((vid, fact))
    return facts


def p1_worst_case_bound(layer_weights: Sequence[float], bias: float,
                        region: HyperRect) -> Fraction:
    """First-layer worst-case |u| bound from weight magnitudes; used only as
    a cross-check upper bound on the interval result."""
    total = abs(Fraction(bias))
    for w, (lo, hi) in zip(layer_weights, region.bounds):
        total += abs(Fraction(w)) * max(abs(Fraction(lo)), abs(Fraction(hi)))
    return total


@dataclass
class RangeReport:
    global_max_abs: Fraction
    per_layer_max_abs: list
    recommended_k: int
    wrap_risk_neurons: list

    def render(self) -> str:
        lines = [
            f"max |u| over all neurons: {float(self.global_max_abs):.6g}",
            f"recommended integer bits (sign included): {self.recommended_k}",
        ]
        for li, m in enumerate(self.per_layer_max_abs):
            lines.append(f"  layer {li}: max |u| = {float(m):.6g}")
        if self.wrap_risk_neurons:
            lines.append("wrap-risk neurons: " + ", ".join(
                "/".join(map(str, v)) for v in self.wrap_risk_neurons))
        return "\n".join(lines)


def range_report(net: Network, region: HyperRect,
                 candidate: Optional[FxpMode] = None,
                 tables: Optional[dict] = None) -> RangeReport:
    box = propagate(net, region, RealMode(), tables=tables)
    per_layer = []
    global_max = Fraction(0)
    for li, layer in enumerate(net.layers):
        layer_max = Fraction(0)
        for ni in range(layer.size):
            lo, hi = box[("u", li, ni)]
            layer_max = max(layer_max, abs(lo), abs(hi))
        per_layer.append(layer_max)
        global_max = max(global_max, layer_max)
    wrap_risk = []
    if candidate is not None:
        fxp_tables = None
        if tables:
            from .lut import lut_to_fxp
            fxp_tables = {k: lut_to_fxp(t, candidate.format, candidate.rounding)
                          for k, t in tables.items()}
        fxp_box = propagate(net, region, candidate, tables=fxp_tables)
        wrap_risk = sorted(fxp_box.wrap_risk)
    return RangeReport(global_max, per_layer, min_integer_bits(global_max),
                       wrap_risk)
