"""Error-bounded lookup-table discretization of non-linear activations.

An activation is split into pieces, each with a Lipschitz bound.  Finite
pieces get a uniform sample grid sized so that nearest-point snapping stays
within the error budget epsilon; infinite tails collapse to a constant.
The sample-count rule is N >= 1 + L*lambda/epsilon for a piece of length L.

Snapping uses nearest-grid-point with ties toward zero.  Nearest-point
halves the worst-case error of floor-snapping, so the realized error is
at most L*lambda/(2(N-1)) <= epsilon/2.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .fxp import FxpFormat, RoundingMode, WrapCounter, fxp_from_real
from .network import Activation, ActivationKind

INF = math.inf


@dataclass(frozen=True)
class ConstantAt:
    """Tail approximator: every input maps to the activation at `point`."""

    point: float


@dataclass(frozen=True)
class UniformGrid:
    pass


@dataclass(frozen=True)
class Piece:
    lo: float  # may be -inf
    hi: float  # may be +inf
    lipschitz: float
    approximator: Union[ConstantAt, UniformGrid]

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)


@dataclass(frozen=True)
class PiecewiseSpec:
    activation: Activation
    pieces: tuple

    def __post_init__(self) -> None:
        for a, b in zip(self.pieces, self.pieces[1:]):
            if b.lo < a.hi:
                raise ValueError("pieces must be disjoint and ordered")
        for p in self.pieces:
            if p.lipschitz < 0:
                raise ValueError("Lipschitz bound must be >= 0")


def default_spec(activation: Activation, cutoff: float) -> PiecewiseSpec:
    """Three-piece spec: constant tails beyond +-cutoff, uniform grid between.

    The middle Lipschitz bound is the global one: 0.25 for the logistic
    sigmoid (max derivative at 0), 1.0 for tanh.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    kind = activation.kind
    if kind is ActivationKind.SIGMOID:
        lam = 0.25
    elif kind is ActivationKind.TANH:
        lam = 1.0
    else:
        raise ValueError(f"{kind.value}: exact activation, no table")
    pieces = (
        Piece(-INF, -cutoff, 0.0, ConstantAt(-cutoff)),
        Piece(-cutoff, cutoff, lam, UniformGrid()),
        Piece(cutoff, INF, 0.0, ConstantAt(cutoff)),
    )
    return PiecewiseSpec(activation, pieces)


def required_samples(length: float, lipschitz: float, epsilon: float) -> int:
    """ceil(1 + L*lambda/epsilon); 1 for constant (lambda == 0) pieces."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if length < 0 or lipschitz < 0:
        raise ValueError("length and lipschitz must be >= 0")
    if length == 0 or lipschitz == 0:
        return 1
    # exact rational arithmetic so the ceiling never double-rounds
    from fractions import Fraction
    q = Fraction(length) * Fraction(lipschitz) / Fraction(epsilon)
    return math.ceil(1 + q)


@dataclass(frozen=True)
class TablePiece:
    lo: float
    hi: float
    inputs: tuple   # sorted grid abscissae; a single point for tails
    outputs: tuple  # exact activation at the grid points


@dataclass(frozen=True)
class LookupTable:
    pieces: tuple
    epsilon: float
    source: Activation

    def domain_bounds(self) -> tuple:
        finite = [p for p in self.pieces if math.isfinite(p.lo)]
        los = [p.lo for p in self.pieces if math.isfinite(p.lo)]
        his = [p.hi for p in self.pieces if math.isfinite(p.hi)]
        return (min(los) if los else -INF, max(his) if his else INF)

    def to_csv(self) -> str:
        rows = ["input,output"]
        for piece in self.pieces:
            for u, v in zip(piece.inputs, piece.outputs):
                rows.append(f"{u!r},{v!r}")
        return "\n".join(rows) + "\n"


def build_table(spec: PiecewiseSpec, epsilon: float) -> LookupTable:
    """Sample each piece per the error budget; tails become constants."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    act = spec.activation
    pieces = []
    for piece in spec.pieces:
        if isinstance(piece.approximator, ConstantAt):
            point = piece.approximator.point
            pieces.append(TablePiece(piece.lo, piece.hi, (point,),
                                     (act(point),)))
            continue
        if not piece.is_finite:
            raise ValueError("cannot bound a grid over an infinite piece "
                             "with positive Lipschitz constant")
        n = required_samples(piece.length, piece.lipschitz, epsilon)
        if n == 1 or piece.length == 0:
            grid = (piece.lo,)
        else:
            step = piece.length / (n - 1)
            grid = tuple(piece.lo + i * step for i in range(n - 1)) + (piece.hi,)
        pieces.append(TablePiece(piece.lo, piece.hi, grid,
                                 tuple(act(u) for u in grid)))
    return LookupTable(tuple(pieces), epsilon, act)


def _snap_nearest(inputs: Sequence[float], u: float) -> int:
    """Index of the grid point nearest to u; ties pick the one closer to 0."""
    j = bisect.bisect_left(inputs, u)
    if j == 0:
        return 0
    if j == len(inputs):
        return len(inputs) - 1
    lo, hi = inputs[j - 1], inputs[j]
    dl, dh = u - lo, hi - u
    if dl < dh:
        return j - 1
    if dh < dl:
        return j
    return j - 1 if abs(lo) <= abs(hi) else j


def lut_eval(table: LookupTable, u: float) -> float:
    """Locate the piece, snap to the nearest grid point, return its output."""
    pieces = table.pieces
    chosen = pieces[-1]
    for piece in pieces:
        if u < piece.hi:
            chosen = piece
            break
    if len(chosen.inputs) == 1:
        return chosen.outputs[0]
    return chosen.outputs[_snap_nearest(chosen.inputs, u)]


# ---------------------------------------------------------------------------
# Fixed-point tables

# A fixed-point table is a sorted list of (raw input, raw output) pairs plus
# raw tail constants.  Selection thresholds are precomputed so that the
# concrete executor and the SMT encoding share one bit-exact semantics:
# entry i is selected iff threshold[i-1] <= u_raw < threshold[i].


@dataclass(frozen=True)
class FxpLookupTable:
    format: FxpFormat
    grid_raws: tuple       # sorted, deduplicated raw inputs
    output_raws: tuple     # same length
    thresholds: tuple      # len == len(grid_raws) - 1; raw cut points
    epsilon: float

    def eval_raw(self, u_raw: int) -> int:
        idx = bisect.bisect_right(self.thresholds, u_raw)
        return self.output_raws[idx]


def lut_to_fxp(table: LookupTable, fmt: FxpFormat,
               mode: RoundingMode = RoundingMode.TRUNCATE,
               counter: Optional[WrapCounter] = None) -> FxpLookupTable:
    """Snap the grid to the format lattice and quantize the outputs.

    When epsilon is finer than the format step the table no longer dominates
    the overall error; warn per the budget rule epsilon >> 2**-l.
    """
    if table.epsilon < float(fmt.ulp):
        warnings.warn(
            f"table epsilon {table.epsilon} is below the quantization step "
            f"{float(fmt.ulp)} of {fmt}; the format error dominates",
            stacklevel=2)
    lo, hi = table.domain_bounds()
    if math.isfinite(lo) and math.isfinite(hi):
        if lo < float(fmt.min_value) or hi > float(fmt.max_value):
            if counter is not None:
                counter.record("lut_range", 0)
    entries = []
    seen = set()
    for piece in table.pieces:
        for u, v in zip(piece.inputs, piece.outputs):
            u_raw = fxp_from_real(u, fmt, mode, counter).raw
            if u_raw in seen:
                continue
            seen.add(u_raw)
            v_raw = fxp_from_real(v, fmt, mode, counter).raw
            entries.append((u_raw, v_raw))
    entries.sort()
    grid = tuple(e[0] for e in entries)
    outs = tuple(e[1] for e in entries)
    thresholds = []
    for a, b in zip(grid, grid[1:]):
        total = a + b
        if total % 2:  # no representable midpoint; usual nearest split
            cut = total // 2 + 1
        elif abs(a) <= abs(b):  # tie raw exists and goes toward zero
            cut = total // 2 + 1
        else:
            cut = total // 2
        thresholds.append(cut)
    return FxpLookupTable(fmt, grid, outs, tuple(thresholds), table.epsilon)


def identity_fxp_table(fmt: FxpFormat, raws: Sequence[int]) -> FxpLookupTable:
    """Pass-through table over an explicit raw lattice (testing aid)."""
    grid = tuple(sorted(set(raws)))
    thresholds = []
    for a, b in zip(grid, grid[1:]):
        total = a + b
        if total % 2 or abs(a) <= abs(b):
            thresholds.append(total // 2 + 1)
        else:
            thresholds.append(total // 2)
    return FxpLookupTable(fmt, grid, grid, tuple(thresholds), 0.0)


def grid_step_spec(activation: Activation, cutoff: float,
                   step: float) -> tuple:
    """Alternative parameterization: a fixed grid step over [-cutoff, cutoff].

    Returns (spec, epsilon_equivalent) where the epsilon is the budget the
    step corresponds to under the piece's Lipschitz bound.  The two
    parameterizations do not coincide in general; this one mirrors
    resolution-style tables (e.g. step 0.1 / 0.01 / 0.001).
    """
    spec = default_spec(activation, cutoff)
    mid = spec.pieces[1]
    eps = step * mid.lipschitz
    return spec, eps
