"""Two's-complement fixed-point formats, values and arithmetic.

A format Q<k>.<l> has k integer bits (sign included) and l fractional bits.
The stored raw integer is a signed (k+l)-bit two's-complement number and the
represented value is raw * 2**-l.  All arithmetic wraps modulo 2**(k+l); there
is no saturation mode.  Wrap events can be recorded through an optional
:class:`WrapCounter` so callers can surface potential-overflow diagnostics.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

Real = Union[int, float, Fraction]

_FMT_RE = re.compile(r"^Q(\d+)\.(\d+)$")


class RoundingMode(enum.Enum):
    # floor(x * 2**l); the default arithmetic model (cheapest in hardware)
    TRUNCATE = "trunc"
    # round to nearest lattice point, ties toward zero
    NEAREST = "nearest"


@dataclass(frozen=True)
class FxpFormat:
    """Fixed-point format <k, l>: k sign-and-integer bits, l fractional bits."""

    k: int
    l: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("need at least the sign bit (k >= 1)")
        if self.l < 0:
            raise ValueError("fractional bit count must be >= 0")
        if self.k + self.l > 64:
            raise ValueError("total width limited to 64 bits")

    @property
    def width(self) -> int:
        return self.k + self.l

    @property
    def min_raw(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def ulp(self) -> Fraction:
        return Fraction(1, 1 << self.l)

    @property
    def min_value(self) -> Fraction:
        return Fraction(self.min_raw, 1 << self.l)

    @property
    def max_value(self) -> Fraction:
        return Fraction(self.max_raw, 1 << self.l)

    @classmethod
    def parse(cls, text: str) -> "FxpFormat":
        """Parse the CLI notation, e.g. "Q4.6"."""
        m = _FMT_RE.match(text.strip())
        if m is None:
            raise ValueError(f"bad fixed-point format {text!r}, expected Q<k>.<l>")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"Q{self.k}.{self.l}"


@dataclass
class WrapCounter:
    """Diagnostic counter for two's-complement wrap-around events."""

    count: int = 0
    events: list = field(default_factory=list)

    def record(self, op: str, raw_before_wrap: int) -> None:
        self.count += 1
        self.events.append((op, raw_before_wrap))


def wrap_raw(raw: int, fmt: FxpFormat, counter: Optional[WrapCounter] = None,
             op: str = "?") -> int:
    """Reduce an unbounded integer into the signed (k+l)-bit range."""
    modulus = 1 << fmt.width
    wrapped = ((raw - fmt.min_raw) % modulus) + fmt.min_raw
    if wrapped != raw and counter is not None:
        counter.record(op, raw)
    return wrapped


@dataclass(frozen=True)
class FxpValue:
    raw: int
    format: FxpFormat

    def __post_init__(self) -> None:
        if not (self.format.min_raw <= self.raw <= self.format.max_raw):
            raise ValueError(f"raw {self.raw} does not fit {self.format}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.format.l)

    def __float__(self) -> float:
        return self.raw / (1 << self.format.l)

    def bits(self) -> str:
        """Binary rendering with an I|F separator, e.g. "00011|010"."""
        fmt = self.format
        unsigned = self.raw % (1 << fmt.width)
        text = format(unsigned, f"0{fmt.width}b")
        if fmt.l == 0:
            return text
        return text[: fmt.k] + "|" + text[fmt.k:]

    def __str__(self) -> str:
        return f"{float(self)} ({self.bits()})"


def _round_scaled(scaled: Fraction, mode: RoundingMode) -> int:
    """Round an exact scaled rational to an integer lattice index."""
    if mode is RoundingMode.TRUNCATE:
        num, den = scaled.numerator, scaled.denominator
        return num // den
    # nearest, ties toward zero: round the magnitude half-down
    sign = -1 if scaled < 0 else 1
    mag = abs(scaled)
    floor_mag = mag.numerator // mag.denominator
    frac = mag - floor_mag
    if frac > Fraction(1, 2):
        floor_mag += 1
    return sign * floor_mag


def fxp_from_real(x: Real, fmt: FxpFormat,
                  mode: RoundingMode = RoundingMode.TRUNCATE,
                  counter: Optional[WrapCounter] = None) -> FxpValue:
    """Quantize a real number; out-of-range values wrap around."""
    scaled = Fraction(x) * (1 << fmt.l)
    raw = _round_scaled(scaled, mode)
    return FxpValue(wrap_raw(raw, fmt, counter, "from_real"), fmt)


def fxp_add(a: FxpValue, b: FxpValue,
            counter: Optional[WrapCounter] = None) -> FxpValue:
    if a.format != b.format:
        raise ValueError("operand formats differ")
    return FxpValue(wrap_raw(a.raw + b.raw, a.format, counter, "add"), a.format)


def mult_raw(a_raw: int, b_raw: int, fmt: FxpFormat,
             mode: RoundingMode = RoundingMode.TRUNCATE,
             counter: Optional[WrapCounter] = None) -> int:
    """Raw-level multiply: exact double-width product, shift by l, wrap."""
    product = a_raw * b_raw  # exact, scale 2**-2l
    raw = _round_scaled(Fraction(product, 1 << fmt.l), mode)
    return wrap_raw(raw, fmt, counter, "mult")


def fxp_mult(a: FxpValue, b: FxpValue,
             mode: RoundingMode = RoundingMode.TRUNCATE,
             counter: Optional[WrapCounter] = None) -> FxpValue:
    if a.format != b.format:
        raise ValueError("operand formats differ")
    return FxpValue(mult_raw(a.raw, b.raw, a.format, mode, counter), a.format)


def min_integer_bits(max_abs: Real) -> int:
    """Smallest k (sign included) with max_abs < 2**(k-1)."""
    if max_abs < 0:
        raise ValueError("max_abs must be non-negative")
    max_abs = Fraction(max_abs)
    k = 1
    while max_abs >= (1 << (k - 1)):
        k += 1
    return k
