"""Arithmetic modes shared by the analyzer, encoder and executor."""

from __future__ import annotations

from dataclasses import dataclass

from .fxp import FxpFormat, RoundingMode


@dataclass(frozen=True)
class RealMode:
    """Exact real weights; concrete evaluation in double precision."""

    def __str__(self) -> str:
        return "real"


@dataclass(frozen=True)
class Float32Mode:
    """IEEE binary32 arithmetic with round-nearest-even."""

    def __str__(self) -> str:
        return "float32"


@dataclass(frozen=True)
class FxpMode:
    format: FxpFormat
    rounding: RoundingMode = RoundingMode.TRUNCATE

    def __str__(self) -> str:
        return f"{self.format}/{self.rounding.value}"


Mode = RealMode | Float32Mode | FxpMode

REAL = RealMode()
FLOAT32 = Float32Mode()
