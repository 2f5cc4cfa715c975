"""Fixed-point format, quantization, and arithmetic against rational oracles."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnncheck.fxp import (FxpFormat, FxpValue, RoundingMode, WrapCounter,
                          fxp_add, fxp_from_real, fxp_mult, min_integer_bits,
                          mult_raw, wrap_raw)


def oracle_round(scaled: Fraction, mode: RoundingMode) -> int:
    """Independent rounding oracle on exact rationals."""
    if mode is RoundingMode.TRUNCATE:
        return math.floor(scaled)
    lo = math.floor(scaled)
    hi = lo + 1
    dl, dh = scaled - lo, hi - scaled
    if dl < dh:
        return lo
    if dh < dl:
        return hi
    return lo if abs(lo) <= abs(hi) else hi  # tie toward zero


def oracle_wrap(raw: int, fmt: FxpFormat) -> int:
    span = 1 << fmt.width
    r = raw % span
    return r - span if r >= span // 2 else r


class TestFormat:
    def test_bit_rendering(self):
        assert fxp_from_real(3.25, FxpFormat(5, 3)).bits() == "00011|010"

    def test_parse_roundtrip(self):
        fmt = FxpFormat.parse("Q4.6")
        assert (fmt.k, fmt.l) == (4, 6)
        assert str(fmt) == "Q4.6"

    @pytest.mark.parametrize("text", ["4.6", "Q4", "Qx.y", "Q-1.2", ""])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            FxpFormat.parse(text)

    def test_width_limit(self):
        with pytest.raises(ValueError):
            FxpFormat(33, 32)
        with pytest.raises(ValueError):
            FxpFormat(0, 4)

    def test_ranges(self):
        fmt = FxpFormat(4, 4)
        assert fmt.min_raw == -128 and fmt.max_raw == 127
        assert fmt.min_value == Fraction(-8)
        assert fmt.max_value == Fraction(127, 16)
        assert fmt.ulp == Fraction(1, 16)


class TestQuantization:
    @pytest.mark.parametrize("x,expected_raw", [
        (0.749, 47),   # floor(0.749 * 64)
        (0.498, 31),
        (0.0, 0),
        (-0.25, -16),
    ])
    def test_truncate_q46(self, x, expected_raw):
        assert fxp_from_real(x, FxpFormat(4, 6)).raw == expected_raw

    def test_truncation_is_floor_for_negatives(self):
        # -0.3 * 64 = -19.2; floor is -20, not -19
        assert fxp_from_real(-0.3, FxpFormat(4, 6)).raw == -20

    def test_nearest_ties_toward_zero(self):
        fmt = FxpFormat(4, 1)  # steps of 0.5
        assert fxp_from_real(0.25, fmt, RoundingMode.NEAREST).raw == 0
        assert fxp_from_real(-0.25, fmt, RoundingMode.NEAREST).raw == 0
        assert fxp_from_real(0.75, fmt, RoundingMode.NEAREST).raw == 1
        assert fxp_from_real(-0.75, fmt, RoundingMode.NEAREST).raw == -1

    def test_out_of_range_wraps_and_counts(self):
        fmt = FxpFormat(4, 0)
        counter = WrapCounter()
        v = fxp_from_real(9, fmt, counter=counter)
        assert v.raw == -7
        assert counter.count == 1

    @given(st.integers(-128, 127))
    def test_lattice_points_are_exact(self, raw):
        fmt = FxpFormat(4, 4)
        x = Fraction(raw, 16)
        for mode in RoundingMode:
            assert fxp_from_real(x, fmt, mode).raw == raw


class TestArithmeticOracle:
    def test_exhaustive_q44_add_mul(self):
        """All 65,536 raw pairs in <4,4> agree with the rational+wrap oracle."""
        fmt = FxpFormat(4, 4)
        mismatches = 0
        for a in range(fmt.min_raw, fmt.max_raw + 1):
            for b in range(fmt.min_raw, fmt.max_raw + 1):
                if wrap_raw(a + b, fmt) != oracle_wrap(a + b, fmt):
                    mismatches += 1
                got = mult_raw(a, b, fmt, RoundingMode.TRUNCATE)
                want = oracle_wrap(
                    oracle_round(Fraction(a * b, 16), RoundingMode.TRUNCATE),
                    fmt)
                if got != want:
                    mismatches += 1
        assert mismatches == 0

    @given(st.integers(-2048, 2047), st.integers(-2048, 2047),
           st.sampled_from(list(RoundingMode)))
    @settings(max_examples=300)
    def test_mult_matches_oracle(self, a, b, mode):
        fmt = FxpFormat(6, 6)
        want = oracle_wrap(oracle_round(Fraction(a * b, 64), mode), fmt)
        assert mult_raw(a, b, fmt, mode) == want

    def test_value_level_ops(self):
        fmt = FxpFormat(5, 3)
        x = fxp_from_real(3.25, fmt)
        y = fxp_from_real(-1.5, fmt)
        assert float(fxp_add(x, y)) == 1.75
        assert float(fxp_mult(x, y)) == -4.875

    def test_mixed_format_rejected(self):
        with pytest.raises(ValueError):
            fxp_add(FxpValue(1, FxpFormat(4, 4)), FxpValue(1, FxpFormat(5, 3)))

    @given(st.integers(-10**9, 10**9))
    def test_wrap_idempotent_and_in_range(self, raw):
        fmt = FxpFormat(5, 3)
        w = wrap_raw(raw, fmt)
        assert fmt.min_raw <= w <= fmt.max_raw
        assert wrap_raw(w, fmt) == w
        assert (w - raw) % (1 << fmt.width) == 0


class TestMinIntegerBits:
    @pytest.mark.parametrize("max_abs,k", [
        (23.3, 6), (53.9, 7), (72142560.0, 28),
        (0, 1), (0.4, 1), (1.0, 2), (7.9, 4), (8.0, 5),
    ])
    def test_values(self, max_abs, k):
        assert min_integer_bits(max_abs) == k

    @given(st.fractions(min_value=0, max_value=10**9))
    @settings(max_examples=200)
    def test_minimality(self, m):
        k = min_integer_bits(m)
        assert m < (1 << (k - 1))
        assert k == 1 or m >= (1 << (k - 2))
