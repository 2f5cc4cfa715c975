"""Interval propagation: reference values, guard facts, soundness."""

import random
from fractions import Fraction

import pytest

from qnncheck.executor import (forward_fxp, forward_real_exact,
                               quantize_network)
from qnncheck.fxp import FxpFormat, RoundingMode
from qnncheck.intervals import (GuardFact, IntervalBox, decidable_guards,
                                p1_worst_case_bound, propagate, range_report)
from qnncheck.lut import build_table, default_spec, lut_to_fxp
from qnncheck.modes import FxpMode, RealMode
from qnncheck.network import (RELU, SIGMOID, ActivationKind, HyperRect,
                              make_network)
from qnncheck.zoo import boolean_toy_net, random_net, two_input_relu_net

UNIT = HyperRect(((0.0, 1.0), (0.0, 1.0)))


class TestBooleanToyReference:
    """a = 2x - 3y, b = x + 4y, f = 3x + y over the unit box."""

    @pytest.fixture()
    def box(self):
        return propagate(boolean_toy_net(), UNIT, FxpMode(FxpFormat(8, 0)))

    def test_pre_activation_bounds(self, box):
        assert box[("u", 0, 0)] == (Fraction(-3), Fraction(2))
        assert box[("u", 0, 1)] == (Fraction(0), Fraction(5))
        assert box[("u", 0, 2)] == (Fraction(0), Fraction(4))

    def test_guard_classification(self, box):
        facts = dict(decidable_guards(box, boolean_toy_net()))
        assert facts[("u", 0, 0)] is GuardFact.UNDECIDED
        assert facts[("u", 0, 1)] is GuardFact.ALWAYS_ACTIVE
        assert facts[("u", 0, 2)] is GuardFact.ALWAYS_ACTIVE

    def test_real_mode_same_bounds(self):
        box = propagate(boolean_toy_net(), UNIT, RealMode())
        assert box[("u", 0, 0)] == (Fraction(-3), Fraction(2))
        assert box[("y", 0, 0)] == (Fraction(0), Fraction(2))


class TestAlwaysInactive:
    def test_negative_neuron_pinned(self):
        net = make_network([[[-1.0, -1.0]]], [[-0.5]], [RELU])
        box = propagate(net, UNIT, RealMode())
        facts = dict(decidable_guards(box, net))
        assert facts[("u", 0, 0)] is GuardFact.ALWAYS_INACTIVE
        assert box[("y", 0, 0)] == (Fraction(0), Fraction(0))


class TestFxpWidening:
    def test_fractional_weight_widens_by_step(self):
        fmt = FxpFormat(4, 4)
        net = make_network([[[0.3]]], [[0.0]], [RELU])
        region = HyperRect(((0.0, 1.0),))
        box = propagate(net, region, FxpMode(fmt))
        lo, hi = box[("u", 0, 0)]
        # quantized weight 4/16; product of lattice points may round
        assert lo == Fraction(0) - Fraction(1, 16)
        assert hi == Fraction(4, 16) + Fraction(1, 16)

    def test_nearest_widens_by_half_step(self):
        fmt = FxpFormat(4, 4)
        net = make_network([[[0.3]]], [[0.0]], [RELU])
        region = HyperRect(((0.0, 1.0),))
        box = propagate(net, region, FxpMode(fmt, RoundingMode.NEAREST))
        lo, hi = box[("u", 0, 0)]
        assert hi - Fraction(5, 16) == Fraction(1, 32)

    def test_wrap_risk_flags_and_widens(self):
        fmt = FxpFormat(3, 2)  # range [-4, 3.75]
        net = make_network([[[3.0, 3.0]]], [[0.0]], [RELU])
        box = propagate(net, UNIT, FxpMode(fmt))
        assert ("u", 0, 0) in box.wrap_risk
        assert box[("u", 0, 0)] == (fmt.min_value, fmt.max_value)


class TestSoundnessSampling:
    def _region_samples(self, region, n, seed):
        rng = random.Random(seed)
        return [[rng.uniform(float(lo), float(hi))
                 for lo, hi in region.bounds] for _ in range(n)]

    def test_real_mode_containment(self):
        net = random_net(5, [3, 6, 4, 2])
        region = HyperRect.around([0.1, -0.2, 0.4], 0.5)
        box = propagate(net, region, RealMode())
        for x in self._region_samples(region, 300, 99):
            xe = [Fraction(v) for v in x]
            tr = forward_real_exact(net, xe)
            for li in range(len(net.layers)):
                for ni, (u, y) in enumerate(zip(tr.pre_activations[li],
                                                tr.post_activations[li])):
                    lo, hi = box[("u", li, ni)]
                    assert lo <= u <= hi, ("u", li, ni)
                    lo, hi = box[("y", li, ni)]
                    assert lo <= y <= hi, ("y", li, ni)

    def test_fxp_mode_containment_with_tables(self):
        fmt = FxpFormat(6, 8)
        mode = FxpMode(fmt)
        net = random_net(7, [3, 5, 3], hidden=SIGMOID)
        table = lut_to_fxp(build_table(default_spec(SIGMOID, 4.0), 0.05), fmt)
        tables = {ActivationKind.SIGMOID: table}
        region = HyperRect.around([0.0, 0.3, -0.3], 0.4)
        box = propagate(net, region, mode, tables=tables)
        qnet = quantize_network(net, mode, tables)
        rng = random.Random(11)
        scale = 1 << fmt.l
        for _ in range(300):
            raws = []
            for lo, hi in region.bounds:
                lo_r = int(float(lo) * scale // 1)
                hi_r = int(float(hi) * scale // 1)
                raws.append(rng.randint(lo_r, hi_r))
            tr = forward_fxp(qnet, raws)
            for li in range(len(net.layers)):
                for ni, (u, y) in enumerate(zip(tr.pre_activations[li],
                                                tr.post_activations[li])):
                    lo, hi = box[("u", li, ni)]
                    assert lo <= Fraction(u, scale) <= hi, ("u", li, ni)
                    lo, hi = box[("y", li, ni)]
                    assert lo <= Fraction(y, scale) <= hi, ("y", li, ni)


class TestRangeReport:
    def test_reference_bit_counts(self):
        report = range_report(boolean_toy_net(), UNIT)
        assert report.global_max_abs == Fraction(5)
        assert report.recommended_k == 4

    def test_worst_case_cross_check(self):
        net = two_input_relu_net()
        report = range_report(net, UNIT)
        for li, layer in [(0, net.layers[0])]:
            for row, b in zip(layer.weights, layer.biases):
                bound = p1_worst_case_bound(row, b, UNIT)
                assert report.per_layer_max_abs[li] <= sum(
                    abs(Fraction(w)) for w in row) + abs(Fraction(b)) + bound

    def test_wrap_risk_in_candidate_format(self):
        report = range_report(boolean_toy_net(), UNIT,
                              candidate=FxpMode(FxpFormat(3, 2)))
        assert report.wrap_risk_neurons  # 3-bit integers cannot hold 5


class TestSerialization:
    def test_box_json_roundtrip(self):
        box = propagate(boolean_toy_net(), UNIT, FxpMode(FxpFormat(3, 2)))
        back = IntervalBox.from_json(box.to_json())
        assert back.bounds == box.bounds
        assert back.wrap_risk == box.wrap_risk
