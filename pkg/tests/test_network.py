"""Network model, NNet parsing, assertions and properties."""

import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnncheck.network import (IDENTITY, RELU, SIGMOID, Activation,
                              ActivationKind, BoolOp, Comparison, HyperRect,
                              NormalizationInfo, OutputRef, ParseError,
                              SafetyProperty, forward_real, load_nnet,
                              make_network, parse_assertion, parse_nnet,
                              parse_property, robust_class, serialize_nnet,
                              sigmoid)
from qnncheck.zoo import two_input_relu_net


class TestActivations:
    def test_relu(self):
        assert RELU(-1.5) == 0.0 and RELU(2.0) == 2.0

    def test_sigmoid_stable(self):
        assert sigmoid(-1000.0) == 0.0
        assert sigmoid(1000.0) == 1.0
        assert sigmoid(0.0) == 0.5

    def test_pwl_interpolation_and_extrapolation(self):
        hard = Activation(ActivationKind.PIECEWISE_LINEAR,
                          ((-2.5, 0.0), (2.5, 1.0)))
        assert hard(0.0) == pytest.approx(0.5)
        assert hard(-2.5) == 0.0
        # end-slope extrapolation beyond the knots
        assert hard(5.0) == pytest.approx(1.5)

    def test_is_linear(self):
        assert RELU.is_linear and IDENTITY.is_linear
        assert not SIGMOID.is_linear


class TestForwardReal:
    def test_motivating_example(self):
        net = two_input_relu_net()
        (y,) = forward_real(net, [0.749, 0.498])
        assert y == pytest.approx(2.745, abs=1e-9)

    def test_zero_net(self):
        net = make_network([[[0.0, 0.0]]], [[0.0]], [RELU])
        assert forward_real(net, [3.0, -4.0]) == [0.0]

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            forward_real(two_input_relu_net(), [1.0])


class TestAssertions:
    def test_parse_and_evaluate(self):
        a = parse_assertion("y_0 >= 2.7 && (y_1 < 1 || !(y_0 = 3))")
        assert a.referenced_outputs() == {0, 1}
        assert a.evaluate([2.8, 0.5])
        assert not a.evaluate([2.6, 0.5])

    def test_operator_aliases(self):
        a = parse_assertion("y_0 > 0 and not (y_1 == 2)")
        assert a.evaluate([1.0, 1.0])
        assert not a.evaluate([1.0, 2.0])

    @pytest.mark.parametrize("text", ["y_0 >=", "y_9z > 1", "(y_0 > 1",
                                      "y_0 ? 1", ""])
    def test_rejects_malformed(self, text):
        with pytest.raises(ParseError):
            parse_assertion(text)

    def test_robust_class(self):
        a = robust_class(1, 3)
        assert a.evaluate([0.1, 0.9, 0.2])
        assert not a.evaluate([0.9, 0.9, 0.2])


class TestProperties:
    def test_parse_property_with_assert(self):
        prop = parse_property(
            '{"input": [{"lo": 0, "hi": 1}], "assert": "y_0 <= 5"}',
            num_outputs=1)
        assert prop.input_region.bounds == ((0.0, 1.0),)

    def test_parse_property_robust_class(self):
        prop = parse_property(
            '{"input": [{"lo": 0, "hi": 1}], "assert": {"robust_class": 2}}',
            num_outputs=4)
        assert prop.output_condition.evaluate([0, 1, 5, 2])

    def test_validation_catches_bad_output_ref(self):
        net = two_input_relu_net()
        prop = parse_property(
            '{"input": [{"lo": 0, "hi": 1}, {"lo": 0, "hi": 1}], '
            '"assert": "y_3 > 0"}')
        with pytest.raises(ValueError):
            prop.validate_against(net)

    def test_hyperrect(self):
        r = HyperRect.around([0.5, -0.5], 0.1)
        assert r.contains([0.45, -0.55])
        assert not r.contains([0.7, -0.5])
        with pytest.raises(ValueError):
            HyperRect(((1.0, 0.0),))


class TestNNetFormat:
    def test_roundtrip(self):
        net = two_input_relu_net()
        text = serialize_nnet(net)
        back = parse_nnet(io.StringIO(text), name=net.name)
        assert back.input_dim == 2 and back.output_dim == 1
        for a, b in zip(net.layers, back.layers):
            assert a.weights == b.weights
            assert a.biases == b.biases
            assert a.activation.kind is b.activation.kind

    def test_roundtrip_preserves_forward(self):
        net = two_input_relu_net()
        back = parse_nnet(io.StringIO(serialize_nnet(net)))
        for x in ([0.749, 0.498], [0.0, 0.0], [1.0, -1.0]):
            assert forward_real(net, x) == forward_real(back, x)

    def test_error_reports_line(self):
        text = serialize_nnet(two_input_relu_net())
        lines = text.splitlines()
        lines[8] = "not,a,number,"  # first weight row
        with pytest.raises(ParseError) as err:
            parse_nnet(io.StringIO("\n".join(lines)))
        assert err.value.line is not None

    def test_truncated_input_rejected(self):
        text = serialize_nnet(two_input_relu_net())
        head = "\n".join(text.splitlines()[:6])
        with pytest.raises(ParseError):
            parse_nnet(io.StringIO(head))

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "net.nnet"
        p.write_text(serialize_nnet(two_input_relu_net()))
        net = load_nnet(str(p))
        assert net.input_dim == 2


class TestNormalization:
    def test_normalize_denormalize(self):
        info = NormalizationInfo((0.0,), (10.0,), (5.0, 0.0), (5.0, 1.0))
        assert info.normalize_input([7.5]) == [0.5]
        assert info.denormalize_output([0.5]) == [0.5]


@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2))
@settings(max_examples=100)
def test_forward_real_matches_manual(x):
    net = two_input_relu_net()
    a = max(0.0, 2 * x[0] - 3 * x[1])
    b = max(0.0, x[0] + 4 * x[1])
    (y,) = forward_real(net, x)
    assert y == pytest.approx(a + b, rel=1e-12, abs=1e-12)
