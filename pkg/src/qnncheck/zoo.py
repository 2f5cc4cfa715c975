"""Deterministic bundled example networks.

Small hand-written nets with known behavior plus seeded random generators;
these stand in for trained models in the docs, the CLI examples and the
test suite.
"""

from __future__ import annotations

import math
import random
from typing import Optional, Sequence

from .network import (IDENTITY, RELU, SIGMOID, TANH, Activation, HyperRect,
                      Network, SafetyProperty, make_network, parse_assertion,
                      OutputAssertion)


def two_input_relu_net() -> Network:
    """f(x1, x2) = ReLU(2 x1 - 3 x2) + ReLU(x1 + 4 x2).

    At (0.749, 0.498) the exact value is 2.745; under Q4.6 truncation it
    drops to 2.6875, crossing the classic y >= 2.7 threshold.
    """
    return make_network(
        [[[2.0, -3.0], [1.0, 4.0]], [[1.0, 1.0]]],
        [[0.0, 0.0], [0.0]],
        [RELU, IDENTITY],
        name="two-input-relu")


def boolean_toy_net() -> Network:
    """Three ReLU neurons over two 0/1 inputs: a=2x-3y, b=x+4y, f=3x+y.

    With inputs in [0,1] interval analysis proves b and f non-negative, so
    only the a-guard survives optimization.
    """
    return make_network(
        [[[2.0, -3.0], [1.0, 4.0], [3.0, 1.0]]],
        [[0.0, 0.0, 0.0]],
        [RELU],
        name="boolean-toy")


def boolean_toy_property() -> SafetyProperty:
    region = HyperRect(((0.0, 1.0), (0.0, 1.0)))
    cond = parse_assertion("y_0 <= 2 && y_1 <= 5 && y_2 <= 4")
    return SafetyProperty(region, cond)


def random_net(seed: int, dims: Sequence[int],
               hidden: Activation = RELU,
               output: Activation = IDENTITY,
               weight_scale: float = 1.0) -> Network:
    """Seeded dense net with weights uniform in +-weight_scale.

    Weights are snapped to 3 decimal places so they stay exactly
    reproducible through serialization.
    """
    rng = random.Random(seed)
    weights, biases, acts = [], [], []
    for i in range(len(dims) - 1):
        fan_in, size = dims[i], dims[i + 1]
        weights.append([[round(rng.uniform(-weight_scale, weight_scale), 3)
                         for _ in range(fan_in)] for _ in range(size)])
        biases.append([round(rng.uniform(-weight_scale, weight_scale), 3)
                       for _ in range(size)])
        acts.append(hidden if i < len(dims) - 2 else output)
    return make_network(weights, biases, acts,
                        name=f"random-{'x'.join(map(str, dims))}-s{seed}")


def vocalic_like_net(seed: int = 0) -> Network:
    """25-10-4-5 sigmoid architecture (5x5 pixel inputs, 5 classes)."""
    return random_net(seed, [25, 10, 4, 5], hidden=SIGMOID, output=IDENTITY,
                      weight_scale=0.5)


def iris_like_net(seed: int = 0) -> Network:
    """4-8-5-3 ReLU classifier shape."""
    return random_net(seed, [4, 8, 5, 3], hidden=RELU, output=IDENTITY)


def robustness_property(net: Network, center: Sequence[float],
                        radius: float, target_class: int) -> SafetyProperty:
    """Ball around `center` in which `target_class` must stay arg-max."""
    region = HyperRect.around(center, radius)
    from .network import robust_class
    cond = robust_class(target_class, net.output_dim)
    return SafetyProperty(region, cond)
