"""Batched forward kernel: bit-exactness against the scalar executor."""

import random

import numpy as np
import pytest

from qnncheck import kernel
from qnncheck.executor import forward_fxp, quantize_network
from qnncheck.fxp import FxpFormat, RoundingMode
from qnncheck.kernel import ACTIVE_IMPL, MAX_WIDTH, batch_forward_fxp, get_impl
from qnncheck.lut import build_table, default_spec, lut_to_fxp
from qnncheck.modes import FxpMode
from qnncheck.network import SIGMOID, ActivationKind
from qnncheck.zoo import random_net, two_input_relu_net

IMPLS = ["numpy"] + (["cython"] if ACTIVE_IMPL == "cython" else [])


def random_raws(fmt, n, dim, seed):
    rng = random.Random(seed)
    return np.array(
        [[rng.randint(fmt.min_raw, fmt.max_raw) for _ in range(dim)]
         for _ in range(n)], dtype=np.int64)


@pytest.mark.parametrize("impl", IMPLS)
@pytest.mark.parametrize("fmt", [FxpFormat(4, 0), FxpFormat(4, 4),
                                 FxpFormat(8, 8), FxpFormat(16, 16)])
@pytest.mark.parametrize("rounding", list(RoundingMode))
def test_batch_matches_scalar(impl, fmt, rounding):
    mode = FxpMode(fmt, rounding)
    net = random_net(21, [3, 6, 4, 2])
    qnet = quantize_network(net, mode)
    xs = random_raws(fmt, 200, 3, seed=fmt.width * 10 + 1)
    batch = batch_forward_fxp(qnet, xs, impl=impl)
    for i in range(len(xs)):
        assert list(batch[i]) == forward_fxp(qnet, list(xs[i])).outputs, i


@pytest.mark.parametrize("impl", IMPLS)
def test_batch_with_sigmoid_table(impl):
    fmt = FxpFormat(6, 8)
    mode = FxpMode(fmt, RoundingMode.NEAREST)
    net = random_net(22, [4, 8, 3], hidden=SIGMOID)
    table = lut_to_fxp(build_table(default_spec(SIGMOID, 4.0), 0.05), fmt)
    qnet = quantize_network(net, mode, {ActivationKind.SIGMOID: table})
    xs = random_raws(fmt, 300, 4, seed=7)
    batch = batch_forward_fxp(qnet, xs, impl=impl)
    for i in range(0, len(xs), 7):
        assert list(batch[i]) == forward_fxp(qnet, list(xs[i])).outputs


def test_impls_agree():
    if ACTIVE_IMPL != "cython":
        pytest.skip("compiled core not built")
    fmt = FxpFormat(12, 12)
    qnet = quantize_network(random_net(23, [5, 10, 5]), FxpMode(fmt))
    xs = random_raws(fmt, 500, 5, seed=3)
    a = batch_forward_fxp(qnet, xs, impl="cython")
    b = batch_forward_fxp(qnet, xs, impl="numpy")
    assert np.array_equal(a, b)


def test_wide_format_falls_back_to_scalar():
    fmt = FxpFormat(20, 20)  # width 40 > MAX_WIDTH
    assert fmt.width > MAX_WIDTH
    qnet = quantize_network(two_input_relu_net(), FxpMode(fmt))
    xs = random_raws(FxpFormat(4, 20), 20, 2, seed=5)
    batch = batch_forward_fxp(qnet, xs)
    for i in range(len(xs)):
        assert list(batch[i]) == forward_fxp(qnet, list(xs[i])).outputs


def test_get_impl_rejects_unknown():
    with pytest.raises(ValueError):
        get_impl("fortran")


def test_active_impl_is_exposed():
    assert kernel.ACTIVE_IMPL in ("numpy", "cython")
