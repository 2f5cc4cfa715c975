"""Batched fixed-point forward pass with a compiled fast path.

The compiled Cython extension is preferred when it built; otherwise the
numpy implementation takes over with identical semantics.  Both are limited
to widths of at most 32 bits so double-width products fit in int64; wider
formats fall back to the scalar executor.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import _fxpcore_py
from .executor import QuantizedNetwork, forward_fxp
from .fxp import RoundingMode
from .network import ActivationKind

try:
    from . import _fxpcore as _core
except ImportError:  # pragma: no cover - depends on the build environment
    _core = _fxpcore_py

ACTIVE_IMPL = _core.IMPL
MAX_WIDTH = _core.MAX_WIDTH


def get_impl(name: Optional[str] = None):
    """Kernel module by name ("cython"/"numpy"); default is the active one."""
    if name is None:
        return _core
    if name == "numpy":
        return _fxpcore_py
    if name == "cython":
        if _core.IMPL != "cython":
            raise RuntimeError("compiled kernel not available")
        return _core
    raise ValueError(f"unknown kernel implementation {name!r}")


def batch_forward_fxp(qnet: QuantizedNetwork, x_raws: np.ndarray,
                      impl: Optional[str] = None) -> np.ndarray:
    """Forward a batch of raw input vectors; returns raw outputs (n, out).

    Bit-exact with the scalar executor: wrap-around addition is associative
    modulo 2**width, so summing wrapped products and wrapping once agrees
    with wrapping after every addition.
    """
    mode = qnet.mode
    fmt = mode.format
    x = np.asarray(x_raws, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != qnet.source.input_dim:
        raise ValueError("expected an (n, input_dim) batch of raws")
    if fmt.width > MAX_WIDTH:
        out = [forward_fxp(qnet, row.tolist()).outputs for row in x]
        return np.asarray(out, dtype=np.int64)
    core = get_impl(impl)
    nearest = mode.rounding is RoundingMode.NEAREST
    current = x
    for li, layer in enumerate(qnet.source.layers):
        w = np.asarray(qnet.weights_raw[li], dtype=np.int64)
        b = np.asarray(qnet.biases_raw[li], dtype=np.int64)
        u = core.batch_matvec(current, w, b, fmt.width, fmt.l, nearest)
        kind = layer.activation.kind
        if kind is ActivationKind.RELU:
            current = core.batch_relu(np.asarray(u, dtype=np.int64))
        elif kind is ActivationKind.IDENTITY:
            current = np.asarray(u, dtype=np.int64)
        else:
            table = qnet.tables[kind]
            current = core.batch_table(
                np.asarray(u, dtype=np.int64),
                np.asarray(table.thresholds, dtype=np.int64),
                np.asarray(table.output_raws, dtype=np.int64))
    return np.asarray(current, dtype=np.int64)
