"""Pure numpy implementation of the batched fixed-point forward kernel.

Per-element semantics are identical to the scalar executor: each product
is shifted and wrapped individually, then the accumulation wraps once
(wrap-around addition is a homomorphism modulo 2**width, so wrapping after
every add and wrapping the final sum agree).  Valid for widths up to 32
bits so the double-width products fit in int64.
"""

from __future__ import annotations

import numpy as np

IMPL = "numpy"
MAX_WIDTH = 32


def _wrap(a: np.ndarray, width: int) -> np.ndarray:
    mask = np.int64((1 << width) - 1)
    sign = np.int64(1 << (width - 1))
    u = a & mask
    return (u ^ sign) - sign


def _shift_products(p: np.ndarray, frac_bits: int, nearest: bool,
                    width: int) -> np.ndarray:
    if frac_bits == 0:
        return _wrap(p, width)
    q = p >> frac_bits  # arithmetic shift: floor toward minus infinity
    if nearest:
        half = np.int64(1 << (frac_bits - 1))
        rem = p & np.int64((1 << frac_bits) - 1)
        bump = (rem > half) | ((rem == half) & (p < 0))
        q = q + bump.astype(np.int64)
    return _wrap(q, width)


def batch_matvec(x_raw: np.ndarray, w_raw: np.ndarray, b_raw: np.ndarray,
                 width: int, frac_bits: int, nearest: bool) -> np.ndarray:
    """One quantized affine layer over a batch.

    x_raw: (n, fan_in) int64 raws; w_raw: (size, fan_in); b_raw: (size,).
    Returns (n, size) pre-activation raws.
    """
    # (n, size, fan_in) exact double-width products
    p = x_raw[:, None, :] * w_raw[None, :, :]
    terms = _shift_products(p, frac_bits, nearest, width)
    acc = terms.sum(axis=2, dtype=np.int64) + b_raw[None, :]
    return _wrap(acc, width)


def batch_relu(u_raw: np.ndarray) -> np.ndarray:
    return np.maximum(u_raw, 0)


def batch_table(u_raw: np.ndarray, thresholds: np.ndarray,
                outputs: np.ndarray) -> np.ndarray:
    """Threshold-table activation: entry i when th[i-1] <= u < th[i]."""
    idx = np.searchsorted(thresholds, u_raw, side="right")
    return outputs[idx]
