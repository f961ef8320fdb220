"""Truncated Taylor-series arithmetic.

A series is an array whose axis 0 holds Taylor coefficients ``c[k]`` so that
``f(t + h) = sum_k c[k] h**k``.  Trailing axes broadcast, which lets the same
code push a whole time grid through a nonlinear map at once.
"""

from __future__ import annotations

import math

import numpy as np


def constant(value, order: int) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    out = np.zeros((order + 1,) + value.shape)
    out[0] = value
    return out


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cauchy product truncated to the common order."""
    order = a.shape[0] - 1
    shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.zeros((order + 1,) + shape)
    for m in range(order + 1):
        for k in range(m + 1):
            out[m] = out[m] + a[k] * b[m - k]
    return out


def sincos(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = a.shape[0] - 1
    s = np.zeros_like(a, dtype=float)
    c = np.zeros_like(a, dtype=float)
    s[0] = np.sin(a[0])
    c[0] = np.cos(a[0])
    for m in range(1, order + 1):
        acc_s = np.zeros_like(a[0], dtype=float)
        acc_c = np.zeros_like(a[0], dtype=float)
        for k in range(1, m + 1):
            acc_s = acc_s + k * a[k] * c[m - k]
            acc_c = acc_c - k * a[k] * s[m - k]
        s[m] = acc_s / m
        c[m] = acc_c / m
    return s, c


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Series of matrix products; matrices live on the last two axes."""
    order = a.shape[0] - 1
    first = np.matmul(a[0], b[0])
    out = np.zeros((order + 1,) + first.shape)
    for m in range(order + 1):
        for k in range(m + 1):
            out[m] = out[m] + np.matmul(a[k], b[m - k])
    return out


def to_derivatives(series: np.ndarray) -> np.ndarray:
    """Convert Taylor coefficients to time derivatives (multiply by k!)."""
    scale = np.array([math.factorial(k) for k in range(series.shape[0])], dtype=float)
    return series * scale.reshape((-1,) + (1,) * (series.ndim - 1))


def from_derivatives(derivs: np.ndarray) -> np.ndarray:
    scale = np.array([math.factorial(k) for k in range(derivs.shape[0])], dtype=float)
    return derivs / scale.reshape((-1,) + (1,) * (derivs.ndim - 1))
