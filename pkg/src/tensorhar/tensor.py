"""Dense tensor contractions and a position-aware distance between tensors.

Tensors are plain numpy arrays; an order-1 tensor is just a vector. Modes
are numbered 1..N as is conventional for multilinear algebra, while flat
indices are 0-based, row-major (last index fastest).

The distance is a quadratic form sqrt(d' G d) over the flattened difference
d, where G couples nearby grid positions through a Gaussian of the
Euclidean distance between their multi-indices. G is symmetric positive
semidefinite, so the result is a Mahalanobis-type seminorm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Largest flattened size for which G is materialized as a dense matrix.
# Above this, use the streaming path which never forms G.
MATERIALIZE_CAP = 4096

_ROW_BLOCK = 256


def _as_tensor(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    if arr.size == 0:
        raise ValueError("tensor must have at least one element per mode")
    return arr


def mode_k_product(x, w, k: int) -> np.ndarray:
    """Contract tensor x with vector w along mode k (1-based).

    Returns a tensor of order N-1 with mode k removed; contracting an
    order-1 tensor yields a 0-d scalar array.
    """
    x = _as_tensor(x)
    w = np.asarray(w, dtype=float)
    if not 1 <= k <= x.ndim:
        raise ValueError(f"mode {k} out of range for an order-{x.ndim} tensor")
    if w.ndim != 1:
        raise ValueError(f"mode weight must be a vector, got {w.ndim} axes")
    if w.shape[0] != x.shape[k - 1]:
        raise ValueError(
            f"mode-{k} length mismatch: tensor extent {x.shape[k - 1]}, "
            f"weight length {w.shape[0]}"
        )
    return np.tensordot(x, w, axes=([k - 1], [0]))


def frobenius_norm(x) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(x, dtype=float).ravel()))


def _positions(shape: tuple[int, ...]) -> np.ndarray:
    """(prod(shape), N) array of 0-based multi-indices in row-major order."""
    grids = np.indices(shape).reshape(len(shape), -1)
    return grids.T.astype(float)


def location_distance(l: int, m: int, shape) -> float:
    """Euclidean distance between the multi-indices of flat positions l, m.

    Flat indices are 0-based row-major.
    """
    shape = tuple(int(s) for s in shape)
    size = int(np.prod(shape))
    for idx in (l, m):
        if not 0 <= idx < size:
            raise ValueError(f"flat index {idx} out of range for shape {shape}")
    pl = np.asarray(np.unravel_index(l, shape), dtype=float)
    pm = np.asarray(np.unravel_index(m, shape), dtype=float)
    return float(np.sqrt(np.sum((pl - pm) ** 2)))


@dataclass(frozen=True)
class MetricCoefficients:
    """Dense position-coupling matrix G for a given tensor shape.

    G[l, m] = exp(-||p_l - p_m||^2 / (2 sigma2)) / (2 pi sigma2); the
    diagonal is the constant 1/(2 pi sigma2).
    """

    sigma2: float
    shape: tuple[int, ...]
    values: np.ndarray


def metric_coefficients(shape, sigma2: float, cap: int = MATERIALIZE_CAP) -> MetricCoefficients:
    shape = tuple(int(s) for s in shape)
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    size = int(np.prod(shape))
    if size > cap:
        raise ValueError(
            f"flattened size {size} exceeds the materialization cap {cap}; "
            "use the streaming tensor_distance path instead"
        )
    pos = _positions(shape)
    diff = pos[:, None, :] - pos[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    values = np.exp(-sq / (2.0 * sigma2)) / (2.0 * np.pi * sigma2)
    return MetricCoefficients(sigma2=float(sigma2), shape=shape, values=values)


def _quadratic_form_streaming(d: np.ndarray, shape: tuple[int, ...], sigma2: float) -> float:
    """d' G d computed in row blocks without materializing G."""
    pos = _positions(shape)
    coef = 1.0 / (2.0 * np.pi * sigma2)
    total = 0.0
    for start in range(0, d.size, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, d.size)
        diff = pos[start:stop, None, :] - pos[None, :, :]
        sq = np.sum(diff * diff, axis=-1)
        rows = np.exp(-sq / (2.0 * sigma2)) * coef
        total += float(d[start:stop] @ (rows @ d))
    return total


def tensor_distance(x, y, sigma2: float = 1.0, method: str = "auto",
                    cap: int = MATERIALIZE_CAP) -> float:
    """Position-aware distance sqrt(d' G d) between same-shaped tensors.

    method selects "materialized" (builds G, needs prod(shape) <= cap) or
    "streaming" (row blocks, flat memory); "auto" picks by size. Both give
    the same value to within roundoff.
    """
    x = _as_tensor(x)
    y = _as_tensor(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if method not in ("auto", "materialized", "streaming"):
        raise ValueError(f"unknown method {method!r}")
    d = (x - y).ravel()
    if method == "auto":
        method = "materialized" if d.size <= cap else "streaming"
    if method == "materialized":
        g = metric_coefficients(x.shape, sigma2, cap=cap).values
        quad = float(d @ g @ d)
    else:
        quad = _quadratic_form_streaming(d, x.shape, sigma2)
    # G is PSD, so negative radicands can only come from roundoff.
    tol = 1e-12 * max(1.0, float(d @ d))
    if quad < -tol:
        raise ArithmeticError(f"quadratic form came out negative ({quad}); G should be PSD")
    return float(np.sqrt(max(quad, 0.0)))
