"""Positive-weight quadrature on the reference tetrahedron and triangle.

Rules are collapsed (conical) products of Gauss-Jacobi rules, so every
weight is positive and a rule with ``n`` points per direction integrates
polynomials of total degree ``2n - 1`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points and weights; weights sum to the reference measure."""

    points: np.ndarray  # (nq, d+1) barycentric coordinates
    weights: np.ndarray  # (nq,)
    degree: int

    def __len__(self):
        return len(self.weights)


def _gauss_jacobi01(n, alpha):
    # nodes/weights on [0, 1] for the weight (1 - t)**alpha
    t, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (1.0 + t), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def tetrahedron_rule(degree: int) -> QuadratureRule:
    """Rule on the unit tetrahedron (volume 1/6) exact to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    n = max(1, (degree + 2) // 2)
    a, wa = _gauss_jacobi01(n, 2)
    b, wb = _gauss_jacobi01(n, 1)
    c, wc = _gauss_jacobi01(n, 0)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    W = wa[:, None, None] * wb[None, :, None] * wc[None, None, :]
    x = A
    y = B * (1.0 - A)
    z = C * (1.0 - A) * (1.0 - B)
    pts = np.stack([1.0 - x - y - z, x, y, z], axis=-1).reshape(-1, 4)
    return QuadratureRule(points=pts, weights=W.ravel(), degree=2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the unit triangle (area 1/2) exact to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    n = max(1, (degree + 2) // 2)
    a, wa = _gauss_jacobi01(n, 1)
    b, wb = _gauss_jacobi01(n, 0)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = wa[:, None] * wb[None, :]
    x = A
    y = B * (1.0 - A)
    pts = np.stack([1.0 - x - y, x, y], axis=-1).reshape(-1, 3)
    return QuadratureRule(points=pts, weights=W.ravel(), degree=2 * n - 1)
