"""Chebyshev recurrences, the order-shift transform onto [0, 2], and
eigendecomposition-free application of the resulting operator polynomials.

The transformed term of order ``k`` is ``t_k(lam) = (1 - T_k(lam - 1)) / 2``.
Odd orders equal 1 at ``lam = 0`` (scaling-function basis); even orders vanish
at ``lam = 0`` and ``lam = 2`` (wavelet basis).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph

DOMAIN_TOL = 1e-9
PARITIES = ("odd", "even")


class DomainError(ValueError):
    pass


def cheb_table(kmax: int, y) -> np.ndarray:
    """Rows ``T_0(y) .. T_kmax(y)`` by the three-term recurrence."""
    y = np.asarray(y, dtype=float)
    out = np.empty((kmax + 1,) + y.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = y
    for k in range(2, kmax + 1):
        out[k] = 2.0 * y * out[k - 1] - out[k - 2]
    return out


def cheb_deriv_table(kmax: int, y) -> np.ndarray:
    """Rows ``T_0'(y) .. T_kmax'(y)`` using ``T_k' = k U_{k-1}``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros((kmax + 1,) + y.shape)
    if kmax == 0:
        return out
    u_prev, u = np.zeros_like(y), np.ones_like(y)  # U_{-1}, U_0
    for k in range(1, kmax + 1):
        out[k] = k * u
        u_prev, u = u, 2.0 * y * u - u_prev
    return out


def chebyshev_T(k: int, y):
    if k < 0:
        raise ValueError("order must be >= 0")
    return cheb_table(k, y)[k]


def _check_domain(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.size and (lam.min() < -DOMAIN_TOL or lam.max() > 2.0 + DOMAIN_TOL):
        raise DomainError(
            f"lambda outside [0, 2]: range [{lam.min():.6g}, {lam.max():.6g}]"
        )
    return lam


def transformed_term(k: int, lam):
    """``(1 - T_k(lam - 1)) / 2`` for ``lam`` in [0, 2]."""
    if k < 0:
        raise ValueError("order must be >= 0")
    lam = _check_domain(lam)
    return 0.5 * (1.0 - chebyshev_T(k, lam - 1.0))


def basis_orders(parity: str, rho: int) -> np.ndarray:
    """Orders 1, 3, .., 2rho-1 (odd) or 2, 4, .., 2rho (even)."""
    if parity not in PARITIES:
        raise ValueError(f"parity must be one of {PARITIES}")
    if rho < 1:
        raise ValueError("rho must be >= 1")
    i = np.arange(1, rho + 1)
    return 2 * i - 1 if parity == "odd" else 2 * i


@dataclass(frozen=True)
class ChebBasisTable:
    parity: str
    rho: int
    lambdas: np.ndarray
    values: np.ndarray  # rho x len(lambdas)

    @property
    def orders(self) -> np.ndarray:
        return basis_orders(self.parity, self.rho)


def basis_table(parity: str, rho: int, lambdas) -> ChebBasisTable:
    orders = basis_orders(parity, rho)
    lam = _check_domain(np.atleast_1d(np.asarray(lambdas, dtype=float)))
    T = cheb_table(int(orders[-1]), lam - 1.0)
    values = 0.5 * (1.0 - T[orders])
    values.setflags(write=False)
    return ChebBasisTable(parity, rho, lam, values)


def basis_derivative(parity: str, rho: int, lambdas) -> np.ndarray:
    """d/dlam of each basis row, same layout as :func:`basis_table` values."""
    orders = basis_orders(parity, rho)
    lam = _check_domain(np.atleast_1d(np.asarray(lambdas, dtype=float)))
    dT = cheb_deriv_table(int(orders[-1]), lam - 1.0)
    return -0.5 * dT[orders]


def basis_series(parity: str, coeffs) -> np.ndarray:
    """Chebyshev coefficients in ``y = lam - 1`` of ``sum_i c_i t_{k(i)}``."""
    coeffs = np.asarray(coeffs, dtype=float)
    orders = basis_orders(parity, coeffs.size)
    series = np.zeros(int(orders[-1]) + 1)
    series[0] = 0.5 * coeffs.sum()
    series[orders] -= 0.5 * coeffs
    return series


class ShiftedLaplacian:
    """Sparse ``scale * L - I`` with a product counter.

    The normalized Laplacian has spectrum in [0, 2], so for ``scale <= 1`` the
    shifted operator has spectrum inside [-1, 1].
    """

    def __init__(self, g: Graph, scale: float = 1.0):
        self.n = g.n
        self.scale = float(scale)
        L = g.laplacian(sparse=True)
        self.matrix = (self.scale * L - sp.identity(g.n, format="csr")).tocsr()
        self.products = 0

    def __matmul__(self, X: np.ndarray) -> np.ndarray:
        self.products += 1
        return self.matrix @ X


def apply_series(series, op: ShiftedLaplacian, X: np.ndarray) -> np.ndarray:
    """``sum_k series[k] T_k(op) X`` by the matrix three-term recurrence.

    Uses ``len(series) - 1`` products with ``op``.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != op.n:
        raise ValueError(f"signal has {X.shape[0]} rows, graph has {op.n} nodes")
    series = np.asarray(series, dtype=float)
    out = series[0] * X
    if series.size == 1:
        return out
    t_prev, t_cur = X, op @ X
    out = out + series[1] * t_cur
    for c in series[2:]:
        t_prev, t_cur = t_cur, 2.0 * (op @ t_cur) - t_prev
        out = out + c * t_cur
    return out


def apply_poly_operator(parity: str, coeffs, g: Graph | ShiftedLaplacian, X, scale: float = 1.0):
    """Apply ``sum_i c_i t_{k(i)}(scale * L)`` to ``X`` without eigenvectors.

    ``scale`` must be at most 1 so the recurrence stays on [-1, 1]; larger
    scales need the windowed construction in :mod:`chebwave.fastpath`.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size < 1:
        raise ValueError("coeffs must be a non-empty vector")
    X = np.asarray(X, dtype=float)
    op = g if isinstance(g, ShiftedLaplacian) else ShiftedLaplacian(g, scale)
    if op.scale > 1.0 + DOMAIN_TOL:
        raise DomainError("scale > 1 maps the spectrum outside [-1, 1]")
    if X.shape[0] != op.n:
        raise ValueError(f"signal has {X.shape[0]} rows, graph has {op.n} nodes")
    if not np.any(coeffs):
        return np.zeros_like(X)
    return apply_series(basis_series(parity, coeffs), op, X)
