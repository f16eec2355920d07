"""Scaling and wavelet filters built from odd/even transformed Chebyshev terms.

``h(lam) = sum_i b_i t_{2i-1}(lam)`` and ``g(s lam) = sum_i a_i t_{2i}(s lam)``
with ``g(s lam)`` hard-truncated to zero wherever ``s lam > 2``. With
``tight=True`` both filters are divided per eigenvalue by
``v = sqrt(h^2 + sum_j g_j^2)`` so that ``h^2 + sum_j g_j^2 = 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chebyshev import basis_derivative, basis_table
from .graph import Spectrum

DEGENERATE_TOL = 1e-12


class ContractError(RuntimeError):
    """An operation was called outside the regime it is defined for."""


@dataclass(frozen=True)
class WaveletBank:
    a: np.ndarray
    b: np.ndarray
    scales: np.ndarray
    lambdas: np.ndarray
    h_vals: np.ndarray
    g_vals: np.ndarray  # J x n
    tight: bool
    frame_vals: np.ndarray
    degenerate_modes: tuple[int, ...]
    raw_h: np.ndarray
    raw_g: np.ndarray
    norms: np.ndarray
    support: np.ndarray  # J x n, True where s_j * lam_i <= 2
    threshold: float | None = None

    @property
    def rho(self) -> int:
        return self.a.size

    @property
    def J(self) -> int:
        return self.scales.size

    def filters(self) -> np.ndarray:
        """(J+1) x n filter values in head order [h, g_1, .., g_J]."""
        return np.vstack([self.h_vals[None, :], self.g_vals])

    def to_json(self) -> dict:
        return {
            "rho": self.rho,
            "J": self.J,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "scales": self.scales.tolist(),
            "tight": self.tight,
            "threshold": self.threshold,
        }


def _vec(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _lock(*arrays):
    for arr in arrays:
        arr.setflags(write=False)


def wavelet_values(a, scales, lambdas) -> tuple[np.ndarray, np.ndarray]:
    """Raw truncated ``g(s_j lam_i)`` (J x n) and the support mask."""
    a = _vec(a, "a")
    scales = _vec(scales, "scales")
    lam = np.asarray(lambdas, dtype=float)
    arg = scales[:, None] * lam[None, :]
    support = arg <= 2.0
    safe = np.where(support, arg, 0.0)
    table = basis_table("even", a.size, safe.ravel()).values
    g = (a @ table).reshape(arg.shape)
    return np.where(support, g, 0.0), support


def build_bank(a, b, scales, spec: Spectrum, tight: bool = True, threshold: float | None = None) -> WaveletBank:
    a = _vec(a, "a")
    b = _vec(b, "b")
    scales = _vec(scales, "scales")
    if a.size < 1 or a.size != b.size:
        raise ValueError(f"a and b must share a length rho >= 1, got {a.size} and {b.size}")
    if scales.size < 1:
        raise ValueError("need at least one scale")
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    if threshold is not None and threshold < 0:
        raise ValueError("threshold must be nonnegative")

    lam = spec.eigenvalues
    raw_h = b @ basis_table("odd", b.size, lam).values
    raw_g, support = wavelet_values(a, scales, lam)
    norms = np.sqrt(raw_h**2 + np.sum(raw_g**2, axis=0))
    degenerate: tuple[int, ...] = ()
    if tight:
        ok = norms >= DEGENERATE_TOL
        degenerate = tuple(int(i) for i in np.flatnonzero(~ok))
        inv = np.where(ok, 1.0 / np.where(ok, norms, 1.0), 0.0)
        h_vals = raw_h * inv
        g_vals = raw_g * inv[None, :]
    else:
        h_vals = raw_h.copy()
        g_vals = raw_g.copy()
    frame_vals = h_vals**2 + np.sum(g_vals**2, axis=0)
    if not (np.all(np.isfinite(h_vals)) and np.all(np.isfinite(g_vals))):
        raise FloatingPointError("non-finite filter values")
    _lock(a, b, scales, raw_h, raw_g, norms, support, h_vals, g_vals, frame_vals)
    return WaveletBank(
        a=a, b=b, scales=scales, lambdas=lam, h_vals=h_vals, g_vals=g_vals,
        tight=bool(tight), frame_vals=frame_vals, degenerate_modes=degenerate,
        raw_h=raw_h, raw_g=raw_g, norms=norms, support=support, threshold=threshold,
    )


def bank_from_json(obj: dict | str, spec: Spectrum) -> WaveletBank:
    if isinstance(obj, str):
        obj = json.loads(obj)
    bank = build_bank(obj["a"], obj["b"], obj["scales"], spec,
                      tight=bool(obj.get("tight", True)), threshold=obj.get("threshold"))
    if "rho" in obj and int(obj["rho"]) != bank.rho:
        raise ValueError(f"rho={obj['rho']} disagrees with len(a)={bank.rho}")
    if "J" in obj and int(obj["J"]) != bank.J:
        raise ValueError(f"J={obj['J']} disagrees with len(scales)={bank.J}")
    return bank


def frame_function(bank: WaveletBank) -> np.ndarray:
    """``G(lam_i) = h^2 + sum_j g_j^2`` per eigenvalue."""
    return bank.h_vals**2 + np.sum(bank.g_vals**2, axis=0)


def bank_backward(bank: WaveletBank, d_h, d_g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pull gradients on (normalized) filter values back to ``a``, ``b`` and
    the scales. Truncation is treated as a fixed mask."""
    d_h = np.asarray(d_h, dtype=float)
    d_g = np.asarray(d_g, dtype=float)
    if bank.tight:
        Y = bank.filters()
        dY = np.vstack([d_h[None, :], d_g])
        ok = bank.norms >= DEGENERATE_TOL
        inv = np.where(ok, 1.0 / np.where(ok, bank.norms, 1.0), 0.0)
        dX = (dY - Y * np.sum(Y * dY, axis=0)[None, :]) * inv[None, :]
        d_raw_h, d_raw_g = dX[0], dX[1:]
    else:
        d_raw_h, d_raw_g = d_h, d_g
    lam = bank.lambdas
    d_b = basis_table("odd", bank.rho, lam).values @ d_raw_h

    arg = bank.scales[:, None] * lam[None, :]
    safe = np.where(bank.support, arg, 0.0).ravel()
    masked = np.where(bank.support, d_raw_g, 0.0)
    table = basis_table("even", bank.rho, safe).values.reshape(bank.rho, *arg.shape)
    d_a = np.einsum("kji,ji->k", table, masked)
    deriv = basis_derivative("even", bank.rho, safe).reshape(bank.rho, *arg.shape)
    g_prime = np.einsum("k,kji->ji", bank.a, deriv)
    d_scales = np.sum(masked * g_prime * lam[None, :], axis=1)
    return d_a, d_b, d_scales


@dataclass(frozen=True)
class FrameOperators:
    phi: np.ndarray
    psi: np.ndarray  # J x n x n
    threshold: float | None
    tight: bool
    degenerate_modes: tuple[int, ...]
    spectrum: Spectrum
    bank: WaveletBank | None = None
    masks: np.ndarray | None = None  # (J+1) x n x n kept entries when thresholded

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def J(self) -> int:
        return self.psi.shape[0]

    def heads(self) -> list[np.ndarray]:
        """Operators in head order [Phi, Psi_1, .., Psi_J]."""
        return [self.phi] + list(self.psi)


def frame_operators(bank: WaveletBank, spec: Spectrum, threshold: float | None = None) -> FrameOperators:
    """Dense ``Phi = U h U^T`` and ``Psi_j = U g_j U^T``; entries with
    ``|value| < threshold`` are zeroed after normalization."""
    if spec.n != bank.lambdas.size:
        raise ValueError("bank and spectrum come from different graphs")
    if threshold is None:
        threshold = bank.threshold
    stack = np.stack([spec.operator(f) for f in bank.filters()])
    stack = 0.5 * (stack + np.transpose(stack, (0, 2, 1)))
    masks = None
    if threshold:
        masks = np.abs(stack) >= threshold
        stack = np.where(masks, stack, 0.0)
    _lock(stack)
    return FrameOperators(
        phi=stack[0], psi=stack[1:], threshold=threshold, tight=bank.tight,
        degenerate_modes=bank.degenerate_modes, spectrum=spec, bank=bank, masks=masks,
    )


def operators_from_filters(spec: Spectrum, filters, tight: bool = False) -> FrameOperators:
    """Frame operators straight from a (J+1) x n filter table."""
    filters = np.asarray(filters, dtype=float)
    stack = np.stack([spec.operator(f) for f in filters])
    stack = 0.5 * (stack + np.transpose(stack, (0, 2, 1)))
    return FrameOperators(phi=stack[0], psi=stack[1:], threshold=None, tight=tight,
                          degenerate_modes=(), spectrum=spec)


def operator_backward(ops: FrameOperators, d_heads) -> tuple[np.ndarray, np.ndarray]:
    """Gradient w.r.t. filter values from gradients w.r.t. each dense operator.

    ``d_heads`` is (J+1) x n x n in head order; returns (d_h, d_g).
    """
    d = np.asarray(d_heads, dtype=float)
    if ops.masks is not None:
        d = np.where(ops.masks, d, 0.0)
    U = ops.spectrum.eigenvectors
    # diag(U^T dO U) for every head
    d_f = np.einsum("ni,hni->hi", U, d @ U)
    return d_f[0], d_f[1:]


def frame_identity_error(ops: FrameOperators) -> float:
    """Frobenius distance of ``Phi^2 + sum Psi_j^2`` from the projector onto
    the non-degenerate modes."""
    total = ops.phi @ ops.phi + sum(p @ p for p in ops.psi)
    return float(np.linalg.norm(total - _nondegenerate_projector(ops.spectrum, ops.degenerate_modes)))


def spectral_frame_error(bank: WaveletBank, spec: Spectrum) -> float:
    """Same distance as :func:`frame_identity_error`, before any threshold."""
    target = np.ones(bank.lambdas.size)
    target[list(bank.degenerate_modes)] = 0.0
    return float(np.linalg.norm(spec.operator(frame_function(bank) - target)))


def _nondegenerate_projector(spec: Spectrum, degenerate) -> np.ndarray:
    P = np.eye(spec.n)
    if degenerate:
        Ud = spec.eigenvectors[:, list(degenerate)]
        P = P - Ud @ Ud.T
    return P


def forward_transform(ops: FrameOperators, X) -> np.ndarray:
    """Stacked coefficients ``[Phi X; Psi_1 X; ..; Psi_J X]``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != ops.n:
        raise ValueError(f"signal has {X.shape[0]} rows, operators are {ops.n}x{ops.n}")
    return np.concatenate([op @ X for op in ops.heads()], axis=0)


def inverse_transform(ops: FrameOperators, C) -> np.ndarray:
    """``T^T C``, the inverse of :func:`forward_transform` for tight frames."""
    if not ops.tight:
        raise ContractError("inverse_transform requires a tight bank")
    C = np.asarray(C, dtype=float)
    n = ops.n
    if C.shape[0] != n * (ops.J + 1):
        raise ValueError(f"expected {(ops.J + 1) * n} coefficient rows, got {C.shape[0]}")
    blocks = C.reshape(ops.J + 1, n, *C.shape[1:])
    return sum(op.T @ blk for op, blk in zip(ops.heads(), blocks))
