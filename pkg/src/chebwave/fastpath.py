"""Eigendecomposition-free application of an untight bank.

The scaling head and every wavelet with ``s <= 1`` are exact polynomials in
the sparse Laplacian, evaluated by the Chebyshev recurrence. A wavelet with
``s > 1`` is hard-truncated at ``lam = 2/s``, which no polynomial represents
exactly. For those heads we least-squares fit the truncated filter in the
variable ``y = lam - 1``, multiply the fit by a fitted window that is one on
``[0, 2/s]`` and tapers to zero just past the cut, and re-truncate the product
to the configured degree before running the recurrence.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as npcheb

from .bank import ContractError, build_bank, forward_transform, frame_operators, wavelet_values
from .chebyshev import ShiftedLaplacian, apply_series, basis_series, cheb_table
from .graph import Graph, spectrum
from .reports import VerifyReport

FIT_GRID = 4001
CHECK_GRID = 1000


@dataclass(frozen=True)
class WindowConfig:
    degree: int = 60
    taper: float = 0.1
    tol: float = 5e-2

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("window degree must be nonnegative")
        if self.taper <= 0:
            raise ValueError("taper width must be positive")


@dataclass(frozen=True)
class WindowFit:
    s: float
    degree: int
    taper: float
    coeffs: np.ndarray  # Chebyshev series in y = lam - 1
    grid_rms: float  # least-squares residual on the fit grid

    def __call__(self, lam) -> np.ndarray:
        return npcheb.chebval(np.asarray(lam, float) - 1.0, self.coeffs)

    def overshoot(self) -> float:
        """Distance by which the fit leaves [0, 1] on a 1000-point grid."""
        vals = self(np.linspace(0.0, 2.0, CHECK_GRID))
        return float(max(0.0, -vals.min(), vals.max() - 1.0))


def window_target(lam, s: float, taper: float) -> np.ndarray:
    """One up to the cut ``2/s``, raised-cosine down to zero over ``taper``."""
    lam = np.asarray(lam, dtype=float)
    cut = 2.0 / s
    u = np.clip((lam - cut) / taper, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * u))


def _grid(points: int = FIT_GRID) -> np.ndarray:
    return np.linspace(0.0, 2.0, points)


def lsq_series(values, degree: int, lam=None) -> tuple[np.ndarray, float]:
    """Least-squares Chebyshev series in ``y = lam - 1`` of sampled values."""
    lam = _grid() if lam is None else np.asarray(lam, float)
    V = cheb_table(degree, lam - 1.0).T
    coeffs, *_ = np.linalg.lstsq(V, values, rcond=None)
    rms = float(np.sqrt(np.mean((V @ coeffs - values) ** 2)))
    return coeffs, rms


def fit_window(s: float, degree: int, taper_width: float = 0.1) -> WindowFit:
    if s <= 0:
        raise ValueError("scale must be positive")
    if s <= 1.0:
        return WindowFit(float(s), int(degree), float(taper_width), np.array([1.0]), 0.0)
    lam = _grid()
    coeffs, rms = lsq_series(window_target(lam, s, taper_width), degree, lam)
    return WindowFit(float(s), int(degree), float(taper_width), coeffs, rms)


@dataclass(frozen=True)
class HeadSeries:
    """Chebyshev series of one head, applied on ``scale * L - I``."""
    series: np.ndarray
    scale: float
    exact: bool
    residual: float  # max |series - filter| on a dense grid in [0, 2]


def wavelet_series(a, s: float, cfg: WindowConfig) -> HeadSeries:
    a = np.asarray(a, dtype=float)
    if s <= 1.0:
        return HeadSeries(basis_series("even", a), float(s), True, 0.0)
    lam = _grid()
    target, _ = wavelet_values(a, [s], lam)
    fit, _ = lsq_series(target[0], cfg.degree, lam)
    window = fit_window(s, cfg.degree, cfg.taper)
    series = npcheb.chebmul(fit, window.coeffs)[: cfg.degree + 1]
    check = _grid(CHECK_GRID * 4 + 1)
    residual = float(np.max(np.abs(npcheb.chebval(check - 1.0, series) - wavelet_values(a, [s], check)[0][0])))
    return HeadSeries(series, 1.0, False, residual)


def head_series(a, b, scales, cfg: WindowConfig) -> list[HeadSeries]:
    out = [HeadSeries(basis_series("odd", np.asarray(b, float)), 1.0, True, 0.0)]
    out += [wavelet_series(a, float(s), cfg) for s in np.atleast_1d(scales)]
    return out


def approx_forward(a, b, scales, g: Graph, X, cfg: WindowConfig | None = None,
                   tight: bool = False, return_ops: bool = False):
    """Stacked ``[Phi X; Psi_1 X; ..]`` without an eigendecomposition."""
    if tight:
        raise ContractError("tight normalization needs the spectrum; the polynomial path is untight only")
    cfg = WindowConfig() if cfg is None else cfg
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    X = np.asarray(X, dtype=float)
    heads = head_series(a, b, scales, cfg)
    blocks, ops = [], []
    for hs in heads:
        op = ShiftedLaplacian(g, hs.scale)
        blocks.append(apply_series(hs.series, op, X))
        ops.append(op)
    out = np.concatenate(blocks, axis=0)
    return (out, ops) if return_ops else out


def compare_paths(g: Graph, bank_params: dict, X, cfg: WindowConfig | None = None) -> VerifyReport:
    """Per-head deviation between the spectral and polynomial paths.

    ``rel`` is the max-abs deviation divided by the max-abs spectral output of
    that head; ``measured`` is the worst ``rel`` over heads."""
    if g.n > 500:
        raise ValueError("spectral oracle limited to n <= 500")
    cfg = WindowConfig() if cfg is None else cfg
    a, b, scales = (np.asarray(bank_params[k], float) for k in ("a", "b", "scales"))
    X = np.asarray(X, dtype=float)

    t0 = time.perf_counter()
    spec = spectrum(g)
    ops = frame_operators(build_bank(a, b, scales, spec, tight=False), spec)
    ref = forward_transform(ops, X)
    t_spec = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    approx = approx_forward(a, b, scales, g, X, cfg)
    t_poly = (time.perf_counter() - t0) * 1e3

    n = g.n
    heads = []
    residuals = [hs.residual for hs in head_series(a, b, scales, cfg)]
    for h in range(scales.size + 1):
        diff = np.abs(approx[h * n:(h + 1) * n] - ref[h * n:(h + 1) * n])
        max_abs = float(diff.max()) if diff.size else 0.0
        scale = float(np.abs(ref[h * n:(h + 1) * n]).max()) if diff.size else 0.0
        rel = max_abs / scale if scale > 0 else max_abs
        heads.append({
            "head": h, "max_abs": max_abs, "rel": rel, "degree": cfg.degree, "taper": cfg.taper,
            "t_spectral_ms": t_spec, "t_poly_ms": t_poly, "series_residual": residuals[h],
        })
    worst = max(hd["rel"] for hd in heads)
    return VerifyReport("fastpath", worst, cfg.tol, worst <= cfg.tol,
                        {"heads": heads, "n": n, "scales": scales.tolist(), "metric": "rel"})
