"""Numerical checks of the mixing theory for single-wavelet message passing
``H <- sigma(Psi H W)``: finite-difference mixing, the entrywise wavelet bound
under a monomial filter model, the assembled mixing upper bound, the implicit
least-depth inequality, and receptive-field measurement."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bank import build_bank, frame_operators
from .graph import Graph, GraphError, Spectrum, commute_time, spectrum
from .reports import VerifyReport, upper_bound_report

log = logging.getLogger(__name__)

FD_STEP = 1e-4
BOUND_TOL = 1e-8
NORM_TOL = 1e-9

# (sigma, sigma', sigma'') and the sup of |sigma'|
ACTIVATIONS = {
    "identity": (lambda z: z, lambda z: np.ones_like(z), lambda z: np.zeros_like(z), 1.0),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2,
             lambda z: -2.0 * np.tanh(z) * (1.0 - np.tanh(z) ** 2), 1.0),
}
READOUTS = ("sum", "mean", "max")


@dataclass(frozen=True)
class MixingProbe:
    """A depth-``m`` stack ``H_l = sigma(Psi H_{l-1} W_l)`` read out by
    ``readout(H_m theta)``; mixing is measured between nodes ``a`` and ``b``."""
    psi: np.ndarray
    weights: tuple
    theta: np.ndarray
    activation: str = "tanh"
    readout: str = "sum"
    a: int = 0
    b: int = 0
    w: float = 1.0
    c_sigma: float = 1.0
    lemma: tuple | None = None  # (K, C, s) when psi follows the monomial filter model
    graph: Graph | None = None

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
            raise ValueError("psi must be square")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)} (twice differentiable)")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}")
        n = psi.shape[0]
        if not (0 <= self.a < n and 0 <= self.b < n):
            raise ValueError("probe nodes out of range")
        if ACTIVATIONS[self.activation][3] > self.c_sigma + NORM_TOL:
            raise ValueError(f"{self.activation} has |sigma'| up to {ACTIVATIONS[self.activation][3]} > c_sigma")
        weights = tuple(np.atleast_2d(np.asarray(W, dtype=float)) for W in self.weights)
        if not weights:
            raise ValueError("need at least one layer")
        for W in weights:
            if np.linalg.norm(W, 2) > self.w + NORM_TOL:
                raise ValueError(f"weight operator norm {np.linalg.norm(W, 2):.6g} exceeds w={self.w}")
        for W_prev, W_next in zip(weights, weights[1:]):
            if W_prev.shape[1] != W_next.shape[0]:
                raise ValueError("consecutive weight shapes do not chain")
        theta = np.asarray(self.theta, dtype=float).ravel()
        if theta.size != weights[-1].shape[1]:
            raise ValueError("theta length must match the last layer width")
        if np.linalg.norm(theta) > self.w + NORM_TOL:
            raise ValueError("readout vector norm exceeds w")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    def forward(self, X) -> float:
        sigma = ACTIVATIONS[self.activation][0]
        H = np.asarray(X, dtype=float)
        for W in self.weights:
            H = sigma(self.psi @ H @ W)
        out = H @ self.theta
        if self.readout == "sum":
            y = out.sum()
        elif self.readout == "mean":
            y = out.mean()
        else:
            y = out.max()
        return float(y)

    @classmethod
    def random(cls, psi, depth: int, d: int, rng: np.random.Generator, *, activation="tanh",
               readout="sum", a=0, b=0, w=1.0, lemma=None, graph=None) -> "MixingProbe":
        """Gaussian weights rescaled to operator norm ``w * u`` with ``u ~ U(0.3, 1)``."""
        weights = []
        for _ in range(depth):
            W = rng.normal(size=(d, d))
            weights.append(W * (w * rng.uniform(0.3, 1.0) / np.linalg.norm(W, 2)))
        theta = rng.normal(size=d)
        theta *= w * rng.uniform(0.3, 1.0) / np.linalg.norm(theta)
        return cls(psi, tuple(weights), theta, activation, readout, a, b, w, 1.0, lemma, graph)


def _second_difference(f, X0, a, alpha, b, beta, h) -> float:
    def shifted(da, db):
        X = X0.copy()
        X[a, alpha] += da
        X[b, beta] += db
        return f(X)
    vals = (shifted(h, h), shifted(h, -h), shifted(-h, h), shifted(-h, -h))
    if not all(math.isfinite(v) for v in vals):
        raise FloatingPointError("non-finite model output")
    return (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h)


def mixing_hessian(probe: MixingProbe, X0, alpha: int, beta: int, step: float = FD_STEP) -> float:
    """``|d^2 y / dx_a^alpha dx_b^beta|`` at ``X0`` by central second differences."""
    if probe.n > 30:
        raise ValueError("finite-difference mixing limited to n <= 30")
    X0 = np.asarray(X0, dtype=float)
    return abs(_second_difference(probe.forward, X0, probe.a, alpha, probe.b, beta, step))


def measured_mixing(probe: MixingProbe, rng: np.random.Generator | None = None, draws: int = 5,
                    X0s=None) -> float:
    """Max of :func:`mixing_hessian` over all feature pairs and a fixed set of
    Gaussian ``X0`` draws; an under-approximation of the true maximum."""
    if X0s is None:
        rng = np.random.default_rng(0) if rng is None else rng
        X0s = [rng.normal(size=(probe.n, probe.d_in)) for _ in range(draws)]
    best = 0.0
    for X0 in X0s:
        for alpha in range(probe.d_in):
            for beta in range(probe.d_in):
                best = max(best, mixing_hessian(probe, X0, alpha, beta))
    return best


# ------------------------------------------------------ monomial filter model

def lemma_alpha(K: int, C: float) -> float:
    return C * 2.0**K * (K + 1) / math.factorial(K)


def monomial_wavelet(spec: Spectrum, K: int, C: float, s: float) -> np.ndarray:
    """``Psi = U g(s Lambda) U^T`` with ``g(lam) = C lam^K / K!``."""
    return spec.operator(C * (s * spec.eigenvalues) ** K / math.factorial(K))


def lemma_matrix(g: Graph, K: int, C: float, s: float) -> np.ndarray:
    """``alpha * Ahat^{K/2} * s^K`` with ``Ahat`` the normalized adjacency."""
    A = g.normalized_adjacency(sparse=False)
    return lemma_alpha(K, C) * np.linalg.matrix_power(A, K // 2) * s**K


def entry_bound_check(g: Graph, K: int, C: float = 1.0, s: float = 1.0) -> VerifyReport:
    """Strict ``Psi_ij < B_ij`` wherever ``B_ij > 0``; ``measured`` is the
    largest ratio ``Psi_ij / B_ij`` over those entries."""
    if K < 2 or K % 2:
        raise ValueError("K must be even and >= 2")
    if s <= 0 or C <= 0:
        raise ValueError("need s > 0 and C > 0")
    spec = spectrum(g)
    psi = monomial_wavelet(spec, K, C, s)
    B = lemma_matrix(g, K, C, s)
    # structural support from walk counts, so float noise never counts as positive
    walks = np.linalg.matrix_power(g.adjacency(sparse=False).astype(np.int64), K // 2)
    positive = (walks > 0) & (B > 0)
    ratios = np.where(positive, psi / np.where(positive, B, 1.0), -np.inf)
    worst = float(ratios.max()) if positive.any() else -math.inf
    return VerifyReport("lemma_entry_bound", worst, 1.0, bool(worst < 1.0),
                        {"K": K, "C": C, "s": s, "n": g.n, "entries_checked": int(positive.sum()),
                         "ratios": np.where(positive, ratios, np.nan).tolist()})


# ------------------------------------------------------------ mixing bound

def assembled_bound(B, m: int, a: int, b: int) -> float:
    """``sum_{l<m} ((B^{m-l})^T diag(1^T B^l) B^{m-l})_{ab}``."""
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    ones = np.ones(n)
    total = 0.0
    for l in range(m):
        Bp = np.linalg.matrix_power(B, m - l)
        weights = ones @ np.linalg.matrix_power(B, l)
        total += float(Bp[:, a] @ (weights * Bp[:, b]))
    return total


def mixing_bound_check(probe: MixingProbe, B_choice: str = "exact", rng=None, draws: int = 5) -> VerifyReport:
    if probe.c_sigma > 1.0 or probe.w > 1.0:
        raise ValueError("the assembled bound assumes c_sigma <= 1 and w <= 1")
    if B_choice == "exact":
        B = np.abs(probe.psi)
    elif B_choice == "lemma":
        if probe.lemma is None or probe.graph is None:
            raise ValueError("lemma bound needs a probe built from the monomial filter model")
        K, C, s = probe.lemma
        B = lemma_matrix(probe.graph, K, C, s)
    else:
        raise ValueError("B_choice must be 'exact' or 'lemma'")
    measured = measured_mixing(probe, rng, draws)
    bound = assembled_bound(B, probe.depth, probe.a, probe.b)
    return upper_bound_report(
        f"mixing_bound_{B_choice}", measured, bound, BOUND_TOL,
        depth=probe.depth, a=probe.a, b=probe.b, activation=probe.activation,
        readout=probe.readout, slack=bound - measured,
    )


# ------------------------------------------------------------- least depth

def lambda_star_gap(spec: Spectrum) -> float:
    """``|1 - lambda*| = max_{n>=1} |1 - lambda_n|``."""
    return float(np.max(np.abs(1.0 - spec.eigenvalues[1:])))


def depth_rhs(m: int, *, order: float, power: float, tau: float, edges: int, da: float, db: float,
              gamma: float, lam1: float, gap: float, target_mix: float, log_contraction: float) -> float:
    """Right-hand side of the least-depth inequality at depth ``m``.

    ``order`` divides the commute-time and edge terms (``K`` for the wavelet,
    ``P`` for K-hop passing); the gap is raised to ``power * m + 1``; the
    mixing term is divided by ``gamma * exp(m * log_contraction)``, evaluated
    in log space so tiny scales give ``inf`` instead of an overflow."""
    if target_mix > 0:
        log_mix = math.log(target_mix) - math.log(gamma) - m * log_contraction
        mix_term = math.exp(log_mix) if log_mix < 700 else math.inf
    else:
        mix_term = 0.0
    return tau / (2 * order) + 2 * edges / (order * math.sqrt(da * db)) * (
        mix_term - (gamma + gap ** (power * m + 1)) / lam1)


def _smallest_depth(rhs, m_max: int) -> float:
    for m in range(1, m_max + 1):
        if m >= rhs(m):
            return float(m)
    return math.inf


def depth_bound_report(g: Graph, s: float, K: int, target_mix: float, a: int, b: int, *,
                       C: float = 1.0, P: int | None = None, tau_P: float | None = None,
                       m_max: int = 64) -> VerifyReport:
    """Smallest depth ``m`` on ``1..m_max`` satisfying ``m >= RHS(m)``; ``inf``
    when none does. With ``P`` and ``tau_P`` the K-hop comparison depth
    (``B`` replaced by ``(K+1) tau_P A^P``) is reported in the context too."""
    if s <= 0 or K <= 0 or target_mix < 0:
        raise ValueError("need s > 0, K > 0 and target_mix >= 0")
    if not g.is_connected():
        raise GraphError("depth bound needs a connected graph")
    if g.is_bipartite():
        raise GraphError("bipartite graph: |1 - lambda*| = 1, the inequality's strict gap assumption fails")
    spec = spectrum(g)
    deg = np.asarray(g.degrees, dtype=float)
    common = dict(
        tau=commute_time(spec, g.degrees, a, b), edges=len(g.edges), da=deg[a], db=deg[b],
        gamma=math.sqrt(deg.max() / deg.min()), lam1=float(spec.eigenvalues[1]),
        gap=lambda_star_gap(spec), target_mix=target_mix,
    )
    alpha = lemma_alpha(K, C)
    log_c = 2.0 * (math.log(alpha) + K * math.log(s))
    m_psi = _smallest_depth(
        lambda m: depth_rhs(m, order=K, power=K, log_contraction=log_c, **common), m_max)
    context = dict(common, s=s, K=K, C=C, alpha=alpha, m_max=m_max, m_psi=m_psi)
    if P is not None and tau_P is not None:
        if tau_P <= 0 or P <= 0:
            raise ValueError("need P > 0 and tau_P > 0")
        log_c_A = 2.0 * math.log((K + 1) * tau_P)
        context.update(P=P, tau_P=tau_P, m_A=_smallest_depth(
            lambda m: depth_rhs(m, order=P, power=2 * P, log_contraction=log_c_A, **common), m_max))
    return VerifyReport("least_depth", m_psi, math.inf, True, context)


# -------------------------------------------------------- receptive field

def receptive_field(psi, i: int, threshold_frac: float = 0.1) -> set[int]:
    """``{j : |Psi[i, j]| > threshold_frac * max|Psi|}``."""
    if not 0.0 < threshold_frac <= 1.0:
        raise ValueError("threshold_frac must lie in (0, 1]")
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    if not 0 <= i < psi.shape[0]:
        raise ValueError(f"node {i} out of range")
    cutoff = threshold_frac * np.abs(psi).max()
    return {int(j) for j in np.flatnonzero(np.abs(psi[i]) > cutoff)}


@dataclass
class ReceptiveListing:
    node: int
    threshold_frac: float
    fields: dict = field(default_factory=dict)  # scale -> sorted node list

    def sizes(self) -> dict:
        return {s: len(v) for s, v in self.fields.items()}

    def monotone(self) -> bool:
        sizes = [len(self.fields[s]) for s in sorted(self.fields)]
        return all(x <= y for x, y in zip(sizes, sizes[1:]))


def receptive_listing(g: Graph, a, scales, node: int, threshold_frac: float = 0.1,
                      spec: Spectrum | None = None) -> ReceptiveListing:
    """Receptive field of ``node`` under each untight even-term wavelet."""
    spec = spectrum(g) if spec is None else spec
    a = np.atleast_1d(np.asarray(a, dtype=float))
    listing = ReceptiveListing(node, threshold_frac)
    for s in scales:
        bank = build_bank(a, np.ones_like(a), [s], spec, tight=False)
        psi = frame_operators(bank, spec).psi[0]
        listing.fields[float(s)] = sorted(receptive_field(psi, node, threshold_frac))
    if not listing.monotone():
        log.info("receptive field of node %d not monotone in scale: %s", node, listing.sizes())
    return listing


def effective_resistance(g: Graph, a: int, b: int) -> float:
    """``(e_a - e_b)^T L^+ (e_a - e_b)`` with the combinatorial ``L = D - A``."""
    A = g.adjacency(sparse=False)
    Lp = np.linalg.pinv(np.diag(A.sum(axis=1)) - A)
    return float(Lp[a, a] + Lp[b, b] - 2 * Lp[a, b])
