"""Undirected graphs, the normalized Laplacian spectrum, and commute times."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

# eigenvalues this close to 0 or 2 are snapped onto the boundary
CLAMP_TOL = 1e-9

GRAPH_KINDS = ("path", "cycle", "complete", "star", "erdos_renyi", "sbm2")


class GraphError(ValueError):
    """Malformed graph input or an operation outside its domain."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    ``edges`` holds each edge once as ``(u, v)`` with ``u < v``, sorted.
    ``labels`` is only populated by label-carrying generators (``sbm2``) or
    via :func:`with_labels`.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    degrees: tuple[int, ...] = field(default=())
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        seen = set()
        deg = [0] * self.n
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={self.n}")
            if u > v:
                raise GraphError(f"edge ({u}, {v}) not in canonical order")
            if (u, v) in seen:
                raise GraphError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            deg[u] += 1
            deg[v] += 1
        if self.degrees and tuple(self.degrees) != tuple(deg):
            raise GraphError("degrees do not match the edge set")
        object.__setattr__(self, "degrees", tuple(deg))
        if self.labels is not None and len(self.labels) != self.n:
            raise GraphError("labels must have one entry per node")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self, sparse: bool = False):
        rows = [u for u, v in self.edges] + [v for u, v in self.edges]
        cols = [v for u, v in self.edges] + [u for u, v in self.edges]
        A = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n)
        )
        return A if sparse else A.toarray()

    def normalized_adjacency(self, sparse: bool = False):
        """``D^{-1/2} A D^{-1/2}``; requires every degree to be positive."""
        self.require_no_isolated()
        inv_sqrt = 1.0 / np.sqrt(np.asarray(self.degrees, dtype=float))
        A = self.adjacency(sparse=True)
        Ahat = sp.diags(inv_sqrt) @ A @ sp.diags(inv_sqrt)
        return Ahat.tocsr() if sparse else Ahat.toarray()

    def laplacian(self, sparse: bool = False):
        """Symmetric normalized Laplacian ``I - D^{-1/2} A D^{-1/2}``."""
        Ahat = self.normalized_adjacency(sparse=True)
        L = sp.identity(self.n, format="csr") - Ahat
        return L.tocsr() if sparse else L.toarray()

    def require_no_isolated(self) -> None:
        for i, d in enumerate(self.degrees):
            if d == 0:
                raise GraphError(f"node {i} is isolated; D^-1/2 is undefined")

    def num_components(self) -> int:
        count, _ = connected_components(self.adjacency(sparse=True), directed=False)
        return int(count)

    def is_connected(self) -> bool:
        return self.num_components() == 1

    def is_bipartite(self) -> bool:
        color = [-1] * self.n
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        for start in range(self.n):
            if color[start] >= 0:
                continue
            color[start] = 0
            stack = [start]
            while stack:
                u = stack.pop()
                for w in nbrs[u]:
                    if color[w] < 0:
                        color[w] = 1 - color[u]
                        stack.append(w)
                    elif color[w] == color[u]:
                        return False
        return True


def from_edges(n: int, pairs, labels=None) -> Graph:
    """Build a graph from arbitrary (possibly repeated, unordered) pairs."""
    canon = set()
    for u, v in pairs:
        u, v = int(u), int(v)
        if u == v:
            raise GraphError(f"self-loop on node {u}")
        canon.add((min(u, v), max(u, v)))
    return Graph(n=n, edges=tuple(sorted(canon)), labels=labels)


def with_labels(g: Graph, labels) -> Graph:
    return Graph(n=g.n, edges=g.edges, labels=tuple(int(x) for x in labels))


def load_edge_list(text: str) -> Graph:
    """Parse ``u v`` lines. ``#`` starts a comment; an optional first
    non-comment line ``n=<int>`` fixes the node count."""
    n_header = None
    pairs = []
    max_id = -1
    first = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if first and line.replace(" ", "").startswith("n="):
            try:
                n_header = int(line.replace(" ", "")[2:])
            except ValueError:
                raise GraphError(f"line {lineno}: bad node-count header {raw!r}") from None
            first = False
            continue
        first = False
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphError(f"line {lineno}: expected two node ids, got {raw!r}")
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphError(f"line {lineno}: non-integer node id in {raw!r}") from None
        if u < 0 or v < 0:
            raise GraphError(f"line {lineno}: negative node id")
        if u == v:
            raise GraphError(f"line {lineno}: self-loop on node {u}")
        pairs.append((u, v))
        max_id = max(max_id, u, v)
    if n_header is not None:
        if max_id >= n_header:
            raise GraphError(f"node id {max_id} exceeds header n={n_header}")
        n = n_header
    else:
        if max_id < 0:
            raise GraphError("edge list is empty and has no n= header")
        n = max_id + 1
    return from_edges(n, pairs)


def dump_edge_list(g: Graph) -> str:
    lines = [f"n={g.n}"] + [f"{u} {v}" for u, v in g.edges]
    return "\n".join(lines) + "\n"


def load_labels(text: str, n: int) -> np.ndarray:
    """Read a ``node,label`` CSV (header optional) into an int vector."""
    labels = np.full(n, -1, dtype=int)
    for row in csv.reader(io.StringIO(text)):
        if not row or row[0].strip().startswith("#"):
            continue
        if row[0].strip() == "node":
            continue
        node, label = int(row[0]), int(row[1])
        if not 0 <= node < n:
            raise GraphError(f"label for unknown node {node}")
        labels[node] = label
    if (labels < 0).any():
        missing = int(np.flatnonzero(labels < 0)[0])
        raise GraphError(f"no label for node {missing}")
    return labels


def dump_labels(labels) -> str:
    out = ["node,label"] + [f"{i},{int(y)}" for i, y in enumerate(labels)]
    return "\n".join(out) + "\n"


def generate_graph(kind: str, seed: int = 0, require_connected: bool = False, **params) -> Graph:
    """Deterministic fixture graphs.

    ``path``/``cycle``/``complete``/``star`` take ``n``; ``erdos_renyi`` takes
    ``n, p``; ``sbm2`` takes ``n, p, q`` and labels the two equal blocks 0/1.
    """
    n = int(params.get("n", 0))
    if n < 1:
        raise GraphError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = None
    if kind == "path":
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        if n < 3:
            raise GraphError("cycle needs n >= 3")
        pairs = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "star":
        pairs = [(0, i) for i in range(1, n)]
    elif kind == "erdos_renyi":
        p = _prob(params, "p")
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(iu.size) < p
        pairs = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    elif kind == "sbm2":
        if n % 2:
            raise GraphError("sbm2 needs an even n (two equal blocks)")
        p, q = _prob(params, "p"), _prob(params, "q")
        block = np.repeat([0, 1], n // 2)
        iu, ju = np.triu_indices(n, 1)
        prob = np.where(block[iu] == block[ju], p, q)
        keep = rng.random(iu.size) < prob
        pairs = list(zip(iu[keep].tolist(), ju[keep].tolist()))
        labels = tuple(int(b) for b in block)
    else:
        raise GraphError(f"unknown graph kind {kind!r}; choose from {GRAPH_KINDS}")
    g = from_edges(n, pairs, labels=labels)
    if require_connected and not g.is_connected():
        raise GraphError(
            f"{kind} fixture with params {params} and seed {seed} is disconnected"
        )
    return g


def _prob(params: dict, key: str) -> float:
    if key not in params:
        raise GraphError(f"missing probability {key!r}")
    value = float(params[key])
    if not 0.0 <= value <= 1.0:
        raise GraphError(f"probability {key}={value} outside [0, 1]")
    return value


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(np.asarray(self.eigenvalues, float)))
        object.__setattr__(self, "eigenvectors", _frozen(np.asarray(self.eigenvectors, float)))

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def zero_multiplicity(self, tol: float = CLAMP_TOL) -> int:
        return int(np.sum(self.eigenvalues <= tol))

    def operator(self, values) -> np.ndarray:
        """``U diag(values) U^T``."""
        U = self.eigenvectors
        return (U * np.asarray(values, float)) @ U.T


def spectrum(g: Graph) -> Spectrum:
    """Dense eigendecomposition of the normalized Laplacian."""
    g.require_no_isolated()
    L = g.laplacian()
    lam, U = np.linalg.eigh(L)
    lam = np.where(np.abs(lam) <= CLAMP_TOL, 0.0, lam)
    lam = np.where(np.abs(lam - 2.0) <= CLAMP_TOL, 2.0, lam)
    return Spectrum(lam, U)


def commute_time(spec: Spectrum, degrees, a: int, b: int) -> float:
    """Expected round-trip time of a random walk between ``a`` and ``b``."""
    deg = np.asarray(degrees, dtype=float)
    n = spec.n
    if not (0 <= a < n and 0 <= b < n):
        raise GraphError(f"nodes ({a}, {b}) out of range for n={n}")
    if spec.zero_multiplicity() > 1:
        raise GraphError("graph is disconnected; commute time is infinite")
    if a == b:
        return 0.0
    lam = spec.eigenvalues
    U = spec.eigenvectors
    keep = lam > CLAMP_TOL
    diff = U[a, keep] / np.sqrt(deg[a]) - U[b, keep] / np.sqrt(deg[b])
    return float(deg.sum() * np.sum(diff**2 / lam[keep]))
