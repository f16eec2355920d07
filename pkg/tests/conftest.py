import numpy as np
import pytest

from chebwave.graph import from_edges, generate_graph


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f(x.copy())
        x[idx] = orig - step
        down = f(x.copy())
        x[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    """Max relative error over entries where either side exceeds ``floor``."""
    analytic = np.asarray(analytic, float).ravel()
    numeric = np.asarray(numeric, float).ravel()
    big = np.maximum(np.abs(analytic), np.abs(numeric))
    keep = big > floor
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(analytic[keep] - numeric[keep]) / big[keep]))


def connected_er(n, p, seed):
    """Erdos-Renyi draw made connected by a spanning path over a permutation."""
    rng = np.random.default_rng(seed)
    g = generate_graph("erdos_renyi", n=n, p=p, seed=seed)
    perm = rng.permutation(n)
    extra = [(int(perm[i]), int(perm[i + 1])) for i in range(n - 1)]
    return from_edges(n, list(g.edges) + extra)


def fixture_graphs(max_n=12):
    """Connected fixtures: paths, cycles, complete, stars, and ER draws."""
    out = {}
    for n in range(2, max_n + 1):
        out[f"P{n}"] = generate_graph("path", n=n)
        out[f"K{n}"] = generate_graph("complete", n=n)
        if n >= 3:
            out[f"C{n}"] = generate_graph("cycle", n=n)
            out[f"S{n}"] = generate_graph("star", n=n)
    for seed in range(6):
        out[f"ER{seed}"] = connected_er(max_n, 0.3, seed)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
