"""Wavelet-head graph convolution with weight-shared matrix kernels.

For head operators ``O_0 = Phi, O_h = Psi_h`` the layer computes::

    Y_h = O_h X
    M_h = Y_h K_h + bias_h          # one d x d kernel shared by every mode
    H'  = act([O_0 M_0 | .. | O_J M_J] W)

``kernel_mode="vector"`` replaces ``K_h`` by a per-feature diagonal.
Every forward function here has a matching ``*_backward`` taking the cache it
returned.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .bank import FrameOperators, bank_backward, operator_backward
from .graph import Graph

ACTIVATIONS = ("identity", "relu", "tanh")
KERNEL_MODES = ("matrix", "vector")
LN_EPS = 1e-5


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class LayerParams:
    head_kernels: np.ndarray  # (J+1, d, d) matrix mode, (J+1, d) vector mode
    biases: np.ndarray  # (J+1, d)
    out_weight: np.ndarray  # ((J+1) d, d_out)
    activation: str = "relu"
    kernel_mode: str = "matrix"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.kernel_mode not in KERNEL_MODES:
            raise ValueError(f"kernel_mode must be one of {KERNEL_MODES}")
        K = np.asarray(self.head_kernels, dtype=float)
        expected_ndim = 3 if self.kernel_mode == "matrix" else 2
        if K.ndim != expected_ndim:
            raise ValueError(f"{self.kernel_mode} kernels need ndim {expected_ndim}, got {K.ndim}")
        heads, d = K.shape[0], K.shape[1]
        if self.kernel_mode == "matrix" and K.shape[2] != d:
            raise ValueError("matrix kernels must be square")
        bias = np.asarray(self.biases, dtype=float)
        W = np.asarray(self.out_weight, dtype=float)
        if bias.shape != (heads, d):
            raise ValueError(f"biases must be {(heads, d)}, got {bias.shape}")
        if W.ndim != 2 or W.shape[0] != heads * d:
            raise ValueError(f"out_weight needs {heads * d} rows, got {W.shape}")
        object.__setattr__(self, "head_kernels", K)
        object.__setattr__(self, "biases", bias)
        object.__setattr__(self, "out_weight", W)

    @property
    def num_heads(self) -> int:
        return self.head_kernels.shape[0]

    @property
    def d(self) -> int:
        return self.head_kernels.shape[1]

    @property
    def J(self) -> int:
        return self.num_heads - 1

    @classmethod
    def identity(cls, d: int, J: int, activation: str = "identity") -> "LayerParams":
        """Identity kernels, zero biases, ``W`` = stacked identities."""
        eye = np.eye(d)
        return cls(np.stack([eye] * (J + 1)), np.zeros((J + 1, d)),
                   np.vstack([eye] * (J + 1)), activation, "matrix")

    @classmethod
    def random(cls, d: int, J: int, rng: np.random.Generator, activation: str = "relu",
               kernel_mode: str = "matrix", d_out: int | None = None) -> "LayerParams":
        d_out = d if d_out is None else d_out
        shape = (J + 1, d, d) if kernel_mode == "matrix" else (J + 1, d)
        kern = rng.normal(scale=1.0 / np.sqrt(d), size=shape)
        if kernel_mode == "vector":
            kern = 1.0 + 0.1 * rng.normal(size=shape)
        W = rng.normal(scale=1.0 / np.sqrt((J + 1) * d), size=((J + 1) * d, d_out))
        return cls(kern, np.zeros((J + 1, d)), W, activation, kernel_mode)

    def matrix_kernels(self) -> np.ndarray:
        """Kernels as (J+1, d, d); vector kernels are embedded as diagonals."""
        if self.kernel_mode == "matrix":
            return self.head_kernels
        return np.stack([np.diag(k) for k in self.head_kernels])

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "J": self.J,
            "kernel_mode": self.kernel_mode,
            "activation": self.activation,
            "head_kernels": self.head_kernels.tolist(),
            "biases": self.biases.tolist(),
            "out_weight": self.out_weight.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LayerParams":
        p = cls(np.array(obj["head_kernels"], float), np.array(obj["biases"], float),
                np.array(obj["out_weight"], float), obj.get("activation", "relu"),
                obj.get("kernel_mode", "matrix"))
        if "d" in obj and int(obj["d"]) != p.d:
            raise ValueError("checkpoint d disagrees with kernel shape")
        if "J" in obj and int(obj["J"]) != p.J:
            raise ValueError("checkpoint J disagrees with head count")
        return p


@dataclass
class GradientBundle:
    d_head_kernels: np.ndarray
    d_biases: np.ndarray
    d_out_weight: np.ndarray
    d_X: np.ndarray
    d_ops: np.ndarray | None = None  # (J+1, n, n), w.r.t. each dense head operator
    d_a: np.ndarray | None = None
    d_b: np.ndarray | None = None
    d_scales: np.ndarray | None = None
    d_scale_logits: np.ndarray | None = None


def _check_layer_inputs(p: LayerParams, ops: FrameOperators, X: np.ndarray) -> None:
    if p.num_heads != ops.J + 1:
        raise ValueError(f"layer has {p.num_heads} heads but the bank has {ops.J + 1} operators")
    if X.ndim != 2 or X.shape[0] != ops.n:
        raise ValueError(f"signal must be {ops.n} x d, got {X.shape}")
    if X.shape[1] != p.d:
        raise ValueError(f"signal width {X.shape[1]} does not match kernel width {p.d}")
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite input signal")


def kernel_apply(p: LayerParams, h: int, Y: np.ndarray) -> np.ndarray:
    if p.kernel_mode == "matrix":
        return Y @ p.head_kernels[h] + p.biases[h]
    return Y * p.head_kernels[h] + p.biases[h]


def layer_forward(p: LayerParams, ops: FrameOperators, X) -> tuple[np.ndarray, dict]:
    X = np.asarray(X, dtype=float)
    _check_layer_inputs(p, ops, X)
    heads = ops.heads()
    Ys = [O @ X for O in heads]
    Ms = [kernel_apply(p, h, Y) for h, Y in enumerate(Ys)]
    C = np.concatenate([O @ M for O, M in zip(heads, Ms)], axis=1)
    Z = C @ p.out_weight
    out = activate(p.activation, Z)
    return out, {"X": X, "Ys": Ys, "Ms": Ms, "C": C, "Z": Z, "heads": heads}


def wavegc_layer(p: LayerParams, ops: FrameOperators, X) -> np.ndarray:
    return layer_forward(p, ops, X)[0]


def layer_backward(p: LayerParams, cache: dict, upstream) -> GradientBundle:
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != cache["Z"].shape:
        raise ValueError(f"upstream must be {cache['Z'].shape}, got {upstream.shape}")
    X, heads, d = cache["X"], cache["heads"], p.d
    dZ = upstream * activation_grad(p.activation, cache["Z"])
    d_W = cache["C"].T @ dZ
    dC = dZ @ p.out_weight.T
    d_K = np.zeros_like(p.head_kernels)
    d_bias = np.zeros_like(p.biases)
    d_X = np.zeros_like(X)
    d_ops = np.zeros((len(heads), X.shape[0], X.shape[0]))
    for h, O in enumerate(heads):
        dP = dC[:, h * d:(h + 1) * d]
        M, Y = cache["Ms"][h], cache["Ys"][h]
        dM = O.T @ dP
        d_bias[h] = dM.sum(axis=0)
        if p.kernel_mode == "matrix":
            d_K[h] = Y.T @ dM
            dY = dM @ p.head_kernels[h].T
        else:
            d_K[h] = np.sum(Y * dM, axis=0)
            dY = dM * p.head_kernels[h]
        d_X += O.T @ dY
        d_ops[h] = dP @ M.T + dY @ X.T
    return GradientBundle(d_K, d_bias, d_W, d_X, d_ops)


def scale_logit_jacobian(scales, s_bar) -> np.ndarray:
    """d s / d z for ``s = sigmoid(z) * s_bar``, written in terms of ``s``."""
    scales = np.asarray(scales, dtype=float)
    return scales * (1.0 - scales / np.asarray(s_bar, dtype=float))


def chain_to_bank(grads: GradientBundle, ops: FrameOperators, s_bar=None) -> GradientBundle:
    """Extend a bundle with gradients on ``a``, ``b``, scales (and scale
    logits when ``s_bar`` is given) through the spectral filter values."""
    if ops.bank is None:
        raise ValueError("operators were not built from a WaveletBank")
    d_h, d_g = operator_backward(ops, grads.d_ops)
    d_a, d_b, d_s = bank_backward(ops.bank, d_h, d_g)
    d_z = None
    if s_bar is not None:
        d_z = d_s * scale_logit_jacobian(ops.bank.scales, s_bar)
    return replace(grads, d_a=d_a, d_b=d_b, d_scales=d_s, d_scale_logits=d_z)


def layer_gradients(p: LayerParams, ops: FrameOperators, X, upstream,
                    bank_params: bool = False, s_bar=None) -> GradientBundle:
    """Reverse-mode gradients of ``<upstream, wavegc_layer(p, ops, X)>``."""
    upstream = np.asarray(upstream, dtype=float)
    if not np.all(np.isfinite(upstream)):
        raise FloatingPointError("non-finite upstream gradient")
    _, cache = layer_forward(p, ops, X)
    grads = layer_backward(p, cache, upstream)
    if bank_params or s_bar is not None:
        grads = chain_to_bank(grads, ops, s_bar)
    return grads


# ---------------------------------------------------------------- layer norm

def layer_norm(X, gain, offset, eps: float = LN_EPS) -> tuple[np.ndarray, tuple]:
    mu = X.mean(axis=1, keepdims=True)
    xc = X - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * gain + offset, (xhat, inv, gain)


def layer_norm_backward(dY, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, gain = cache
    d_gain = np.sum(dY * xhat, axis=0)
    d_offset = dY.sum(axis=0)
    dxhat = dY * gain
    dX = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True))
    return dX, d_gain, d_offset


# -------------------------------------------------------------- hybrid block

@dataclass(frozen=True)
class HybridParams:
    """One message-passing + wavelet block followed by a feedforward stage."""

    layer: LayerParams
    mpnn_weight: np.ndarray  # d x d
    ffn_w1: np.ndarray  # d x f
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray  # f x d
    ffn_b2: np.ndarray
    norm_gain: np.ndarray = field(default=None)  # 3 x d: mpnn, wavelet, output
    norm_offset: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.layer.d
        if self.norm_gain is None:
            object.__setattr__(self, "norm_gain", np.ones((3, d)))
        if self.norm_offset is None:
            object.__setattr__(self, "norm_offset", np.zeros((3, d)))
        if np.shape(self.mpnn_weight) != (d, d):
            raise ValueError("mpnn_weight must be d x d")
        if self.layer.out_weight.shape[1] != d:
            raise ValueError("hybrid block needs a width-preserving wavelet layer")

    @classmethod
    def random(cls, d: int, J: int, rng: np.random.Generator, hidden: int | None = None,
               activation: str = "relu", kernel_mode: str = "matrix") -> "HybridParams":
        hidden = 2 * d if hidden is None else hidden
        return cls(
            layer=LayerParams.random(d, J, rng, activation, kernel_mode),
            mpnn_weight=rng.normal(scale=1.0 / np.sqrt(d), size=(d, d)),
            ffn_w1=rng.normal(scale=1.0 / np.sqrt(d), size=(d, hidden)),
            ffn_b1=np.zeros(hidden),
            ffn_w2=rng.normal(scale=1.0 / np.sqrt(hidden), size=(hidden, d)),
            ffn_b2=np.zeros(d),
        )

    def to_json(self) -> dict:
        out = self.layer.to_json()
        out.update({
            "mpnn_weight": np.asarray(self.mpnn_weight).tolist(),
            "ffn_w1": np.asarray(self.ffn_w1).tolist(),
            "ffn_b1": np.asarray(self.ffn_b1).tolist(),
            "ffn_w2": np.asarray(self.ffn_w2).tolist(),
            "ffn_b2": np.asarray(self.ffn_b2).tolist(),
            "norm_gain": np.asarray(self.norm_gain).tolist(),
            "norm_offset": np.asarray(self.norm_offset).tolist(),
        })
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "HybridParams":
        arr = lambda key: np.array(obj[key], dtype=float)  # noqa: E731
        return cls(LayerParams.from_json(obj), arr("mpnn_weight"), arr("ffn_w1"), arr("ffn_b1"),
                   arr("ffn_w2"), arr("ffn_b2"), arr("norm_gain"), arr("norm_offset"))


@dataclass
class HybridGradients:
    layer: GradientBundle
    mpnn_weight: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    norm_gain: np.ndarray
    norm_offset: np.ndarray
    d_X: np.ndarray


def _maybe_norm(X, p: HybridParams, idx: int, normalize: bool):
    if not normalize:
        return X, None
    return layer_norm(X, p.norm_gain[idx], p.norm_offset[idx])


def hybrid_forward(p: HybridParams, ops: FrameOperators, g: Graph, X, use_mpnn: bool = True,
                   normalize: bool = True) -> tuple[np.ndarray, dict]:
    X = np.asarray(X, dtype=float)
    cache: dict = {"X": X, "use_mpnn": use_mpnn, "normalize": normalize}
    wave, cache["layer"] = layer_forward(p.layer, ops, X)
    B2, cache["ln_wave"] = _maybe_norm(X + wave, p, 1, normalize)
    S = B2
    if use_mpnn:
        Ahat = g.normalized_adjacency(sparse=True)
        AX = Ahat @ X
        B1, cache["ln_mpnn"] = _maybe_norm(X + AX @ p.mpnn_weight, p, 0, normalize)
        cache["Ahat"], cache["AX"] = Ahat, AX
        S = B1 + B2
    pre = S @ p.ffn_w1 + p.ffn_b1
    hidden = np.maximum(pre, 0.0)
    F = hidden @ p.ffn_w2 + p.ffn_b2
    out, cache["ln_out"] = _maybe_norm(S + F, p, 2, normalize)
    cache.update(S=S, pre=pre, hidden=hidden)
    return out, cache


def hybrid_block(p: HybridParams, ops: FrameOperators, g: Graph, X, use_mpnn: bool = True,
                 normalize: bool = True) -> np.ndarray:
    """Parallel message-passing and wavelet branches, each with a skip
    connection and layer norm, summed, then a skip-connected two-layer
    feedforward stage and a final layer norm."""
    return hybrid_forward(p, ops, g, X, use_mpnn, normalize)[0]


def hybrid_backward(p: HybridParams, cache: dict, upstream) -> HybridGradients:
    normalize = cache["normalize"]
    d_gain = np.zeros_like(p.norm_gain)
    d_offset = np.zeros_like(p.norm_offset)

    def norm_back(dY, idx):
        if not normalize:
            return dY
        dX, d_gain[idx], d_offset[idx] = layer_norm_backward(dY, cache[f"ln_{('mpnn', 'wave', 'out')[idx]}"])
        return dX

    d_sum = norm_back(np.asarray(upstream, dtype=float), 2)
    d_w2 = cache["hidden"].T @ d_sum
    d_b2 = d_sum.sum(axis=0)
    d_pre = (d_sum @ p.ffn_w2.T) * (cache["pre"] > 0)
    d_w1 = cache["S"].T @ d_pre
    d_b1 = d_pre.sum(axis=0)
    dS = d_sum + d_pre @ p.ffn_w1.T

    d_wave_in = norm_back(dS, 1)
    layer_grads = layer_backward(p.layer, cache["layer"], d_wave_in)
    d_X = d_wave_in + layer_grads.d_X
    d_mpnn = np.zeros_like(p.mpnn_weight)
    if cache["use_mpnn"]:
        d_mp_in = norm_back(dS, 0)
        d_mpnn = cache["AX"].T @ d_mp_in
        d_X = d_X + d_mp_in + cache["Ahat"].T @ (d_mp_in @ p.mpnn_weight.T)
    return HybridGradients(layer_grads, d_mpnn, d_w1, d_b1, d_w2, d_b2, d_gain, d_offset, d_X)


def save_checkpoint(params: LayerParams | HybridParams, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(params.to_json(), indent=1))


def load_checkpoint(path) -> LayerParams | HybridParams:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if "mpnn_weight" in obj and "ffn_w1" in obj:
        return HybridParams.from_json(obj)
    return LayerParams.from_json(obj)
