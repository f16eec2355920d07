"""Learned wavelet coefficients and scales from an eigenvalue encoding, and a
small full-batch node-classification trainer built on the hybrid block."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .bank import bank_backward, build_bank, frame_operators, operator_backward
from .conv import HybridParams, LayerParams, hybrid_backward, hybrid_forward
from .graph import Graph, Spectrum, spectrum
from .io import atomic_write_text, fmt

log = logging.getLogger(__name__)

DEFAULT_EPS = 100.0


# ------------------------------------------------------------ eigen encoding

@dataclass(frozen=True)
class EigEncoding:
    eps: float
    dim: int
    Z: np.ndarray  # n x (dim + 1): [lam | sin, cos, sin, cos, ..]


def frequencies(eps: float, dim: int) -> np.ndarray:
    return eps / 10000.0 ** (2.0 * np.arange(dim // 2) / dim)


def eig_encode(lambdas, eps: float = DEFAULT_EPS, dim: int = 16) -> EigEncoding:
    if dim < 2 or dim % 2:
        raise ValueError(f"encoding width must be even and >= 2, got {dim}")
    lam = np.asarray(lambdas, dtype=float)
    phase = lam[:, None] * frequencies(eps, dim)[None, :]
    Z = np.empty((lam.size, dim + 1))
    Z[:, 0] = lam
    Z[:, 1::2] = np.sin(phase)
    Z[:, 2::2] = np.cos(phase)
    Z.setflags(write=False)
    return EigEncoding(float(eps), int(dim), Z)


def encode_set(Z, W, c) -> tuple[np.ndarray, tuple]:
    """Residual feedforward over eigenvalue tokens: ``Z + tanh(Z W + c)``."""
    act = np.tanh(Z @ W + c)
    return Z + act, (Z, act)


def encode_set_backward(d_out, cache, W) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Z, act = cache
    d_pre = d_out * (1.0 - act**2)
    return d_out + d_pre @ W.T, Z.T @ d_pre, d_pre.sum(axis=0)


# ---------------------------------------------------------------- heads

@dataclass(frozen=True)
class HeadParams:
    W_a: np.ndarray
    b_a: np.ndarray
    W_b: np.ndarray
    b_b: np.ndarray
    W_s: np.ndarray
    b_s: np.ndarray
    s_bar: np.ndarray

    def __post_init__(self):
        s_bar = np.asarray(self.s_bar, dtype=float)
        if np.any(s_bar <= 0):
            raise ValueError("s_bar must be strictly positive")
        object.__setattr__(self, "s_bar", s_bar)

    @classmethod
    def random(cls, width: int, rho: int, s_bar, rng: np.random.Generator, scale: float = 0.1) -> "HeadParams":
        J = len(s_bar)
        return cls(
            rng.normal(scale=scale, size=(width, rho)), np.ones(rho),
            rng.normal(scale=scale, size=(width, rho)), np.ones(rho),
            rng.normal(scale=scale, size=(width, J)), np.zeros(J), np.asarray(s_bar, float),
        )


def bounded_scales(logits, s_bar) -> np.ndarray:
    """``sigmoid(logits) * s_bar`` kept strictly inside ``(0, s_bar)`` even
    where the float sigmoid saturates."""
    s_bar = np.asarray(s_bar, dtype=float)
    sig = np.clip(expit(logits), np.finfo(float).tiny, np.nextafter(1.0, 0.0))
    return np.clip(sig * s_bar, np.finfo(float).tiny, np.nextafter(s_bar, 0.0))


def adapt_params(Zhat, p: HeadParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-mean affine heads: coefficients ``a``, ``b`` and scales in
    ``(0, s_bar)``."""
    a, b, logits = head_forward(Zhat, p)
    return a, b, bounded_scales(logits, p.s_bar)


def head_forward(Zhat, p: HeadParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Zhat = np.asarray(Zhat, dtype=float)
    if Zhat.ndim != 2 or Zhat.shape[1] != p.W_a.shape[0]:
        raise ValueError(f"encoding width {Zhat.shape} does not match heads {p.W_a.shape}")
    m = Zhat.mean(axis=0)
    return m @ p.W_a + p.b_a, m @ p.W_b + p.b_b, m @ p.W_s + p.b_s


def head_backward(Zhat, p: HeadParams, d_a, d_b, d_logits) -> tuple[dict, np.ndarray]:
    m = Zhat.mean(axis=0)
    grads = {
        "W_a": np.outer(m, d_a), "b_a": np.asarray(d_a, float),
        "W_b": np.outer(m, d_b), "b_b": np.asarray(d_b, float),
        "W_s": np.outer(m, d_logits), "b_s": np.asarray(d_logits, float),
    }
    d_m = p.W_a @ d_a + p.W_b @ d_b + p.W_s @ d_logits
    d_Zhat = np.broadcast_to(d_m / Zhat.shape[0], Zhat.shape).copy()
    return grads, d_Zhat


# ---------------------------------------------------------------- training

class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    lr: float = 0.01
    epochs: int = 300
    rho: int = 3
    J: int = 3
    s_bar: list = field(default_factory=lambda: [0.5, 1.0, 10.0])
    features: str = "onehot"  # used when a dataset is built without explicit features
    feature_dim: int = 16
    eps: float = DEFAULT_EPS
    dim: int = 16
    tight: bool = True
    kernel_mode: str = "matrix"
    threshold: float | None = None
    hidden: int = 16
    use_mpnn: bool = True
    weight_decay: float = 5e-4
    dropout: float = 0.5
    split: list = field(default_factory=lambda: [0.5, 0.25, 0.25])

    def __post_init__(self):
        if len(self.s_bar) != self.J:
            raise ValueError(f"s_bar has {len(self.s_bar)} entries but J={self.J}")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("need epochs >= 0 and lr > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            return cls.from_dict(tomllib.loads(text))
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class NodeDataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            if len(getattr(self, name)) == 0:
                raise TrainingError(f"{name} split is empty")
        if self.features.shape[0] != self.graph.n or len(self.labels) != self.graph.n:
            raise ValueError("features and labels need one row per node")


def split_nodes(labels, fractions=(0.5, 0.25, 0.25), seed: int = 0):
    """Stratified train/val/test index split."""
    labels = np.asarray(labels)
    fr = np.asarray(fractions, dtype=float)
    fr = fr / fr.sum()
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[], [], []]
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_tr = int(round(fr[0] * idx.size))
        n_va = int(round(fr[1] * idx.size))
        parts[0] += idx[:n_tr].tolist()
        parts[1] += idx[n_tr:n_tr + n_va].tolist()
        parts[2] += idx[n_tr + n_va:].tolist()
    return tuple(np.sort(np.array(p, dtype=int)) for p in parts)


def make_dataset(g: Graph, features, labels, fractions=(0.5, 0.25, 0.25), seed: int = 0) -> NodeDataset:
    train, val, test = split_nodes(labels, fractions, seed)
    return NodeDataset(g, np.asarray(features, float), np.asarray(labels, int), train, val, test)


def gaussian_features(n: int, width: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=(n, width))


def default_features(n: int, config: "TrainConfig") -> np.ndarray:
    """Label-free node features: one-hot node identity or iid Gaussian."""
    if config.features == "onehot":
        return np.eye(n)
    if config.features == "gaussian":
        return gaussian_features(n, config.feature_dim, config.seed)
    raise ValueError(f"unknown feature kind {config.features!r}")


class ToyModel:
    """Encoder -> heads -> bank -> input projection -> hybrid block -> linear
    classifier, with all parameters in one flat dict."""

    def __init__(self, params: dict, config: TrainConfig, n_classes: int):
        self.params = params
        self.config = config
        self.n_classes = n_classes

    @classmethod
    def init(cls, config: TrainConfig, n_features: int, n_classes: int) -> "ToyModel":
        rng = np.random.default_rng(config.seed)
        d, D = config.hidden, config.dim + 1
        heads = HeadParams.random(D, config.rho, config.s_bar, rng)
        block = HybridParams.random(d, config.J, rng, kernel_mode=config.kernel_mode)
        p = {
            "enc_W": rng.normal(scale=0.1, size=(D, D)), "enc_c": np.zeros(D),
            "W_a": heads.W_a, "b_a": heads.b_a, "W_b": heads.W_b, "b_b": heads.b_b,
            "W_s": heads.W_s, "b_s": heads.b_s,
            "in_W": rng.normal(scale=1.0 / np.sqrt(n_features), size=(n_features, d)),
            "in_c": np.zeros(d),
            "kernels": block.layer.head_kernels, "kernel_bias": block.layer.biases,
            "out_weight": block.layer.out_weight, "mpnn_weight": block.mpnn_weight,
            "ffn_w1": block.ffn_w1, "ffn_b1": block.ffn_b1, "ffn_w2": block.ffn_w2, "ffn_b2": block.ffn_b2,
            "norm_gain": block.norm_gain, "norm_offset": block.norm_offset,
            "cls_W": rng.normal(scale=1.0 / np.sqrt(d), size=(d, n_classes)), "cls_c": np.zeros(n_classes),
        }
        return cls(p, config, n_classes)

    def head_params(self) -> HeadParams:
        p = self.params
        return HeadParams(p["W_a"], p["b_a"], p["W_b"], p["b_b"], p["W_s"], p["b_s"], self.config.s_bar)

    def block_params(self) -> HybridParams:
        p = self.params
        layer = LayerParams(p["kernels"], p["kernel_bias"], p["out_weight"], "relu", self.config.kernel_mode)
        return HybridParams(layer, p["mpnn_weight"], p["ffn_w1"], p["ffn_b1"], p["ffn_w2"], p["ffn_b2"],
                            p["norm_gain"], p["norm_offset"])

    def forward(self, spec: Spectrum, g: Graph, X, enc: EigEncoding, masks=None):
        """``masks`` holds inverted-dropout multipliers for the projected
        input and the classifier input; ``None`` means evaluation mode."""
        p = self.params
        m_in, m_out = masks if masks is not None else (1.0, 1.0)
        Zhat, enc_cache = encode_set(enc.Z, p["enc_W"], p["enc_c"])
        heads = self.head_params()
        a, b, logits = head_forward(Zhat, heads)
        scales = bounded_scales(logits, heads.s_bar)
        bank = build_bank(a, b, scales, spec, tight=self.config.tight)
        ops = frame_operators(bank, spec, self.config.threshold)
        block = self.block_params()
        H0 = (X @ p["in_W"] + p["in_c"]) * m_in
        H1, block_cache = hybrid_forward(block, ops, g, H0, use_mpnn=self.config.use_mpnn)
        H1d = H1 * m_out
        out = H1d @ p["cls_W"] + p["cls_c"]
        cache = dict(Zhat=Zhat, enc_cache=enc_cache, heads=heads, ops=ops, block=block,
                     block_cache=block_cache, X=X, H1d=H1d, scales=scales, masks=(m_in, m_out))
        return out, cache

    def loss_and_grads(self, spec, g, X, enc, labels, nodes, masks=None):
        logits, cache = self.forward(spec, g, X, enc, masks)
        logp = log_softmax(logits[nodes], axis=1)
        loss = -float(np.mean(logp[np.arange(nodes.size), labels[nodes]]))
        d_logits = np.zeros_like(logits)
        prob = softmax(logits[nodes], axis=1)
        prob[np.arange(nodes.size), labels[nodes]] -= 1.0
        d_logits[nodes] = prob / nodes.size
        grads = self.backward(cache, d_logits)
        return loss, logits, grads

    def backward(self, cache, d_logits) -> dict:
        p = self.params
        m_in, m_out = cache["masks"]
        grads = {"cls_W": cache["H1d"].T @ d_logits, "cls_c": d_logits.sum(axis=0)}
        bg = hybrid_backward(cache["block"], cache["block_cache"], (d_logits @ p["cls_W"].T) * m_out)
        d_H0 = bg.d_X * m_in
        grads.update(
            kernels=bg.layer.d_head_kernels, kernel_bias=bg.layer.d_biases, out_weight=bg.layer.d_out_weight,
            mpnn_weight=bg.mpnn_weight, ffn_w1=bg.ffn_w1, ffn_b1=bg.ffn_b1, ffn_w2=bg.ffn_w2, ffn_b2=bg.ffn_b2,
            norm_gain=bg.norm_gain, norm_offset=bg.norm_offset,
            in_W=cache["X"].T @ d_H0, in_c=d_H0.sum(axis=0),
        )
        ops, heads = cache["ops"], cache["heads"]
        d_h, d_g = operator_backward(ops, bg.layer.d_ops)
        d_a, d_b, d_s = bank_backward(ops.bank, d_h, d_g)
        d_logit_s = d_s * cache["scales"] * (1.0 - cache["scales"] / heads.s_bar)
        head_grads, d_Zhat = head_backward(cache["Zhat"], heads, d_a, d_b, d_logit_s)
        grads.update(head_grads)
        _, grads["enc_W"], grads["enc_c"] = encode_set_backward(d_Zhat, cache["enc_cache"], p["enc_W"])
        return grads

    def to_json(self) -> dict:
        out = self.block_params().to_json()
        out.update({
            "n_classes": self.n_classes,
            "config": asdict(self.config),
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
        })
        return out


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.b1, self.b2, self.eps, self.wd = lr, beta1, beta2, eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k, w in params.items():
            g = grads[k] + self.wd * w
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            m_hat = self.m[k] / (1 - self.b1**self.t)
            v_hat = self.v[k] / (1 - self.b2**self.t)
            out[k] = w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass
class TrainResult:
    history: list  # rows (epoch, loss, train_acc, val_acc, test_acc)
    model: ToyModel

    @property
    def final(self) -> dict:
        epoch, loss, tr, va, te = self.history[-1]
        return {"epoch": epoch, "loss": loss, "train_acc": tr, "val_acc": va, "test_acc": te}

    def metrics_csv(self) -> str:
        lines = ["epoch,loss,train_acc,val_acc,test_acc"]
        for epoch, loss, tr, va, te in self.history:
            lines.append(f"{epoch},{fmt(loss)},{fmt(tr)},{fmt(va)},{fmt(te)}")
        return "\n".join(lines) + "\n"


def _accuracy(pred, labels, nodes) -> float:
    return float(np.mean(pred[nodes] == labels[nodes]))


def _dropout_masks(rng: np.random.Generator, rate: float, n: int, d: int):
    if rate == 0.0:
        return None
    keep = 1.0 - rate
    return tuple((rng.random((n, d)) < keep) / keep for _ in range(2))


def train_toy(data: NodeDataset, config: TrainConfig, spec: Spectrum | None = None) -> TrainResult:
    """Full-batch Adam on the training-node cross-entropy."""
    spec = spectrum(data.graph) if spec is None else spec
    classes, labels = np.unique(data.labels, return_inverse=True)
    enc = eig_encode(spec.eigenvalues, config.eps, config.dim)
    model = ToyModel.init(config, data.features.shape[1], classes.size)
    opt = Adam(model.params, config.lr, weight_decay=config.weight_decay)
    history = []
    last_finite = None
    drop_rng = np.random.default_rng([config.seed, 1])
    n, d = data.graph.n, config.hidden
    for epoch in range(config.epochs + 1):
        masks = _dropout_masks(drop_rng, config.dropout, n, d)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, _, grads = model.loss_and_grads(spec, data.graph, data.features, enc, labels,
                                                      data.train, masks)
        except FloatingPointError as exc:
            raise TrainingError(f"non-finite values at epoch {epoch} ({exc}); "
                                f"last finite loss {last_finite}") from exc
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}; last finite loss {last_finite}")
        last_finite = loss
        logits, _ = model.forward(spec, data.graph, data.features, enc)
        pred = np.argmax(logits, axis=1)
        history.append((epoch, loss, _accuracy(pred, labels, data.train),
                        _accuracy(pred, labels, data.val), _accuracy(pred, labels, data.test)))
        if epoch == config.epochs:
            break
        model.params = opt.step(model.params, grads)
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.6f", epoch, loss)
    return TrainResult(history, model)


def save_training(result: TrainResult, metrics_path, checkpoint_path) -> None:
    atomic_write_text(metrics_path, result.metrics_csv())
    atomic_write_text(checkpoint_path, json.dumps(result.model.to_json()))
