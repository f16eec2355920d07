"""``chebwave`` command line.

Exit codes: 0 success, 1 input or domain error, 2 usage error, 3 a checked
bound or tolerance failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import adaptive, fastpath, theory
from .bank import (
    ContractError, WaveletBank, build_bank, forward_transform, frame_function,
    frame_identity_error, frame_operators, inverse_transform,
)
from .conv import HybridParams, LayerParams, hybrid_block, load_checkpoint, wavegc_layer
from .graph import Graph, GraphError, generate_graph, load_edge_list, load_labels, spectrum
from .io import atomic_write_text, csv_to_matrix, dumps, fmt, matrix_to_csv
from .presets import get_preset
from .reports import VerifyReport, reports_to_json, upper_bound_report

log = logging.getLogger("chebwave")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3


class InputError(Exception):
    """Bad or unreadable input file."""


# ---------------------------------------------------------------- helpers

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _emit(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _parse_gen(spec: str) -> Graph:
    """``kind:key=val,key=val`` such as ``sbm2:n=60,p=0.5,q=0.05,seed=7``."""
    kind, _, rest = spec.partition(":")
    params: dict = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise GraphError(f"bad generator parameter {item!r}")
        params[key.strip()] = float(val) if any(c in val for c in ".eE") else int(val)
    seed = int(params.pop("seed", 0))
    return generate_graph(kind.strip(), seed=seed, **params)


def load_graph(args) -> Graph:
    if args.graph and args.gen:
        raise GraphError("give either --graph or --gen, not both")
    if args.graph:
        return load_edge_list(_read(args.graph))
    if args.gen:
        return _parse_gen(args.gen)
    raise GraphError("a graph is required (--graph FILE or --gen KIND:params)")


def load_features(args, n: int, default_width: int = 1) -> np.ndarray:
    if getattr(args, "features", None):
        try:
            X = csv_to_matrix(_read(args.features))
        except ValueError as exc:
            raise InputError(f"{args.features}: {exc}") from exc
        if X.shape[0] != n:
            raise InputError(f"{args.features}: {X.shape[0]} rows for {n} nodes")
        return X
    rng = np.random.default_rng(args.seed)
    return rng.normal(size=(n, default_width))


def bank_settings(args) -> dict:
    """Bank coefficients from --bank JSON, a preset, or explicit flags."""
    if getattr(args, "bank", None):
        obj = json.loads(_read(args.bank))
        return {"a": obj["a"], "b": obj["b"], "scales": obj["scales"],
                "tight": bool(obj.get("tight", True)), "threshold": obj.get("threshold")}
    out = {"a": args.a, "b": args.b, "scales": args.scales, "tight": args.tight, "threshold": args.threshold}
    if args.preset:
        p = get_preset(args.preset)
        out["a"] = out["a"] or [1.0] * p.rho
        out["b"] = out["b"] or [1.0] * p.rho
        out["scales"] = out["scales"] or list(p.s_bar)
        if args.tight is None:
            out["tight"] = p.tight
        if args.threshold is None:
            out["threshold"] = p.threshold
    out["a"] = out["a"] or [1.0]
    out["b"] = out["b"] or [1.0] * len(out["a"])
    out["scales"] = out["scales"] or [1.0]
    if out["tight"] is None:
        out["tight"] = True
    return out


def make_bank(args, spec) -> WaveletBank:
    cfg = bank_settings(args)
    return build_bank(cfg["a"], cfg["b"], cfg["scales"], spec, tight=cfg["tight"], threshold=cfg["threshold"])


# ------------------------------------------------------------- subcommands

def cmd_spectrum(args) -> int:
    g = load_graph(args)
    spec = spectrum(g)
    bank = make_bank(args, spec)
    header = ["lambda", "h"] + [f"g{j + 1}" for j in range(bank.J)] + ["G"]
    M = np.column_stack([spec.eigenvalues, bank.h_vals, bank.g_vals.T, frame_function(bank)])
    _emit(args.out, matrix_to_csv(M, header, preamble=[f"# n={g.n}"]))
    return EXIT_OK


def cmd_bank(args) -> int:
    g = load_graph(args)
    bank = make_bank(args, spectrum(g))
    obj = bank.to_json()
    obj["degenerate_modes"] = list(bank.degenerate_modes)
    _emit(args.out, dumps(obj))
    return EXIT_OK


def cmd_transform(args) -> int:
    g = load_graph(args)
    spec = spectrum(g)
    ops = frame_operators(make_bank(args, spec), spec)
    X = load_features(args, g.n, args.width)
    C = forward_transform(ops, X)
    _emit(args.out, matrix_to_csv(C, preamble=[f"# n={g.n} heads={ops.J + 1}"]))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    g = load_graph(args)
    spec = spectrum(g)
    ops = frame_operators(make_bank(args, spec), spec)
    try:
        C = csv_to_matrix(_read(args.coeffs))
    except ValueError as exc:
        raise InputError(f"{args.coeffs}: {exc}") from exc
    _emit(args.out, matrix_to_csv(inverse_transform(ops, C), preamble=[f"# n={g.n}"]))
    return EXIT_OK


def cmd_convolve(args) -> int:
    g = load_graph(args)
    spec = spectrum(g)
    bank = make_bank(args, spec)
    ops = frame_operators(bank, spec)
    if args.checkpoint:
        try:
            params = load_checkpoint(args.checkpoint)
        except OSError as exc:
            raise InputError(f"cannot read {args.checkpoint}: {exc}") from exc
        d = params.layer.d if isinstance(params, HybridParams) else params.d
    else:
        d = args.width
        rng = np.random.default_rng(args.seed)
        if args.hybrid:
            params = HybridParams.random(d, bank.J, rng, activation=args.activation)
        else:
            params = LayerParams.random(d, bank.J, rng, activation=args.activation)
    X = load_features(args, g.n, d)
    out = hybrid_block(params, ops, g, X) if isinstance(params, HybridParams) else wavegc_layer(params, ops, X)
    _emit(args.out, matrix_to_csv(out, preamble=[f"# n={g.n}"]))
    return EXIT_OK


def _verify_reports(args, g: Graph) -> list[VerifyReport]:
    spec = spectrum(g)
    bank = make_bank(args, spec)
    reports = []
    checks = set(args.checks)
    if "frame" in checks:
        if bank.tight:
            ops = frame_operators(bank, spec, threshold=0.0)
            err = frame_identity_error(ops)
            reports.append(upper_bound_report("frame_identity", err, 1e-8, tight=True,
                                              degenerate_modes=list(bank.degenerate_modes)))
        else:
            reports.append(VerifyReport("frame_identity", float("nan"), 1e-8, True,
                                        {"tight": False, "note": "untight bank, not asserted"}))
    if "lemma" in checks:
        for K in args.K:
            reports.append(theory.entry_bound_check(g, K, 1.0, args.s))
    if "mixing" in checks:
        rng = np.random.default_rng(args.seed)
        ops = frame_operators(bank, spec)
        for j, psi in enumerate(ops.psi):
            for _ in range(args.probes):
                probe = theory.MixingProbe.random(psi, int(rng.integers(1, 4)), 2, rng,
                                                  a=int(rng.integers(g.n)), b=int(rng.integers(g.n)))
                rep = theory.mixing_bound_check(probe, "exact", rng)
                reports.append(VerifyReport(rep.name, rep.measured, rep.bound, rep.passed,
                                            dict(rep.context, wavelet=j)))
    if "depth" in checks:
        reports.append(theory.depth_bound_report(g, args.s, args.K[0], args.target_mix, args.node_a, args.node_b))
    if "commute" in checks:
        from .graph import commute_time
        tau = commute_time(spec, g.degrees, args.node_a, args.node_b)
        oracle = 2 * len(g.edges) * theory.effective_resistance(g, args.node_a, args.node_b)
        rel = abs(tau - oracle) / max(abs(oracle), 1e-300)
        reports.append(upper_bound_report("commute_time", rel, 1e-6, spectral=tau, oracle=oracle))
    return reports


def cmd_verify(args) -> int:
    g = load_graph(args)
    reports = _verify_reports(args, g)
    _emit(args.out, reports_to_json(reports))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_approx(args) -> int:
    g = load_graph(args)
    cfg = bank_settings(args)
    X = load_features(args, g.n, args.width)
    window = fastpath.WindowConfig(degree=args.degree, taper=args.taper, tol=args.tol)
    rep = fastpath.compare_paths(g, cfg, X, window)
    obj = rep.to_json()
    obj["heads"] = obj["context"].pop("heads")
    obj["deviation"] = rep.measured
    _emit(args.out, dumps(obj))
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_train(args) -> int:
    cfg = adaptive.TrainConfig.load(args.config) if args.config else adaptive.TrainConfig()
    overrides = {k: getattr(args, k) for k in ("epochs", "lr") if getattr(args, k) is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = adaptive.TrainConfig.from_dict({**cfg.__dict__, **overrides})
    g = load_graph(args)
    if args.labels:
        labels = load_labels(_read(args.labels), g.n)
    elif g.labels is not None:
        labels = np.asarray(g.labels)
    else:
        raise InputError("no labels: pass --labels or use a labelled generator")
    if args.features:
        X = load_features(args, g.n)
    else:
        X = adaptive.default_features(g.n, cfg)
    data = adaptive.make_dataset(g, X, labels, cfg.split, seed=cfg.seed)
    result = adaptive.train_toy(data, cfg)
    adaptive.save_training(result, args.metrics, args.checkpoint_out)
    final = result.final
    print(f"epoch {final['epoch']} loss {fmt(final['loss'])} train {fmt(final['train_acc'])} "
          f"val {fmt(final['val_acc'])} test {fmt(final['test_acc'])}")
    return EXIT_OK


def cmd_rf(args) -> int:
    g = load_graph(args)
    cfg = bank_settings(args)
    listing = theory.receptive_listing(g, cfg["a"], cfg["scales"], args.node, args.frac)
    lines = [f"# node={args.node} threshold_frac={fmt(args.frac)} monotone={str(listing.monotone()).lower()}"]
    for s, nodes in listing.fields.items():
        lines.append(f"scale={fmt(s)} size={len(nodes)} nodes={' '.join(map(str, nodes))}")
    _emit(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ----------------------------------------------------------------- parser

def _graph_args(p):
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--gen", help="generator, e.g. path:n=10 or sbm2:n=60,p=0.5,q=0.05,seed=7")


def _bank_args(p):
    p.add_argument("--bank", help="bank JSON (overrides the coefficient flags)")
    p.add_argument("--preset", help="named hyperparameter preset")
    p.add_argument("--a", type=_floats, help="even-term coefficients")
    p.add_argument("--b", type=_floats, help="odd-term coefficients")
    p.add_argument("--scales", type=_floats, help="wavelet scales")
    p.add_argument("--tight", dest="tight", action="store_true", default=None)
    p.add_argument("--no-tight", dest="tight", action="store_false")
    p.add_argument("--threshold", type=float, help="zero operator entries below this magnitude")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chebwave", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, *, graph=True, bank=True, out=True, features=False):
        p = sub.add_parser(name, help=help_text)
        if graph:
            _graph_args(p)
        if bank:
            _bank_args(p)
        if out:
            p.add_argument("--out", default="-", help="output file ('-' for stdout)")
        if features:
            p.add_argument("--features", help="node feature CSV (n rows)")
            p.add_argument("--width", type=int, default=4, help="random feature width when no CSV is given")
        p.add_argument("--seed", type=int, default=0 if name != "train" else None)
        p.set_defaults(func=func)
        return p

    add("spectrum", cmd_spectrum, "filter values per eigenvalue as CSV")
    add("bank", cmd_bank, "bank parameters as JSON")
    add("transform", cmd_transform, "stacked frame coefficients", features=True)
    p = add("reconstruct", cmd_reconstruct, "inverse transform of a coefficient CSV")
    p.add_argument("--coeffs", required=True)
    p = add("convolve", cmd_convolve, "apply one wavelet layer or hybrid block", features=True)
    p.add_argument("--checkpoint", help="layer or hybrid parameter JSON")
    p.add_argument("--hybrid", action="store_true", help="random hybrid block instead of a bare layer")
    p.add_argument("--activation", default="relu", choices=["relu", "tanh", "identity"])
    p = add("verify", cmd_verify, "numerical checks as a JSON array")
    p.add_argument("--checks", type=lambda t: t.split(","), default=["frame"],
                   help="comma list from frame,lemma,mixing,depth,commute")
    p.add_argument("--K", type=lambda t: [int(x) for x in t.split(",")], default=[2, 4, 6])
    p.add_argument("--s", type=float, default=1.0, help="scale for lemma and depth checks")
    p.add_argument("--probes", type=int, default=5, help="random mixing probes per wavelet")
    p.add_argument("--target-mix", type=float, default=0.1)
    p.add_argument("--node-a", type=int, default=0)
    p.add_argument("--node-b", type=int, default=1)
    p = add("approx", cmd_approx, "polynomial vs spectral path deviation", features=True)
    p.add_argument("--degree", type=int, default=60)
    p.add_argument("--taper", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=5e-2)
    p = add("train", cmd_train, "train the toy node classifier", bank=False, out=False)
    p.add_argument("--config", help="JSON or TOML training config")
    p.add_argument("--features")
    p.add_argument("--labels", help="node,label CSV")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--metrics", required=True, help="metrics CSV output")
    p.add_argument("--checkpoint-out", required=True, help="checkpoint JSON output")
    p = add("rf", cmd_rf, "receptive-field listing per scale")
    p.add_argument("--node", type=int, required=True)
    p.add_argument("--frac", type=float, default=0.1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"chebwave: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (GraphError, ContractError, adaptive.TrainingError, ValueError, KeyError) as exc:
        print(f"chebwave: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
