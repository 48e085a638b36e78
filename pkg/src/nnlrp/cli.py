"""Command-line front end: ``nnlrp {info,predict,explain,audit,make-fixture}``.

Exit codes: 0 success, 2 malformed input, 3 model error, 4 invalid rule
policy, 5 conservation tolerance exceeded.
"""
import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import _kernels
from .graph import forward
from .lrp import (AlphaBeta, Epsilon, Flat, RuleAssignment, RuleError, channel_pool,
                  conservation_audit, explain, export_relevance)
from .modelio import ModelFileError, load_model, load_tensor, save_model, save_tensor
from .oversample import CropError, predict_oversampled
from .render import Heatmap, PPMError, ppm_bytes, read_ppm, render, write_image
from .tensor import ShapeError

EXIT_INPUT, EXIT_MODEL, EXIT_RULES, EXIT_TOLERANCE = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    subcommand: str
    model: str = None
    inputs: list = field(default_factory=list)
    target: str = "predicted"
    policy: str = "default"
    epsilon: float = 0.01
    alpha: float = 2.0
    beta: float = -1.0
    flat_depth: int = 1
    pool_epsilon: float = 1e-12
    oversample: bool = False
    crop_fraction: float = 0.875
    out_dir: str = "nnlrp_run"
    seed: int = 0
    n: int = 0
    tolerance: float = 1e-6
    scale: int = 1


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise CliError(EXIT_MODEL, f"model file not found: {path}") from None
    except (ModelFileError, OSError) as exc:
        raise CliError(EXIT_MODEL, f"cannot load model {path}: [{getattr(exc, 'code', 'io')}] {exc}") from None


def load_input(net, path):
    """Read a PPM image (preprocessed per the model) or a raw tensor file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(2)
        if head in (b"P6", b"P3"):
            rgb = read_ppm(path).astype(np.float64)
            img = rgb.transpose(2, 0, 1)
            if net.input_shape[0] == 1:
                img = img.mean(axis=0, keepdims=True)
            pre = net.preprocessing
            img = img * float(pre.get("scale") or 1.0)
            if pre.get("mean") is not None:
                img = img - np.asarray(pre["mean"], dtype=np.float64)[:, None, None]
            x = img
        else:
            x = load_tensor(path)
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"input file not found: {path}") from None
    except (PPMError, ModelFileError, ValueError, OSError) as exc:
        raise CliError(EXIT_INPUT, f"malformed input {path}: {exc}") from None
    return np.ascontiguousarray(x, dtype=np.float64)


def build_rules(net, cfg):
    try:
        if cfg.policy == "default":
            return RuleAssignment.default(net, cfg.epsilon, cfg.alpha, cfg.beta, cfg.flat_depth,
                                          cfg.pool_epsilon)
        rule = {"epsilon": lambda: Epsilon(cfg.epsilon),
                "alphabeta": lambda: AlphaBeta(cfg.alpha, cfg.beta),
                "flat": Flat}[cfg.policy]()
        return RuleAssignment.uniform(net, rule, cfg.pool_epsilon)
    except RuleError as exc:
        raise CliError(EXIT_RULES, f"invalid rule policy: {exc}") from None


def _validate_rules(cfg):
    # fail before touching model or inputs
    try:
        if cfg.policy in ("default", "alphabeta"):
            AlphaBeta(cfg.alpha, cfg.beta)
        if cfg.policy in ("default", "epsilon"):
            Epsilon(cfg.epsilon)
        if cfg.flat_depth < 0:
            raise RuleError("flat depth must be >= 0")
    except RuleError as exc:
        raise CliError(EXIT_RULES, f"invalid rule policy: {exc}") from None


def _write_manifest(cfg, extra):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "engine": f"nnlrp {__version__}",
        "config": asdict(cfg),
        "model_sha256": _sha256(cfg.model) if cfg.model else None,
        "input_sha256": {str(p): _sha256(p) for p in cfg.inputs},
    }
    manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    return f"{v:.17g}"


def _resolve_target(net, trace, target):
    if target == "predicted":
        return int(np.argmax(trace.logits))
    try:
        t = int(target)
    except ValueError:
        raise CliError(EXIT_INPUT, f"target must be an integer or 'predicted', got {target!r}") from None
    if not 0 <= t < net.shapes[net.logit_node][0]:
        raise CliError(EXIT_INPUT, f"target {t} out of range")
    return t


def cmd_info(cfg, out):
    net = _load_model(cfg.model)
    print(net.summary(), file=out)
    print(f"preprocessing {json.dumps(net.preprocessing, sort_keys=True)}", file=out)
    print(f"kernel backend {_kernels.BACKEND}", file=out)
    return 0


def cmd_predict(cfg, out):
    net = _load_model(cfg.model)
    results = {}
    for path in cfg.inputs:
        x = load_input(net, path)
        try:
            if cfg.oversample:
                res = predict_oversampled(net, x, cfg.crop_fraction)
                print(f"# {path} oversampled mean ({res.emitted})", file=out)
                print(" ".join(_fmt(v) for v in res.mean), file=out)
                for (name, top, left, h, w, mirrored), row in zip(res.boxes, res.crops):
                    tag = f"{name}{'_mirrored' if mirrored else ''}"
                    print(f"# crop {tag} at ({top},{left}) {h}x{w}", file=out)
                    print(" ".join(_fmt(v) for v in row), file=out)
                results[str(path)] = {"mean": res.mean.tolist(), "crops": res.crops.tolist(),
                                      "emitted": res.emitted}
            else:
                trace = forward(net, x)
                emitted = "probabilities" if net.logit_node != net.sink else "logits"
                print(f"# {path} ({emitted})", file=out)
                print(" ".join(_fmt(v) for v in trace.output), file=out)
                results[str(path)] = {"scores": trace.output.tolist(), "emitted": emitted}
        except (ShapeError, CropError) as exc:
            raise CliError(EXIT_INPUT, f"{path}: {exc}") from None
    _write_manifest(cfg, {"results": results})
    return 0


def cmd_explain(cfg, out):
    _validate_rules(cfg)
    net = _load_model(cfg.model)
    rules = build_rules(net, cfg)
    if len(cfg.inputs) != 1:
        raise CliError(EXIT_INPUT, "explain takes exactly one input")
    x = load_input(net, cfg.inputs[0])
    try:
        trace = forward(net, x)
    except ShapeError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    target = _resolve_target(net, trace, cfg.target)
    rmap = explain(net, trace, target, rules)
    grid = channel_pool(rmap.input_relevance) if rmap.input_relevance.ndim == 3 \
        else rmap.input_relevance.reshape(1, -1)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_image(render(Heatmap(grid), cfg.scale), outdir / "heatmap.ppm", "PPM")
    write_image(grid, outdir / "heatmap.csv", "CSV")
    export_relevance(rmap, outdir / "relevance")
    (outdir / "ledger.txt").write_text((outdir / "relevance" / "ledger.txt").read_text())
    audit = conservation_audit(rmap, trace)
    _write_manifest(cfg, {"target": target, "anchor": rmap.anchor, "rules": rules.policy,
                          "node_rules": {k: str(v) for k, v in sorted(rules.rules.items())},
                          "input_relevance_sum": audit.input_sum,
                          "absorbed": audit.breakdown()})
    print(f"target {target} score {_fmt(rmap.anchor)} relevance sum {_fmt(audit.input_sum)}", file=out)
    print(f"wrote {outdir}", file=out)
    return 0


def _threads():
    try:
        return max(1, int(os.environ.get("NNLRP_THREADS", "1")))
    except ValueError:
        return 1


def audit_inputs(net, n, seed):
    rng = np.random.default_rng(seed)
    return [rng.normal(size=net.input_shape) for _ in range(n)]


def cmd_audit(cfg, out):
    _validate_rules(cfg)
    net = _load_model(cfg.model)
    rules = build_rules(net, cfg)
    xs = audit_inputs(net, cfg.n, cfg.seed)

    def one(x):
        trace = forward(net, x)
        return conservation_audit(explain(net, trace, int(np.argmax(trace.logits)), rules), trace)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        reports = list(pool.map(one, xs))
    print(f"# audit of {len(reports)} inputs, seed {cfg.seed}, rules {rules.policy}", file=out)
    summary = {"n": len(reports)}
    if reports:
        rel = np.array([r.max_layer_relative_deviation for r in reports])
        glob = np.array([r.global_relative_deviation for r in reports])
        unexplained = np.array([abs(r.unexplained) for r in reports])
        keys = reports[0].breakdown().keys()
        absorbed = {k: float(sum(r.breakdown()[k] for r in reports)) for k in keys}
        per_layer = {}
        for r in reports:
            for row in r.rows:
                dev = abs(row.deviation) / abs(r.anchor) if r.anchor else abs(row.deviation)
                per_layer.setdefault(row.node, []).append(dev)
        print("node\tmax_rel_dev\tmean_rel_dev", file=out)
        for name in net.order[::-1]:
            vals = per_layer.get(name, [0.0])
            print(f"{name}\t{max(vals):.3e}\t{np.mean(vals):.3e}", file=out)
        print(f"max layer deviation {rel.max():.3e} mean {rel.mean():.3e}", file=out)
        print(f"max global deviation {glob.max():.3e} mean {glob.mean():.3e}", file=out)
        print("absorbed " + " ".join(f"{k}={v:.6e}" for k, v in absorbed.items()), file=out)
        print(f"max unexplained after ledger {unexplained.max():.3e}", file=out)
        summary.update(max_layer_relative_deviation=float(rel.max()),
                       mean_layer_relative_deviation=float(rel.mean()),
                       max_global_relative_deviation=float(glob.max()),
                       max_unexplained=float(unexplained.max()), absorbed=absorbed)
    else:
        print("no inputs audited", file=out)
    breach = bool(reports) and summary["max_layer_relative_deviation"] > cfg.tolerance
    summary["tolerance"] = cfg.tolerance
    summary["breach"] = breach
    _write_manifest(cfg, {"audit": summary, "rules": rules.policy})
    if breach:
        print(f"FAIL deviation exceeds tolerance {cfg.tolerance:g}", file=out)
        return EXIT_TOLERANCE
    print(f"OK within tolerance {cfg.tolerance:g}", file=out)
    return 0


def cmd_make_fixture(args, out):
    from . import fixtures
    from .autodiff import accuracy, train_toy
    if args.kind == "quadrant":
        data = fixtures.bright_quadrant(args.seed, n=200)
        net, history = train_toy(fixtures.quadrant_network(args.seed), data, epochs=20,
                                 learning_rate=0.1, seed=args.seed)
        print(f"trained quadrant model, accuracy {accuracy(net, data):.3f}", file=out)
        if args.sample_out:
            img = data[0][0]
            if Path(args.sample_out).suffix.lower() == ".ppm":
                gray = np.clip(np.rint(img[0] * 255), 0, 255).astype(np.uint8)
                Path(args.sample_out).write_bytes(ppm_bytes(np.repeat(gray[:, :, None], 3, axis=2)))
            else:
                save_tensor(img, args.sample_out)
    else:
        rng = np.random.default_rng(args.seed)
        net = fixtures.random_network(rng, bias=args.kind == "random-biased")
    save_model(net, args.out)
    print(f"wrote {args.out}", file=out)
    return 0


def _parser():
    p = argparse.ArgumentParser(prog="nnlrp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, inputs=True):
        sp.add_argument("--model", "-m", required=True)
        if inputs:
            sp.add_argument("--input", "-i", dest="inputs", action="append", required=True)
        sp.add_argument("--out-dir", default="nnlrp_run")

    def rules(sp):
        sp.add_argument("--policy", choices=("default", "alphabeta", "epsilon", "flat"), default="default")
        sp.add_argument("--epsilon", type=float, default=0.01)
        sp.add_argument("--alpha", type=float, default=2.0)
        sp.add_argument("--beta", type=float, default=-1.0)
        sp.add_argument("--flat-depth", type=int, default=1)
        sp.add_argument("--pool-epsilon", type=float, default=1e-12)

    sp = sub.add_parser("info", help="print a model summary")
    sp.add_argument("model")
    sp = sub.add_parser("predict", help="class scores for one or more inputs")
    common(sp)
    sp.add_argument("--oversample", action="store_true")
    sp.add_argument("--crop-fraction", type=float, default=0.875)
    sp = sub.add_parser("explain", help="relevance heatmap for one input")
    common(sp)
    rules(sp)
    sp.add_argument("--target", default="predicted")
    sp.add_argument("--scale", type=int, default=1)
    sp = sub.add_parser("audit", help="conservation audit over seeded random inputs")
    common(sp, inputs=False)
    rules(sp)
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tolerance", type=float, default=1e-6)
    sp = sub.add_parser("make-fixture", help="write a demo model file")
    sp.add_argument("--kind", choices=("quadrant", "random", "random-biased"), default="quadrant")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--sample-out")
    return p


def config_from_args(args):
    known = RunConfig.__dataclass_fields__
    values = {k: v for k, v in vars(args).items() if k in known}
    return RunConfig(**values)


def main(argv=None, out=None):
    out = out or sys.stdout
    args = _parser().parse_args(argv)
    try:
        if args.subcommand == "make-fixture":
            return cmd_make_fixture(args, out)
        cfg = config_from_args(args)
        handler = {"info": cmd_info, "predict": cmd_predict, "explain": cmd_explain,
                   "audit": cmd_audit}[args.subcommand]
        return handler(cfg, out)
    except CliError as exc:
        print(f"nnlrp: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
