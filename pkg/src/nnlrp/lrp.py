"""Layer-wise relevance propagation with a per-step conservation ledger.

Relevance starts at the target's pre-softmax score and is pushed down the
graph node by node.  Parameterized nodes (Convolution, InnerProduct) use an
assigned rule: epsilon, alpha-beta or flat.  All other kinds have a fixed
behaviour.  Whatever a step does not hand down (bias share, stabilizer
share, empty alpha/beta pools, padding positions) is measured and written
to the ledger, so ``anchor == sum(input relevance) + sum(ledger losses)``.
"""
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _kernels as K
from .autodiff import check_target
from .graph import INPUT
from .layers import AvgPool, Concat, Convolution, Flatten, InnerProduct, MaxPool, ReLU, Softmax
from .tensor import ShapeError, signed_stabilizer


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class Epsilon:
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.epsilon > 0:
            raise RuleError(f"epsilon must be positive, got {self.epsilon}")

    def __str__(self):
        return f"epsilon({self.epsilon:g})"


@dataclass(frozen=True)
class AlphaBeta:
    alpha: float = 2.0
    beta: float = -1.0

    def __post_init__(self):
        if not math.isclose(self.alpha + self.beta, 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise RuleError(f"alpha + beta must equal 1, got {self.alpha} + {self.beta}")

    def __str__(self):
        return f"alphabeta({self.alpha:g},{self.beta:g})"


@dataclass(frozen=True)
class Flat:
    def __str__(self):
        return "flat"


@dataclass
class RuleAssignment:
    """Rule per parameterized node plus the avg-pool stabilizer."""

    rules: dict
    pool_epsilon: float = 1e-12
    policy: str = "custom"

    @classmethod
    def default(cls, net, epsilon=0.01, alpha=2.0, beta=-1.0, flat_depth=1, pool_epsilon=1e-12):
        """Epsilon on inner products, alpha-beta on convolutions, flat on the
        ``flat_depth`` convolutions closest to the input."""
        eps_rule, ab_rule = Epsilon(epsilon), AlphaBeta(alpha, beta)
        if flat_depth < 0:
            raise RuleError("flat depth must be >= 0")
        rules, convs = {}, 0
        for node in net:
            if isinstance(node.layer, Convolution):
                rules[node.name] = Flat() if convs < flat_depth else ab_rule
                convs += 1
            elif isinstance(node.layer, InnerProduct):
                rules[node.name] = eps_rule
        policy = f"default(epsilon={epsilon:g}, alpha={alpha:g}, beta={beta:g}, flat_depth={flat_depth})"
        return cls(rules, pool_epsilon, policy)

    @classmethod
    def uniform(cls, net, rule, pool_epsilon=1e-12):
        rules = {node.name: rule for node in net if node.layer.parameterized}
        return cls(rules, pool_epsilon, f"uniform({rule})")


@dataclass
class LedgerRow:
    node: str
    kind: str
    rule: str
    r_out: float
    r_in: float
    bias_absorbed: float = 0.0
    epsilon_absorbed: float = 0.0
    dead_pool: float = 0.0
    padding_discarded: float = 0.0

    @property
    def deviation(self):
        return self.r_out - self.r_in

    @property
    def absorbed(self):
        return self.bias_absorbed + self.epsilon_absorbed + self.dead_pool + self.padding_discarded

    @property
    def unexplained(self):
        return self.deviation - self.absorbed


@dataclass
class RelevanceMap:
    target: int
    anchor: float
    relevance: dict  # node -> tuple of relevance tensors, one per node input
    output_relevance: dict  # node -> relevance at the node output
    input_relevance: np.ndarray
    ledger: list = field(default_factory=list)


@dataclass
class _Step:
    r_in: tuple
    bias_absorbed: float = 0.0
    epsilon_absorbed: float = 0.0
    dead_pool: float = 0.0
    padding_discarded: float = 0.0


def _check_linear(layer):
    if not isinstance(layer, (Convolution, InnerProduct)):
        raise TypeError(f"rule needs a Convolution or InnerProduct, got {layer.kind}")


def _epsilon_step(layer, x, r_out, eps):
    _check_linear(layer)
    z = layer.linear(x) + layer.bias if isinstance(layer, InnerProduct) \
        else layer.linear(x) + layer.bias[:, None, None]
    stab = signed_stabilizer(z, eps)
    denom = z + stab
    live = denom != 0
    s = np.where(live, r_out / np.where(live, denom, 1.0), 0.0)
    r_in = x * layer.linear_t(s, x.shape)
    bias = _bias_like(layer, z)
    return _Step((r_in,), bias_absorbed=float(np.sum(s * bias)),
                 epsilon_absorbed=float(np.sum(s * stab)),
                 dead_pool=float(np.sum(np.where(live, 0.0, r_out))))


def _bias_like(layer, z):
    if isinstance(layer, Convolution):
        return np.broadcast_to(layer.bias[:, None, None], z.shape)
    return layer.bias


def _alphabeta_step(layer, x, r_out, alpha, beta):
    _check_linear(layer)
    if not math.isclose(alpha + beta, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise RuleError(f"alpha + beta must equal 1, got {alpha} + {beta}")
    xp, xn = np.maximum(x, 0.0), np.minimum(x, 0.0)
    wp, wn = np.maximum(layer.weight, 0.0), np.minimum(layer.weight, 0.0)
    bias = _bias_like(layer, layer.linear(x))
    bp, bn = np.maximum(bias, 0.0), np.minimum(bias, 0.0)
    zp = layer.linear(xp, wp) + layer.linear(xn, wn) + bp
    zn = layer.linear(xp, wn) + layer.linear(xn, wp) + bn
    has_p, has_n = zp > 0, zn < 0
    sp = np.where(has_p, alpha * r_out / np.where(has_p, zp, 1.0), 0.0)
    sn = np.where(has_n, beta * r_out / np.where(has_n, zn, 1.0), 0.0)
    shape = x.shape
    r_in = (xp * (layer.linear_t(sp, shape, wp) + layer.linear_t(sn, shape, wn))
            + xn * (layer.linear_t(sp, shape, wn) + layer.linear_t(sn, shape, wp)))
    dead = np.where(has_p, 0.0, alpha * r_out) + np.where(has_n, 0.0, beta * r_out)
    return _Step((r_in,), bias_absorbed=float(np.sum(sp * bp) + np.sum(sn * bn)),
                 dead_pool=float(np.sum(dead)))


def _flat_step(layer, x_shape, r_out):
    _check_linear(layer)
    ones_w = np.ones_like(layer.weight)
    fan_in = layer.weight.size // (layer.out_channels if isinstance(layer, Convolution)
                                   else layer.out_features)
    share = r_out / fan_in
    r_in = layer.linear_t(share, x_shape, ones_w)
    real = layer.linear(np.ones(x_shape), ones_w)  # receptive-field inputs that are not padding
    return _Step((r_in,), padding_discarded=float(np.sum(share * (fan_in - real))))


def epsilon_backward(layer, layer_inputs, r_out, epsilon):
    """Epsilon rule: messages ``x_i w_ij / (z_j + sign(z_j) eps) * R_j``.

    ``z_j`` includes the bias, so bias and stabilizer keep their share.
    ``epsilon=0`` is accepted; neurons with a zero denominator pass nothing.
    """
    return _epsilon_step(layer, _first(layer_inputs), np.asarray(r_out, dtype=np.float64), epsilon).r_in[0]


def alphabeta_backward(layer, layer_inputs, r_out, alpha, beta):
    """Alpha-beta rule: positive and negative contributions redistributed in
    separate pools weighted by ``alpha`` and ``beta``."""
    return _alphabeta_step(layer, _first(layer_inputs), np.asarray(r_out, dtype=np.float64),
                           alpha, beta).r_in[0]


def flat_backward(layer, r_out, input_shape=None):
    """Split each R_j evenly across its receptive field (padding included,
    then dropped)."""
    if input_shape is None:
        if isinstance(layer, InnerProduct):
            input_shape = (layer.in_features,)
        else:
            raise ValueError("convolution needs the input shape")
    return _flat_step(layer, tuple(input_shape), np.asarray(r_out, dtype=np.float64)).r_in[0]


def _first(layer_inputs):
    if isinstance(layer_inputs, (tuple, list)):
        return np.asarray(layer_inputs[0], dtype=np.float64)
    return np.asarray(layer_inputs, dtype=np.float64)


def _fixed_step(layer, xs, r_out, pool_epsilon):
    if isinstance(layer, (ReLU, Softmax)):
        return _Step((r_out.copy(),))
    if isinstance(layer, Flatten):
        return _Step((r_out.reshape(xs[0].shape).copy(),))
    if isinstance(layer, Concat):
        return _Step(layer.split(xs, r_out))
    if isinstance(layer, MaxPool):
        x = xs[0]
        return _Step((K.maxpool2d_scatter(r_out, layer.argmax(x), x.shape[1], x.shape[2]),))
    if isinstance(layer, AvgPool):
        x = xs[0]
        total = K.window_sum(x, layer.window, layer.stride)
        stab = signed_stabilizer(total, pool_epsilon)
        denom = total + stab
        live = denom != 0
        s = np.where(live, r_out / np.where(live, denom, 1.0), 0.0)
        r_in = x * K.window_spread(s, layer.window, layer.stride, x.shape[1], x.shape[2])
        return _Step((r_in,), epsilon_absorbed=float(np.sum(s * stab)),
                     dead_pool=float(np.sum(np.where(live, 0.0, r_out))))
    raise TypeError(f"no fixed relevance behaviour for {layer.kind}")


def fixed_backward(layer, layer_inputs, r_out, pool_epsilon=1e-12):
    """Relevance through ReLU, pooling, Flatten, Concat and Softmax nodes.

    Returns a tuple with one relevance tensor per input of the node.
    """
    xs = tuple(np.asarray(x, dtype=np.float64) for x in layer_inputs)
    return _fixed_step(layer, xs, np.asarray(r_out, dtype=np.float64), pool_epsilon).r_in


def explain(net, trace, target_index, rules=None):
    """Decompose the target score of ``trace`` into input relevance."""
    if trace.net is not net and trace.x.shape != net.input_shape:
        raise ShapeError("trace does not belong to this network", trace.x.shape, net.input_shape)
    missing = [name for name in net.order if name not in trace.outputs]
    if missing:
        raise ValueError(f"trace lacks nodes {missing}")
    target = check_target(net, target_index)
    rules = RuleAssignment.default(net) if rules is None else rules
    for node in net:
        if node.layer.parameterized and node.name not in rules.rules:
            raise RuleError(f"no rule assigned to {node.layer.kind} node {node.name!r}")

    anchor = float(trace.logits[target])
    pending = {net.sink: np.zeros(net.shapes[net.sink])}
    pending[net.sink][target] = anchor
    relevance, out_rel, ledger = {}, {}, []
    for name in reversed(net.order):
        node = net.nodes[name]
        r_out = pending.pop(name, None)
        if r_out is None:
            r_out = np.zeros(net.shapes[name])
        out_rel[name] = r_out
        xs = trace.node_inputs(name)
        layer = node.layer
        if layer.parameterized:
            rule = rules.rules[name]
            if isinstance(rule, Epsilon):
                step = _epsilon_step(layer, xs[0], r_out, rule.epsilon)
            elif isinstance(rule, AlphaBeta):
                step = _alphabeta_step(layer, xs[0], r_out, rule.alpha, rule.beta)
            elif isinstance(rule, Flat):
                step = _flat_step(layer, xs[0].shape, r_out)
            else:
                raise RuleError(f"unknown rule {rule!r} on {name!r}")
            label = str(rule)
        else:
            step = _fixed_step(layer, xs, r_out, rules.pool_epsilon)
            label = layer.kind.lower()
        relevance[name] = step.r_in
        for src, r in zip(node.inputs, step.r_in):
            pending[src] = pending[src] + r if src in pending else r
        ledger.append(LedgerRow(name, layer.kind, label, float(np.sum(r_out)),
                                float(sum(np.sum(r) for r in step.r_in)),
                                step.bias_absorbed, step.epsilon_absorbed,
                                step.dead_pool, step.padding_discarded))
    r_input = pending.pop(INPUT, np.zeros(net.input_shape))
    return RelevanceMap(target, anchor, relevance, out_rel, r_input, ledger)


@dataclass
class AuditReport:
    anchor: float
    input_sum: float
    rows: list

    @property
    def global_deviation(self):
        return abs(self.input_sum - self.anchor)

    @property
    def global_relative_deviation(self):
        return self.global_deviation / abs(self.anchor) if self.anchor else self.global_deviation

    @property
    def max_layer_deviation(self):
        return max((abs(r.deviation) for r in self.rows), default=0.0)

    @property
    def max_layer_relative_deviation(self):
        scale = abs(self.anchor)
        dev = self.max_layer_deviation
        return dev / scale if scale else dev

    @property
    def total_absorbed(self):
        return sum(r.absorbed for r in self.rows)

    @property
    def unexplained(self):
        """Gap left after crediting every ledgered loss."""
        return self.anchor - self.input_sum - self.total_absorbed

    def breakdown(self):
        keys = ("bias_absorbed", "epsilon_absorbed", "dead_pool", "padding_discarded")
        return {k: sum(getattr(r, k) for r in self.rows) for k in keys}


def conservation_audit(rmap, trace=None):
    """Summarize the ledger of ``rmap``; ``trace`` (optional) cross-checks the anchor."""
    if trace is not None and not np.isclose(trace.logits[rmap.target], rmap.anchor, rtol=0, atol=0):
        raise ValueError("relevance map and trace disagree on the target score")
    return AuditReport(rmap.anchor, float(np.sum(rmap.input_relevance)), list(rmap.ledger))


def channel_pool(r_input):
    """Sum relevance over the channel axis of a (C, H, W) tensor."""
    r = np.asarray(r_input, dtype=np.float64)
    if r.ndim != 3:
        raise ShapeError(f"expected (C, H, W) relevance, got {r.shape}", r.shape)
    return r.sum(axis=0)


LEDGER_FIELDS = [f.name for f in fields(LedgerRow)]


def format_ledger(rmap):
    cols = ("node", "kind", "rule", "sum_out", "sum_in", "deviation",
            "bias_absorbed", "eps_absorbed", "dead_pool", "padding", "unexplained")
    lines = [f"# anchor {rmap.anchor!r} target {rmap.target}", "\t".join(cols)]
    for r in rmap.ledger:
        nums = (r.r_out, r.r_in, r.deviation, r.bias_absorbed, r.epsilon_absorbed,
                r.dead_pool, r.padding_discarded, r.unexplained)
        lines.append("\t".join([r.node, r.kind, r.rule] + [f"{v:.17g}" for v in nums]))
    lines.append(f"# input_sum {float(np.sum(rmap.input_relevance))!r}")
    return "\n".join(lines) + "\n"


def export_relevance(rmap, directory):
    """Write per-node relevance tensors and the plain-text ledger."""
    from .modelio import save_tensor
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_tensor(rmap.input_relevance, directory / "input.nnt")
    for name, tensors in rmap.relevance.items():
        for i, r in enumerate(tensors):
            suffix = "" if len(tensors) == 1 else f".{i}"
            save_tensor(r, directory / f"{name}{suffix}.nnt", meta={"node": name, "port": i})
    (directory / "ledger.txt").write_text(format_ledger(rmap))
