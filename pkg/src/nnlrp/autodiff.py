"""Reverse-mode gradients over a forward trace, plus a tiny SGD trainer."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import INPUT, forward
from .layers import Softmax

log = logging.getLogger(__name__)


class TargetError(IndexError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class GradientTape:
    """Adjoints of every node output (and of the network input)."""

    adjoints: dict = field(default_factory=dict)
    param_grads: dict = field(default_factory=dict)

    @property
    def input_adjoint(self):
        return self.adjoints[INPUT]


def check_target(net, target_index):
    n = net.shapes[net.logit_node][0]
    if not 0 <= int(target_index) < n:
        raise TargetError(f"target {target_index} outside [0, {n})")
    return int(target_index)


def backprop(net, trace, seed_node, seed, with_params=False):
    """Propagate the adjoint ``seed`` of ``seed_node``'s output to the input."""
    adj = {seed_node: np.asarray(seed, dtype=np.float64)}
    tape = GradientTape(adj)
    start = net.order.index(seed_node)
    for name in reversed(net.order[:start + 1]):
        g = adj.get(name)
        if g is None:
            continue
        node = net.nodes[name]
        xs = trace.node_inputs(name)
        grads = node.layer.backward(xs, trace.outputs[name], g)
        if with_params and node.layer.parameterized:
            tape.param_grads[name] = node.layer.param_grads(xs, g)
        for src, gx in zip(node.inputs, grads):
            adj[src] = adj[src] + gx if src in adj else gx
    adj.setdefault(INPUT, np.zeros(net.input_shape))
    return tape


def input_gradient(net, x, target_index):
    """d logit[target] / dx, taken on the pre-softmax scores."""
    target = check_target(net, target_index)
    trace = forward(net, x)
    seed = np.zeros(net.shapes[net.logit_node])
    seed[target] = 1.0
    return backprop(net, trace, net.logit_node, seed).input_adjoint


@dataclass
class EpochLog:
    epoch: int
    loss: float
    accuracy: float


def train_toy(net, dataset, epochs, learning_rate, seed, batch_size=1):
    """Plain mini-batch SGD on softmax cross-entropy.

    Returns ``(trained_net, log)`` where ``log`` holds one ``EpochLog`` per
    epoch (mean loss and accuracy measured during that epoch).
    """
    if not isinstance(net.nodes[net.sink].layer, Softmax):
        raise ValueError("train_toy needs a network ending in Softmax")
    rng = np.random.default_rng(seed)
    master = {node.name: {k: v.astype(np.float64).copy() for k, v in node.layer.params().items()}
              for node in net if node.layer.parameterized}
    xs = [np.asarray(x, dtype=np.float64) for x, _ in dataset]
    ys = [int(y) for _, y in dataset]
    history = []
    current = net
    for epoch in range(epochs):
        perm = rng.permutation(len(xs))
        total_loss, correct = 0.0, 0
        for lo in range(0, len(perm), batch_size):
            batch = perm[lo:lo + batch_size]
            acc = {name: {k: np.zeros_like(v) for k, v in p.items()} for name, p in master.items()}
            for i in batch:
                trace = forward(current, xs[i])
                probs = trace.output
                loss = -np.log(max(probs[ys[i]], 1e-300))
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, sample {i}")
                total_loss += loss
                correct += int(np.argmax(probs) == ys[i])
                dlogits = probs.copy()
                dlogits[ys[i]] -= 1.0
                tape = backprop(current, trace, current.logit_node, dlogits, with_params=True)
                for name, grads in tape.param_grads.items():
                    for k, gk in grads.items():
                        acc[name][k] += gk
            if learning_rate:
                step = learning_rate / len(batch)
                for name, grads in acc.items():
                    for k, gk in grads.items():
                        master[name][k] -= step * gk
                        if not np.all(np.isfinite(master[name][k])):
                            raise TrainingError(f"parameters of {name} diverged at epoch {epoch}")
                current = net.replace_params(master)
        history.append(EpochLog(epoch, total_loss / max(len(xs), 1), correct / max(len(xs), 1)))
        log.debug("epoch %d loss %.5f acc %.3f", epoch, history[-1].loss, history[-1].accuracy)
    return current, history


def accuracy(net, dataset):
    hits = sum(int(np.argmax(forward(net, x).output) == y) for x, y in dataset)
    return hits / max(len(dataset), 1)
