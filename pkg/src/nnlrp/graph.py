"""Network graph, validation and traced forward evaluation."""
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

import numpy as np

from .layers import Layer, LayerError, Softmax
from .tensor import ShapeError

INPUT = "input"


class GraphError(ValueError):
    """Structural or shape problem in a network graph.

    ``node`` names the first offending node when there is one.
    """

    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"node {node!r}: {message}")
        self.node = node


@dataclass(frozen=True)
class Node:
    name: str
    layer: Layer
    inputs: tuple = (INPUT,)


def validate(nodes, input_shape):
    """Check structure and propagate shapes.

    Returns ``(order, shapes)``: node names in topological order and a dict of
    output shapes keyed by node name (``"input"`` included).
    """
    input_shape = tuple(int(s) for s in input_shape)
    if not input_shape or any(s < 1 for s in input_shape):
        raise GraphError(f"invalid input shape {input_shape}")
    by_name = {}
    for node in nodes:
        if node.name == INPUT or node.name in by_name:
            raise GraphError("duplicate or reserved name", node.name)
        by_name[node.name] = node
    if not by_name:
        raise GraphError("graph has no nodes")
    for node in nodes:
        if not node.inputs:
            raise GraphError("node has no inputs", node.name)
        for src in node.inputs:
            if src != INPUT and src not in by_name:
                raise GraphError(f"unknown predecessor {src!r}", node.name)

    sorter = TopologicalSorter({n.name: [s for s in n.inputs if s != INPUT] for n in nodes})
    try:
        sorter.prepare()
    except CycleError as exc:
        raise GraphError(f"cycle through {exc.args[1]}") from None
    # declaration order wherever dependencies allow
    rank = {n.name: i for i, n in enumerate(nodes)}
    order = _stable_topo(nodes, rank)

    consumers = {name: 0 for name in by_name}
    for node in nodes:
        for src in node.inputs:
            if src != INPUT:
                consumers[src] += 1
    sinks = [name for name, count in consumers.items() if count == 0]
    if len(sinks) != 1:
        raise GraphError(f"expected exactly one sink, found {sorted(sinks)}")

    reached = {INPUT}
    for name in order:
        if any(src in reached for src in by_name[name].inputs):
            reached.add(name)
        else:
            raise GraphError("not reachable from the input", name)

    shapes = {INPUT: input_shape}
    for name in order:
        node = by_name[name]
        try:
            shapes[name] = tuple(node.layer.output_shape([shapes[s] for s in node.inputs]))
        except LayerError as exc:
            raise GraphError(str(exc), name) from None
    return order, shapes


def _stable_topo(nodes, rank):
    pending = {n.name: set(s for s in n.inputs if s != INPUT) for n in nodes}
    order = []
    done = set()
    while pending:
        ready = sorted((name for name, deps in pending.items() if deps <= done), key=rank.get)
        name = ready[0]
        order.append(name)
        done.add(name)
        del pending[name]
    return order


class NetworkGraph:
    """Validated, immutable DAG of layers with a single output node.

    ``preprocessing`` travels with the model file: ``scale`` multiplies raw
    8-bit pixel values and ``mean`` (one value per channel) is subtracted
    afterwards.
    """

    def __init__(self, input_shape, nodes, preprocessing=None):
        self._nodes = tuple(nodes)
        self.order, self.shapes = validate(self._nodes, input_shape)
        self.input_shape = self.shapes[INPUT]
        self.nodes = {n.name: n for n in self._nodes}
        self.sink = self.order[-1]
        self.preprocessing = dict(preprocessing or {"scale": 1.0 / 255.0, "mean": None})

    @classmethod
    def chain(cls, input_shape, layers, names=None, preprocessing=None):
        """Build a sequential network, naming nodes ``<kind><index>`` by default."""
        names = names or [f"{layer.kind.lower()}{i}" for i, layer in enumerate(layers)]
        nodes, prev = [], INPUT
        for name, layer in zip(names, layers):
            nodes.append(Node(name, layer, (prev,)))
            prev = name
        return cls(input_shape, nodes, preprocessing)

    def __iter__(self):
        return (self.nodes[name] for name in self.order)

    def __len__(self):
        return len(self.order)

    @property
    def node_list(self):
        return list(self._nodes)

    @property
    def logit_node(self):
        """Node whose output holds the pre-softmax scores."""
        sink = self.nodes[self.sink]
        if isinstance(sink.layer, Softmax):
            return sink.inputs[0]
        return self.sink

    @property
    def num_outputs(self):
        return self.shapes[self.sink][0]

    def consumers(self, name):
        return [n.name for n in self._nodes if name in n.inputs]

    def replace_params(self, new_params):
        """Copy of the network with ``{node: {param: array}}`` substituted."""
        from dataclasses import replace
        nodes = []
        for node in self._nodes:
            if node.name in new_params:
                node = Node(node.name, replace(node.layer, **new_params[node.name]), node.inputs)
            nodes.append(node)
        return NetworkGraph(self.input_shape, nodes, self.preprocessing)

    def summary(self):
        lines = [f"input {self.input_shape}"]
        total = 0
        for node in self:
            count = sum(p.size for p in node.layer.params().values())
            total += count
            src = ",".join(node.inputs)
            lines.append(f"{node.name:<16} {node.layer.kind:<13} <- {src:<20} "
                         f"out {self.shapes[node.name]}  params {count}")
        lines.append(f"total parameters {total}")
        return "\n".join(lines)


@dataclass
class ForwardTrace:
    """Activations of one forward pass, keyed by node name."""

    net: NetworkGraph
    x: np.ndarray
    outputs: dict = field(default_factory=dict)

    def value(self, name):
        return self.x if name == INPUT else self.outputs[name]

    def node_inputs(self, name):
        return tuple(self.value(src) for src in self.net.nodes[name].inputs)

    @property
    def output(self):
        return self.outputs[self.net.sink]

    @property
    def logits(self):
        return self.outputs[self.net.logit_node]

    @property
    def probabilities(self):
        if isinstance(self.net.nodes[self.net.sink].layer, Softmax):
            return self.output
        return None


def forward(net, x):
    """Evaluate ``net`` on ``x`` and record every activation."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != net.input_shape:
        raise ShapeError(f"input shape {x.shape} != declared {net.input_shape}", x.shape, net.input_shape)
    trace = ForwardTrace(net, x)
    for node in net:
        trace.outputs[node.name] = node.layer.forward(*trace.node_inputs(node.name))
    return trace
