"""Feed-forward network inference and layer-wise relevance propagation."""
__version__ = "0.1.0"

from .autodiff import GradientTape, input_gradient, train_toy
from .baselines import OcclusionConfig, occlusion_map, sensitivity_map
from .graph import ForwardTrace, GraphError, NetworkGraph, Node, forward, validate
from .layers import AvgPool, Concat, Convolution, Flatten, InnerProduct, MaxPool, ReLU, Softmax
from .lrp import (AlphaBeta, Epsilon, Flat, RelevanceMap, RuleAssignment, RuleError,
                  alphabeta_backward, channel_pool, conservation_audit, epsilon_backward,
                  explain, fixed_backward, flat_backward)
from .modelio import load_model, save_model
from .oversample import predict_oversampled
from .render import Heatmap, render, write_image
from .tensor import ShapeError, as_tensor, elementwise, reduce_sum

__all__ = [
    "GradientTape", "input_gradient", "train_toy", "OcclusionConfig",
    "occlusion_map", "sensitivity_map", "ForwardTrace", "GraphError", "NetworkGraph", "Node",
    "forward", "validate", "AvgPool", "Concat", "Convolution", "Flatten", "InnerProduct",
    "MaxPool", "ReLU", "Softmax", "AlphaBeta", "Epsilon", "Flat", "RelevanceMap",
    "RuleAssignment", "RuleError", "alphabeta_backward", "channel_pool", "conservation_audit",
    "epsilon_backward", "explain", "fixed_backward", "flat_backward", "load_model",
    "save_model", "predict_oversampled", "Heatmap", "render", "write_image", "ShapeError",
    "as_tensor", "elementwise", "reduce_sum",
]
