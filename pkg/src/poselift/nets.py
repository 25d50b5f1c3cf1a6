"""Generator and discriminator: four-layer residual MLPs on flattened 2D poses."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError

NUM_LAYERS = 4


@dataclass
class MlpParams:
    """Weights of a 4-layer MLP with one skip connection over the middle block.

    ``layers`` holds ``(weight, bias)`` Node pairs, weights shaped
    ``(fan_in, fan_out)`` and biases ``(1, fan_out)``.
    """

    layers: list
    hidden_width: int
    leaky_slope: float = 0.2
    skip: bool = True

    def __post_init__(self):
        if len(self.layers) != NUM_LAYERS:
            raise ShapeError(f"expected {NUM_LAYERS} layers, got {len(self.layers)}")
        for w, _ in self.layers[:-1]:
            if w.shape[1] != self.hidden_width:
                raise ShapeError(f"hidden layer width {w.shape[1]} != {self.hidden_width}")

    @property
    def input_dim(self):
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self):
        return self.layers[-1][0].shape[1]

    def parameters(self):
        """Flat list ``[W1, b1, W2, b2, ...]``."""
        return [node for pair in self.layers for node in pair]

    def named_parameters(self):
        for i, (w, b) in enumerate(self.layers, start=1):
            yield f"W{i}", w
            yield f"b{i}", b

    def num_parameters(self):
        return sum(p.values.size for p in self.parameters())

    def detached(self):
        """View of these parameters that blocks gradients (values are shared)."""
        return MlpParams([(w.detach(), b.detach()) for w, b in self.layers], self.hidden_width, self.leaky_slope, self.skip)

    def copy(self):
        return MlpParams(
            [(ad.parameter(w.values.copy()), ad.parameter(b.values.copy())) for w, b in self.layers],
            self.hidden_width,
            self.leaky_slope,
            self.skip,
        )

    def flat_values(self):
        return np.concatenate([p.values.ravel() for p in self.parameters()])


def init_params(rng, input_dim, output_dim, hidden=1024, init_std=0.14, leaky_slope=0.2, skip=True):
    """Gaussian weights with standard deviation ``init_std`` and zero biases."""
    if min(input_dim, output_dim, hidden) < 1:
        raise ValueError("layer dimensions must be positive")
    if not init_std > 0:
        raise ValueError(f"init_std must be positive, got {init_std}")
    dims = [input_dim, hidden, hidden, hidden, output_dim]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = ad.parameter(rng.normal(0.0, init_std, size=(fan_in, fan_out)))
        b = ad.parameter(np.zeros((1, fan_out)))
        layers.append((w, b))
    return MlpParams(layers, hidden, leaky_slope, skip)


def mlp_forward(params, x):
    x = x if isinstance(x, ad.Node) else ad.constant(x)
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"network expects input width {params.input_dim}, got {x.shape[1]}")
    (w1, b1), (w2, b2), (w3, b3), (w4, b4) = params.layers
    slope = params.leaky_slope
    h1 = ad.leaky_relu(ad.add_bias(ad.matmul(x, w1), b1), slope)
    h2 = ad.leaky_relu(ad.add_bias(ad.matmul(h1, w2), b2), slope)
    h3 = ad.leaky_relu(ad.add_bias(ad.matmul(h2, w3), b3), slope)
    if params.skip:
        h3 = ad.residual_add(h1, h3)
    return ad.add_bias(ad.matmul(h3, w4), b4)


def generator_forward(params, poses):
    """Depths ``(B, N)`` for flattened normalized 2D poses ``(B, 2N)``."""
    return mlp_forward(params, poses)


def discriminator_forward(params, poses):
    """Raw realness logits ``(B, 1)`` for flattened 2D poses ``(B, 2N)``."""
    if params.output_dim != 1:
        raise ShapeError(f"discriminator must have one output unit, got {params.output_dim}")
    return mlp_forward(params, poses)


def init_generator(rng, num_joints, hidden=1024, init_std=0.14, leaky_slope=0.2, skip=True):
    return init_params(rng, 2 * num_joints, num_joints, hidden, init_std, leaky_slope, skip)


def init_discriminator(rng, num_joints, hidden=1024, init_std=0.14, leaky_slope=0.2, skip=True):
    return init_params(rng, 2 * num_joints, 1, hidden, init_std, leaky_slope, skip)


def generator_param_count(num_joints, hidden):
    n2 = 2 * num_joints
    return n2 * hidden + hidden + 2 * (hidden * hidden + hidden) + hidden * num_joints + num_joints
