"""Dense MLP stacks with per-graph normalization.

The normalization here computes mean/variance over the *nodes of one graph
segment only* (population variance), never across segments or across a
batch, then applies a learnable affine map ``gamma * xhat + beta``. Layers
are plain dataclasses of tensors so parameter trees stay ordered and
checkpointable by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, ShapeError, Tensor

__all__ = [
    "DenseLayer",
    "Mlp",
    "graphnorm",
    "make_mlp",
    "xavier_uniform",
    "InvalidSegmentError",
]

DEFAULT_NORM_EPS = 1e-5


class InvalidSegmentError(ValueError):
    """A segment is empty or does not partition the node rows."""


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _check_finite(x, what: str) -> None:
    data = ad.as_array(x)
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values in {what}")


def graphnorm(x, gamma, beta, eps: float = DEFAULT_NORM_EPS, segments=None):
    """Normalize node features over the node dimension of each graph.

    ``x`` is either a 3-d stack ``[graphs, nodes, features]`` (each slab is
    one graph, ``segments`` must be None) or a flat 2-d ``[nodes, features]``
    matrix with ``segments`` an iterable of ``(start, stop)`` row ranges, one
    per graph. Statistics are mean and population variance over each graph's
    nodes; rows of different graphs never mix.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    data = ad.as_array(x)
    if ad.as_array(gamma).shape[-1] != data.shape[-1] or ad.as_array(beta).shape[-1] != data.shape[-1]:
        raise ShapeError("gamma/beta length must equal the feature width")
    _check_finite(x, "graphnorm input")

    def _norm(seg):
        mu = ad.tensor_mean(seg, axis=-2, keepdims=True)
        centered = ad.sub(seg, mu)
        var = ad.tensor_mean(ad.mul(centered, centered), axis=-2, keepdims=True)
        xhat = ad.div(centered, ad.sqrt(ad.add(var, eps)))
        return ad.add(ad.mul(xhat, gamma), beta)

    if data.ndim == 3:
        if segments is not None:
            raise ShapeError("segments apply to 2-d inputs only")
        return _norm(x)
    if data.ndim != 2:
        raise ShapeError("graphnorm expects a 2-d or 3-d input")
    if segments is None:
        segments = [(0, data.shape[0])]
    parts = []
    covered = 0
    for start, stop in segments:
        if stop <= start:
            raise InvalidSegmentError(f"empty segment ({start}, {stop})")
        if start != covered:
            raise InvalidSegmentError("segments must be contiguous and ordered")
        covered = stop
        parts.append(_norm(x[start:stop] if isinstance(x, Tensor) else data[start:stop]))
    if covered != data.shape[0]:
        raise InvalidSegmentError("segments must cover all rows")
    if len(parts) == 1:
        return parts[0]
    return ad.concatenate(parts, axis=0)


@dataclass
class DenseLayer:
    """One affine layer with optional graph normalization and activation."""

    weight: Tensor          # [in, out]
    bias: Tensor            # [out]
    norm_gamma: Tensor | None = None
    norm_beta: Tensor | None = None
    has_norm: bool = False
    activation: str = "none"  # "relu" | "none"

    def named_params(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias
        if self.has_norm:
            yield f"{prefix}.norm_gamma", self.norm_gamma
            yield f"{prefix}.norm_beta", self.norm_beta


@dataclass
class Mlp:
    """A stack of dense layers applied to node-feature matrices.

    Accepts ``[nodes, features]`` with optional segment ranges, or a
    ``[graphs, nodes, features]`` stack where each slab is one segment.
    """

    layers: list[DenseLayer] = field(default_factory=list)
    norm_eps: float = DEFAULT_NORM_EPS

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def __call__(self, x, segments=None):
        data = ad.as_array(x)
        if data.shape[-1] != self.in_dim:
            raise ShapeError(f"expected {self.in_dim} input features, got {data.shape[-1]}")
        h = x
        for layer in self.layers:
            if data.ndim == 3:
                g, k, _ = ad.as_array(h).shape
                flat = ad.reshape(h, (g * k, -1))
                flat = ad.add(ad.matmul(flat, layer.weight), layer.bias)
                h = ad.reshape(flat, (g, k, -1))
            else:
                h = ad.add(ad.matmul(h, layer.weight), layer.bias)
            if layer.has_norm:
                h = graphnorm(h, layer.norm_gamma, layer.norm_beta, eps=self.norm_eps,
                              segments=segments if data.ndim == 2 else None)
            if layer.activation == "relu":
                h = ad.relu(h)
            elif layer.activation != "none":
                raise ValueError(f"unknown activation {layer.activation!r}")
        return h

    def named_params(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}.{i}")


def make_mlp(rng: np.random.Generator, sizes: list[int], *, norm: bool = True,
             final_activation: str = "none", final_norm: bool = False,
             norm_eps: float = DEFAULT_NORM_EPS, dtype=np.float64) -> Mlp:
    """Xavier-uniform MLP: hidden layers ReLU (normalized when ``norm``),
    final layer linear unless overridden."""
    layers = []
    n = len(sizes) - 1
    for i in range(n):
        last = i == n - 1
        use_norm = (norm and not last) or (final_norm and last)
        d_in, d_out = sizes[i], sizes[i + 1]
        layers.append(DenseLayer(
            weight=Tensor(xavier_uniform(rng, d_in, d_out, dtype)),
            bias=Tensor(np.zeros(d_out, dtype=dtype)),
            norm_gamma=Tensor(np.ones(d_out, dtype=dtype)) if use_norm else None,
            norm_beta=Tensor(np.zeros(d_out, dtype=dtype)) if use_norm else None,
            has_norm=use_norm,
            activation=final_activation if last else "relu",
        ))
    return Mlp(layers=layers, norm_eps=norm_eps)
