"""The two desk-scale architectures and their flat parameter layout."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import ContractError, InvalidInputError
from . import layers as L

ARCHITECTURES = ("mlp", "tiny_cnn")
NORMS = ("none", "batch_norm", "group_norm")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description.

    ``widths`` are the hidden layer widths for ``mlp`` (default ``(64, 64)``)
    or the conv channel counts for ``tiny_cnn`` (default ``(16, 32)``).
    ``groups`` gives the group count per normalized layer for group_norm and
    defaults to ``min(8, channels)``.
    """

    architecture: str = "mlp"
    input_shape: tuple = (16,)
    num_classes: int = 10
    norm: str = "group_norm"
    widths: tuple = None
    groups: tuple = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidInputError(f"unknown architecture {self.architecture!r}")
        if self.norm not in NORMS:
            raise InvalidInputError(f"unknown norm {self.norm!r}")
        if self.num_classes < 2:
            raise InvalidInputError("num_classes must be at least 2")
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.widths is None:
            widths = (64, 64) if self.architecture == "mlp" else (16, 32)
        else:
            widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if self.architecture == "mlp" and len(self.input_shape) != 1:
            raise InvalidInputError("mlp expects a 1-d input shape")
        if self.architecture == "tiny_cnn":
            if len(self.input_shape) != 3 or len(widths) != 2:
                raise InvalidInputError("tiny_cnn expects (C, H, W) input and two channel counts")
            _, h, w = self.input_shape
            if h < 4 or w < 4:
                raise InvalidInputError("tiny_cnn needs spatial size of at least 4x4")
        if self.norm == "group_norm":
            groups = tuple(min(8, c) for c in widths) if self.groups is None else tuple(int(g) for g in self.groups)
            if len(groups) != len(widths):
                raise InvalidInputError("need one group count per normalized layer")
            for g, c in zip(groups, widths):
                if g < 1 or c % g:
                    raise InvalidInputError(f"group count {g} does not divide {c} channels")
            object.__setattr__(self, "groups", groups)
        else:
            object.__setattr__(self, "groups", None)

    def to_dict(self):
        return {
            "architecture": self.architecture,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "norm": self.norm,
            "widths": list(self.widths),
            "groups": None if self.groups is None else list(self.groups),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("input_shape", "widths", "groups"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    shape: tuple
    offset: int
    size: int = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "size", int(np.prod(self.shape, dtype=np.int64)))


class _Dense:
    def __init__(self, name, n_in, n_out):
        self.name = name
        self.params = [(f"{name}.w", (n_in, n_out)), (f"{name}.b", (n_out,))]
        self.fan_in = n_in

    def forward(self, p, stats, x, train, update_stats):
        in_shape = x.shape
        out, c = L.dense_forward(x.reshape(in_shape[0], -1), p[f"{self.name}.w"], p[f"{self.name}.b"])
        return out, (in_shape, c)

    def backward(self, p, cache, dout):
        in_shape, c = cache
        dx, dw, db = L.dense_backward(dout, c)
        return dx.reshape(in_shape), [dw, db]


class _Conv:
    def __init__(self, name, c_in, c_out):
        self.name = name
        self.params = [(f"{name}.w", (c_out, c_in, 3, 3)), (f"{name}.b", (c_out,))]
        self.fan_in = c_in * 9

    def forward(self, p, stats, x, train, update_stats):
        return L.conv3x3_forward(x, p[f"{self.name}.w"], p[f"{self.name}.b"])

    def backward(self, p, cache, dout):
        dx, dw, db = L.conv3x3_backward(dout, cache)
        return dx, [dw, db]


class _ReLU:
    params = []

    def forward(self, p, stats, x, train, update_stats):
        return L.relu_forward(x)

    def backward(self, p, cache, dout):
        return L.relu_backward(dout, cache), []


class _MaxPool:
    params = []

    def forward(self, p, stats, x, train, update_stats):
        return L.maxpool_forward(x)

    def backward(self, p, cache, dout):
        return L.maxpool_backward(dout, cache), []


class _GroupNorm:
    def __init__(self, name, channels, groups):
        self.name = name
        self.groups = groups
        self.params = [(f"{name}.gamma", (channels,)), (f"{name}.beta", (channels,))]

    def forward(self, p, stats, x, train, update_stats):
        return L.group_norm_forward(x, p[f"{self.name}.gamma"], p[f"{self.name}.beta"], self.groups)

    def backward(self, p, cache, dout):
        dx, dg, db = L.group_norm_backward(dout, cache)
        return dx, [dg, db]


class _BatchNorm:
    def __init__(self, name, channels):
        self.name = name
        self.params = [(f"{name}.gamma", (channels,)), (f"{name}.beta", (channels,))]
        self.stats = [(f"{name}.running_mean", (channels,)), (f"{name}.running_var", (channels,))]

    def forward(self, p, stats, x, train, update_stats):
        return L.batch_norm_forward(
            x, p[f"{self.name}.gamma"], p[f"{self.name}.beta"],
            stats[f"{self.name}.running_mean"], stats[f"{self.name}.running_var"],
            train, update_stats,
        )

    def backward(self, p, cache, dout):
        dx, dg, db = L.batch_norm_backward(dout, cache)
        return dx, [dg, db]


def _norm_layer(spec, i, channels):
    if spec.norm == "group_norm":
        return _GroupNorm(f"gn{i}", channels, spec.groups[i])
    if spec.norm == "batch_norm":
        return _BatchNorm(f"bn{i}", channels)
    return None


def _build_layout(entries):
    out, offset = [], 0
    for name, shape in entries:
        e = LayoutEntry(name, tuple(shape), offset)
        out.append(e)
        offset += e.size
    return tuple(out), offset


@dataclass
class ForwardCache:
    token: tuple
    layer_caches: list = field(default_factory=list)


class Network:
    def __init__(self, spec):
        self.spec = spec
        seq = []
        if spec.architecture == "mlp":
            n_in = spec.input_shape[0]
            for i, w in enumerate(spec.widths):
                seq.append(_Dense(f"dense{i}", n_in, w))
                norm = _norm_layer(spec, i, w)
                if norm is not None:
                    seq.append(norm)
                seq.append(_ReLU())
                n_in = w
            seq.append(_Dense(f"dense{len(spec.widths)}", n_in, spec.num_classes))
        else:
            c, h, w = spec.input_shape
            for i, ch in enumerate(spec.widths):
                seq.append(_Conv(f"conv{i}", c, ch))
                norm = _norm_layer(spec, i, ch)
                if norm is not None:
                    seq.append(norm)
                seq.append(_ReLU())
                seq.append(_MaxPool())
                c, h, w = ch, h // 2, w // 2
            seq.append(_Dense("head", c * h * w, spec.num_classes))
        self.layers = seq
        self.layout, self.n_weights = _build_layout(p for layer in seq for p in layer.params)
        self.stats_layout, self.n_stats = _build_layout(
            s for layer in seq for s in getattr(layer, "stats", [])
        )

    def init_arrays(self, seed):
        rng = np.random.default_rng(seed)
        weights = np.empty(self.n_weights)
        views = unflatten(weights, self.layout)
        for layer in self.layers:
            for name, shape in layer.params:
                if name.endswith(".gamma"):
                    views[name][...] = 1.0
                elif name.endswith(".beta"):
                    views[name][...] = 0.0
                else:
                    bound = 1.0 / np.sqrt(layer.fan_in)
                    views[name][...] = rng.uniform(-bound, bound, size=shape)
        stats = np.empty(self.n_stats)
        sviews = unflatten(stats, self.stats_layout)
        for name, view in sviews.items():
            view[...] = 0.0 if name.endswith("running_mean") else 1.0
        return weights, stats

    def forward(self, state, x, train, update_stats=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim < 2 or x.shape[1:] != self.spec.input_shape:
            raise InvalidInputError(
                f"batch shape {x.shape} does not match input shape {self.spec.input_shape}"
            )
        p = unflatten(state.weights, self.layout)
        stats = unflatten(state.norm_stats, self.stats_layout)
        cache = ForwardCache(cache_token(state))
        for layer in self.layers:
            x, c = layer.forward(p, stats, x, train, update_stats)
            cache.layer_caches.append(c)
        return x, cache

    def backward(self, state, cache, dlogits):
        if cache.token != cache_token(state):
            raise ContractError("forward cache does not belong to this parameter state")
        p = unflatten(state.weights, self.layout)
        grad = np.zeros(self.n_weights)
        gviews = unflatten(grad, self.layout)
        dx = np.asarray(dlogits, dtype=np.float64)
        for layer, c in zip(reversed(self.layers), reversed(cache.layer_caches)):
            dx, grads = layer.backward(p, c, dx)
            for (name, _), g in zip(layer.params, grads):
                gviews[name][...] = g
        return grad


def cache_token(state):
    return (id(state), id(state.weights), state.generation)


@lru_cache(maxsize=64)
def network_for(spec):
    return Network(spec)


def flatten(views, layout):
    """Concatenate per-layer arrays into one flat vector ordered by ``layout``."""
    total = sum(e.size for e in layout)
    flat = np.empty(total)
    for e in layout:
        flat[e.offset:e.offset + e.size] = np.asarray(views[e.name]).reshape(-1)
    return flat


def unflatten(flat, layout):
    """Per-layer views aliasing ``flat``; writing a view writes the vector."""
    return {e.name: flat[e.offset:e.offset + e.size].reshape(e.shape) for e in layout}
