"""Parameter state exchanged between server and users, and its checkpoint format."""
import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .network import ModelSpec, flatten, network_for, unflatten

CHECKPOINT_MAGIC = b"SSFLSTATE1"


@dataclass(eq=False)
class ParameterState:
    """Flat weights, matching momentum buffer, and batch-norm running statistics.

    ``generation`` is bumped by :meth:`touch` after in-place edits so that
    forward caches taken before the edit are rejected by backward.
    """

    spec: ModelSpec
    weights: np.ndarray
    momentum: np.ndarray
    norm_stats: np.ndarray
    generation: int = 0

    def __post_init__(self):
        net = network_for(self.spec)
        if self.weights.shape != (net.n_weights,) or self.momentum.shape != self.weights.shape:
            raise InvalidInputError("weights and momentum must match the spec layout")
        if self.norm_stats.shape != (net.n_stats,):
            raise InvalidInputError("norm_stats length does not match the spec layout")

    @property
    def layout(self):
        return network_for(self.spec).layout

    @property
    def stats_layout(self):
        return network_for(self.spec).stats_layout

    def views(self):
        return unflatten(self.weights, self.layout)

    def stat_views(self):
        return unflatten(self.norm_stats, self.stats_layout)

    def touch(self):
        self.generation += 1

    def copy(self):
        return ParameterState(self.spec, self.weights.copy(), self.momentum.copy(), self.norm_stats.copy())

    def same_layout(self, other):
        return self.spec == other.spec

    def components(self):
        return self.weights, self.momentum, self.norm_stats

    def equal(self, other):
        return self.same_layout(other) and all(
            np.array_equal(a, b) for a, b in zip(self.components(), other.components())
        )


def init_model(spec, seed=1):
    weights, stats = network_for(spec).init_arrays(seed)
    return ParameterState(spec, weights, np.zeros_like(weights), stats)


def forward(state, batch, mode="train", update_stats=True):
    """Returns ``(logits, cache)``. ``mode`` is ``"train"`` or ``"eval"``."""
    if mode not in ("train", "eval"):
        raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}")
    return network_for(state.spec).forward(state, batch, mode == "train", update_stats)


def backward(state, cache, dlogits):
    return network_for(state.spec).backward(state, cache, dlogits)


def state_from_views(spec, views, momentum=None, norm_stats=None):
    net = network_for(spec)
    w = flatten(views, net.layout)
    m = np.zeros_like(w) if momentum is None else np.asarray(momentum, dtype=np.float64).copy()
    s = net.init_arrays(0)[1] if norm_stats is None else np.asarray(norm_stats, dtype=np.float64).copy()
    return ParameterState(spec, w, m, s)


def save_state(state, path):
    """Header: magic, little-endian u64 JSON length, JSON; then the float64 LE blob
    of weights, momentum and norm_stats back to back."""
    header = {
        "spec": state.spec.to_dict(),
        "layout": [[e.name, list(e.shape), e.offset] for e in state.layout],
        "stats_layout": [[e.name, list(e.shape), e.offset] for e in state.stats_layout],
        "sizes": {
            "weights": int(state.weights.size),
            "momentum": int(state.momentum.size),
            "norm_stats": int(state.norm_stats.size),
        },
        "dtype": "<f8",
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = np.concatenate(state.components()).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(blob)


def load_state(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise InvalidInputError(f"{path}: not a state checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    data = np.frombuffer(raw, dtype="<f8", offset=pos).astype(np.float64)
    sizes = header["sizes"]
    nw, nm, ns = sizes["weights"], sizes["momentum"], sizes["norm_stats"]
    if data.size != nw + nm + ns:
        raise InvalidInputError(f"{path}: truncated checkpoint")
    spec = ModelSpec.from_dict(header["spec"])
    return ParameterState(spec, data[:nw].copy(), data[nw:nw + nm].copy(), data[nw + nm:].copy())
