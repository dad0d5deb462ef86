"""Gradient diversity across participants, in all sixteen measurement variants.

A variant picks: squared or plain norms, L1 or L2, users only or users plus
the server, and either the full-data gradient at the weights each party
transmits or the cumulative weight change over local training.
"""
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import losses
from .errors import InvalidInputError, UndefinedValueError
from .model import backward, forward

DIVERGENT = math.inf
DENOMINATOR_FLOOR = 1e-30
GRADIENT_KINDS = ("fullgrad", "cumdelta")


@dataclass(frozen=True)
class DiversityVariant:
    squared: bool = True
    norm_order: int = 2
    include_server: bool = False
    gradient_kind: str = "fullgrad"

    def __post_init__(self):
        if self.norm_order not in (1, 2):
            raise InvalidInputError("norm_order must be 1 or 2")
        if self.gradient_kind not in GRADIENT_KINDS:
            raise InvalidInputError(f"gradient_kind must be one of {GRADIENT_KINDS}")

    @property
    def name(self):
        return "div_{}_l{}_{}_{}".format(
            "sq" if self.squared else "nosq",
            self.norm_order,
            "withserver" if self.include_server else "users",
            self.gradient_kind,
        )


ALL_VARIANTS = tuple(
    DiversityVariant(sq, order, server, kind)
    for kind, server, order, sq in product(GRADIENT_KINDS, (False, True), (2, 1), (True, False))
)


@dataclass
class GradientSet:
    user_vectors: list
    server_vector: np.ndarray = None
    round_index: int = 0
    kind: str = "fullgrad"

    def __post_init__(self):
        self.user_vectors = [np.asarray(v, dtype=np.float64) for v in self.user_vectors]
        if not self.user_vectors:
            raise InvalidInputError("gradient set is empty")
        n = self.user_vectors[0].shape
        vecs = self.user_vectors + ([] if self.server_vector is None else [self.server_vector])
        if any(np.shape(v) != n or np.ndim(v) != 1 for v in vecs):
            raise InvalidInputError("all gradient vectors must be 1-d and share one length")

    def vectors(self, include_server):
        if not include_server:
            return self.user_vectors
        if self.server_vector is None:
            raise InvalidInputError("variant needs a server vector but the set has none")
        return self.user_vectors + [np.asarray(self.server_vector, dtype=np.float64)]


def _norm(v, order):
    return float(np.abs(v).sum()) if order == 1 else float(np.sqrt(np.dot(v, v)))


def diversity(gset, variant=DiversityVariant()):
    """Sum of per-vector norms over the norm of the sum, each raised to 1 or 2.

    Returns :data:`DIVERGENT` when the summed vector vanishes but the
    individual vectors do not; raises :class:`UndefinedValueError` for an
    all-zero set.
    """
    vecs = gset.vectors(variant.include_server)
    p = 2 if variant.squared else 1
    num = sum(_norm(v, variant.norm_order) ** p for v in vecs)
    den = _norm(np.sum(vecs, axis=0), variant.norm_order) ** p
    if num < DENOMINATOR_FLOOR:
        raise UndefinedValueError("gradient diversity of an all-zero set is undefined")
    if den < DENOMINATOR_FLOOR:
        return DIVERGENT
    return num / den


def cumulative_delta(w_before, w_after):
    if not w_before.same_layout(w_after):
        raise InvalidInputError("states have different layouts")
    return w_after.weights - w_before.weights


def objective_logit_loss(objective, logits, labels=None, tau=losses.DEFAULT_THRESHOLD):
    """Loss at clean (unaugmented) logits for the given training objective."""
    if objective == "crl":
        return losses.crl_user_loss(logits, logits, tau)
    if objective == "self_training":
        return losses.self_training_loss(logits, tau)
    if objective in ("supervised_oracle", "server"):
        if labels is None:
            raise InvalidInputError(f"objective {objective!r} needs labels")
        return losses.cross_entropy(logits, labels)
    raise InvalidInputError(f"unknown objective {objective!r}")


def full_data_gradient(state, inputs, objective, labels=None, tau=losses.DEFAULT_THRESHOLD):
    """Mean gradient of the objective over every local sample, without
    augmentation. Batch norm uses the statistics of the whole local set and
    leaves the running estimates untouched."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise InvalidInputError("dataset is empty")
    logits, cache = forward(state, inputs, "train", update_stats=False)
    out = objective_logit_loss(objective, logits, labels, tau)
    return backward(state, cache, out.logit_gradients)


def diversity_report(fullgrad, cumdelta):
    """All sixteen variants keyed by :attr:`DiversityVariant.name`.

    Undefined (all-zero) variants are reported as NaN; the report always has
    every key.
    """
    sets = {"fullgrad": fullgrad, "cumdelta": cumdelta}
    out = {}
    for v in ALL_VARIANTS:
        try:
            out[v.name] = diversity(sets[v.gradient_kind], v)
        except UndefinedValueError:
            out[v.name] = math.nan
    return out


def encode_value(x):
    """JSON-safe rendering of a diversity value."""
    if math.isinf(x):
        return "divergent"
    if math.isnan(x):
        return "undefined"
    return x


def decode_value(x):
    if x == "divergent":
        return DIVERGENT
    if x == "undefined":
        return math.nan
    return float(x)
