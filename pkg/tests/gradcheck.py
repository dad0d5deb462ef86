"""Central finite-difference oracle for network + loss gradients."""
import numpy as np

from ssfl import losses
from ssfl.model import ParameterState, backward, forward, init_model, network_for, unflatten

LOSSES = ("server", "supervised_oracle", "crl", "self_training")


def _threshold_between(conf):
    # midpoint of the widest gap between sorted confidences keeps the gate
    # far from every sample
    s = np.sort(conf)
    i = int(np.argmax(np.diff(s)))
    return float((s[i] + s[i + 1]) / 2)


def activation_pattern(state, x):
    """Bytes identifying every ReLU on/off state and max-pool winner."""
    net = network_for(state.spec)
    p = unflatten(state.weights, net.layout)
    stats = unflatten(state.norm_stats.copy(), net.stats_layout)
    h, parts = np.asarray(x, dtype=np.float64), []
    for layer in net.layers:
        h, cache = layer.forward(p, stats, h, True, False)
        kind = type(layer).__name__
        if kind == "_ReLU":
            parts.append(np.packbits(h > 0).tobytes())
        elif kind == "_MaxPool":
            parts.append(np.asarray(cache[0]).tobytes())
    return b"".join(parts)


def make_problem(spec, loss, rng, batch=8):
    state = init_model(spec, seed=int(rng.integers(1 << 30)))
    # perturb norm affine params away from their identity init
    state.weights += rng.normal(scale=0.05, size=state.weights.shape)
    x = rng.normal(size=(batch,) + spec.input_shape)
    if len(spec.input_shape) == 3:
        x = rng.uniform(size=x.shape)
    x2 = x + 0.1 * rng.normal(size=x.shape)
    y = rng.integers(0, spec.num_classes, size=batch)
    tau = None
    if loss in ("crl", "self_training"):
        logits, _ = forward(state, x, "train", update_stats=False)
        conf = losses.softmax(logits * 1.0).max(axis=1)
        tau = _threshold_between(conf)
    return state, x, x2, y, tau


def loss_and_grad(state, x, x2, y, tau, loss):
    if loss == "crl":
        weak, _ = forward(state, x, "train", update_stats=False)
        strong, cache = forward(state, x2, "train", update_stats=False)
        out = losses.crl_user_loss(weak, strong, tau)
    else:
        logits, cache = forward(state, x, "train", update_stats=False)
        if loss == "self_training":
            out = losses.self_training_loss(logits, tau)
        else:
            out = losses.cross_entropy(logits, y)
    return out.value, backward(state, cache, out.logit_gradients), out


def max_relative_error(spec, loss, rng, h=1e-5, floor=1e-6, halvings=8):
    """Largest per-coordinate relative error between backprop and central
    differences. A probe that flips a ReLU or max-pool decision measures a
    kink, not the derivative, so that coordinate is retried with a halved
    step until the activation pattern is unchanged on both sides."""
    state, x, x2, y, tau = make_problem(spec, loss, rng)
    _, analytic, out = loss_and_grad(state, x, x2, y, tau, loss)
    inputs = (x, x2) if loss == "crl" else (x,)

    def pattern(st):
        return b"".join(activation_pattern(st, v) for v in inputs)

    base = pattern(state)
    w0 = state.weights.copy()
    numeric = np.empty_like(w0)
    for i in range(w0.size):
        step = h
        for _ in range(halvings + 1):
            vals, smooth = [], True
            for sign in (1, -1):
                w = w0.copy()
                w[i] += sign * step
                probe = ParameterState(spec, w, state.momentum, state.norm_stats)
                vals.append(loss_and_grad(probe, x, x2, y, tau, loss)[0])
                smooth &= pattern(probe) == base
            if smooth:
                break
            step /= 2
        numeric[i] = (vals[0] - vals[1]) / (2 * step)
    err = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(err.max()), out.active_count
