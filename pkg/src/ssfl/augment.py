"""Weak (flip-and-shift) and strong (random multi-op) augmentations.

Image batches are (N, C, H, W) in [0, 1]; vector batches are (N, D). All
randomness comes from the ``numpy.random.Generator`` passed in.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

IMAGE_OPS = ("shift", "crop_resize", "rotate", "invert", "noise", "cutout")
VECTOR_OPS = ("noise", "dropout", "scale")

DEFAULT_MAGNITUDES = {
    "shift": (1, 4),            # pixels
    "crop_resize": (0.6, 0.9),  # kept side fraction
    "rotate": (-30.0, 30.0),    # degrees
    "noise": (0.02, 0.1),       # image noise sigma
    "cutout": (0.2, 0.5),       # side fraction
    "vector_noise": (0.2, 0.2),
    "dropout": (0.1, 0.3),      # coordinate drop rate
    "scale": (0.7, 1.3),
}


@dataclass(frozen=True)
class AugmentConfig:
    max_shift_px: int = 2
    hflip: bool = True
    weak_noise: float = 0.05
    ops_per_sample: int = 2
    op_pool: tuple = None
    magnitudes: dict = field(default_factory=lambda: dict(DEFAULT_MAGNITUDES))

    def __post_init__(self):
        if self.ops_per_sample < 1:
            raise InvalidInputError("ops_per_sample must be at least 1")
        if self.op_pool is not None:
            pool = tuple(self.op_pool)
            if not pool:
                raise InvalidInputError("op_pool must not be empty")
            unknown = set(pool) - set(IMAGE_OPS) - set(VECTOR_OPS) - {"identity"}
            if unknown:
                raise InvalidInputError(f"unknown augmentation ops {sorted(unknown)}")
            object.__setattr__(self, "op_pool", pool)
        mags = dict(DEFAULT_MAGNITUDES)
        mags.update({k: tuple(v) for k, v in self.magnitudes.items()})
        object.__setattr__(self, "magnitudes", mags)

    def pool_for(self, is_image):
        if self.op_pool is not None:
            return self.op_pool
        return IMAGE_OPS if is_image else VECTOR_OPS


def _is_image(x):
    if x.ndim == 4:
        return True
    if x.ndim == 2:
        return False
    raise InvalidInputError(f"expected (N, D) or (N, C, H, W) batch, got shape {x.shape}")


def shift_image(img, dy, dx):
    """Translate (C, H, W) by integer offsets, zero filling the exposed border."""
    out = np.zeros_like(img)
    h, w = img.shape[1:]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[:, yd, xd] = img[:, ys, xs]
    return out


def weak_augment(x, rng, cfg=None):
    cfg = cfg or AugmentConfig()
    x = np.asarray(x, dtype=np.float64)
    if not _is_image(x):
        if cfg.weak_noise <= 0:
            return x.copy()
        return x + rng.normal(0.0, cfg.weak_noise, size=x.shape)
    out = np.empty_like(x)
    m = cfg.max_shift_px
    for i in range(x.shape[0]):
        img = x[i]
        if m > 0:
            dy, dx = rng.integers(-m, m + 1, size=2)
            img = shift_image(img, int(dy), int(dx))
        if cfg.hflip and rng.random() < 0.5:
            img = img[:, :, ::-1]
        out[i] = img
    return out


def _uniform(rng, bounds):
    lo, hi = bounds
    return lo if lo == hi else rng.uniform(lo, hi)


def _image_op(op, img, rng, mags):
    c, h, w = img.shape
    if op == "identity":
        return img
    if op == "shift":
        lo, hi = mags["shift"]
        dy, dx = (int(rng.integers(lo, hi + 1)) * (1 if rng.random() < 0.5 else -1) for _ in range(2))
        return shift_image(img, dy, dx)
    if op == "crop_resize":
        frac = _uniform(rng, mags["crop_resize"])
        ch, cw = max(1, int(round(h * frac))), max(1, int(round(w * frac)))
        y0 = int(rng.integers(0, h - ch + 1))
        x0 = int(rng.integers(0, w - cw + 1))
        yi = y0 + (np.arange(h) * ch // h)
        xi = x0 + (np.arange(w) * cw // w)
        return img[:, yi][:, :, xi]
    if op == "rotate":
        theta = np.deg2rad(_uniform(rng, mags["rotate"]))
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        yy, xx = np.mgrid[0:h, 0:w]
        cos, sin = np.cos(theta), np.sin(theta)
        sy = np.rint(cos * (yy - cy) + sin * (xx - cx) + cy).astype(int)
        sx = np.rint(-sin * (yy - cy) + cos * (xx - cx) + cx).astype(int)
        valid = (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w)
        out = np.zeros_like(img)
        out[:, valid] = img[:, sy[valid], sx[valid]]
        return out
    if op == "invert":
        return 1.0 - img
    if op == "noise":
        return img + rng.normal(0.0, _uniform(rng, mags["noise"]), size=img.shape)
    if op == "cutout":
        frac = _uniform(rng, mags["cutout"])
        sh, sw = max(1, int(round(h * frac))), max(1, int(round(w * frac)))
        y0 = int(rng.integers(0, h - sh + 1))
        x0 = int(rng.integers(0, w - sw + 1))
        out = img.copy()
        out[:, y0:y0 + sh, x0:x0 + sw] = 0.0
        return out
    raise InvalidInputError(f"op {op!r} does not apply to images")


def _vector_op(op, x, rng, mags):
    n, dim = x.shape
    if op == "identity":
        return x
    if op == "noise":
        return x + rng.normal(0.0, _uniform(rng, mags["vector_noise"]), size=x.shape)
    if op == "dropout":
        lo, hi = mags["dropout"]
        rates = rng.uniform(lo, hi, size=(n, 1)) if hi > lo else np.full((n, 1), lo)
        return x * (rng.random(size=x.shape) >= rates)
    if op == "scale":
        lo, hi = mags["scale"]
        return x * rng.uniform(lo, hi, size=(n, 1))
    raise InvalidInputError(f"op {op!r} does not apply to vectors")


def sample_ops(pool, k, n, rng):
    """Per sample, ``min(k, len(pool))`` distinct pool indices in application order."""
    k = min(k, len(pool))
    return np.argsort(rng.random((n, len(pool))), axis=1)[:, :k]


def strong_augment(x, rng, cfg=None, return_ops=False):
    cfg = cfg or AugmentConfig()
    x = np.asarray(x, dtype=np.float64)
    image = _is_image(x)
    pool = cfg.pool_for(image)
    picks = sample_ops(pool, cfg.ops_per_sample, x.shape[0], rng)
    if image:
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            img = x[i]
            for j in picks[i]:
                img = _image_op(pool[j], img, rng, cfg.magnitudes)
            out[i] = img
        out = np.clip(out, 0.0, 1.0)
    else:
        out = x.copy()
        for pos in range(picks.shape[1]):
            for j, op in enumerate(pool):
                rows = picks[:, pos] == j
                if rows.any():
                    out[rows] = _vector_op(op, out[rows], rng, cfg.magnitudes)
    if return_ops:
        return out, [tuple(pool[j] for j in row) for row in picks]
    return out
