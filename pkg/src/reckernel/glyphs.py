"""Procedural 28x28 digit corpus for desk-scale experiments.

Each digit class is a set of stroke templates (polylines and arcs in the unit
square) rendered through a randomized affine jitter (rotation, shear, scale,
translation), per-point wobble, stroke thickness, and brightness.  Rendering
is a distance-field splat: pixel intensity falls off linearly with distance
to the stroke skeleton.  Glyphs keep a >= 4 pixel margin so rotation variants
lose almost no mass.  Everything is deterministic for a fixed seed.

Real digit data in IDX form plugs into the rest of the pipeline unchanged;
this module only exists so that the benchmark is self-contained.
"""

from __future__ import annotations

import numpy as np

from .data import ImageDataset

SIZE = 28
#: glyph bounding box edge in pixels; half-diagonal stays under SIZE/2 - 0.5
EXTENT = 18.0
CENTER = (SIZE - 1) / 2.0


def _arc(cy, cx, ry, rx, a0, a1, n=28):
    t = np.linspace(a0, a1, n)
    return np.stack([cy + ry * np.sin(t), cx + rx * np.cos(t)], axis=1)


def _line(p0, p1, n=12):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) * np.asarray(p0, float) + t * np.asarray(p1, float)


def _bezier(p0, p1, p2, n=20):
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2 = (np.asarray(p, float) for p in (p0, p1, p2))
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2


def _templates() -> dict[int, list[np.ndarray]]:
    """Stroke skeletons per class, as (row_frac, col_frac) polylines in [0,1]^2."""
    pi = np.pi
    return {
        0: [_arc(0.50, 0.50, 0.38, 0.27, 0, 2 * pi, 40)],
        1: [_line((0.24, 0.32), (0.10, 0.52)), _line((0.10, 0.52), (0.90, 0.52))],
        2: [_bezier((0.30, 0.16), (0.00, 0.52), (0.34, 0.80)),
            _line((0.34, 0.80), (0.86, 0.16)),
            _line((0.86, 0.16), (0.86, 0.84))],
        3: [_arc(0.30, 0.46, 0.19, 0.24, 1.30 * pi, 2.50 * pi, 26),
            _arc(0.68, 0.46, 0.23, 0.28, 1.50 * pi, 2.80 * pi, 30)],
        4: [_line((0.10, 0.58), (0.56, 0.14)), _line((0.56, 0.14), (0.56, 0.88)),
            _line((0.10, 0.70), (0.90, 0.70))],
        5: [_line((0.12, 0.80), (0.12, 0.22)), _line((0.12, 0.22), (0.46, 0.20)),
            _bezier((0.46, 0.20), (0.62, 1.00), (0.88, 0.24))],
        6: [_bezier((0.08, 0.70), (0.26, 0.02), (0.58, 0.22)),
            _arc(0.66, 0.48, 0.22, 0.26, 0, 2 * pi, 32)],
        7: [_line((0.12, 0.14), (0.12, 0.86)), _line((0.12, 0.86), (0.90, 0.34))],
        8: [_arc(0.29, 0.50, 0.19, 0.20, 0, 2 * pi, 30),
            _arc(0.71, 0.50, 0.22, 0.25, 0, 2 * pi, 32)],
        9: [_arc(0.31, 0.46, 0.21, 0.24, 0, 2 * pi, 30),
            _line((0.31, 0.70), (0.90, 0.60))],
    }


_TEMPLATE_CACHE = _templates()

_PIXELS = np.stack(np.meshgrid(np.arange(SIZE), np.arange(SIZE), indexing="ij"),
                   axis=-1).reshape(-1, 2).astype(float)


def _densify(poly: np.ndarray, step: float = 0.03) -> np.ndarray:
    """Resample a polyline so consecutive points sit within ``step``."""
    out = [poly[0]]
    for a, b in zip(poly[:-1], poly[1:]):
        dist = float(np.linalg.norm(b - a))
        k = max(1, int(np.ceil(dist / step)))
        for i in range(1, k + 1):
            out.append(a + (b - a) * (i / k))
    return np.stack(out)


def render_glyph(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One jittered 28x28 rendering of the digit, values in [0, 1]."""
    strokes = _TEMPLATE_CACHE[digit]
    theta = rng.normal(0.0, 0.16)
    shear = rng.uniform(-0.22, 0.22)
    sy, sx = rng.uniform(0.72, 1.06, size=2)
    ty, tx = rng.uniform(-1.8, 1.8, size=2)
    thickness = rng.uniform(0.9, 2.0)
    brightness = rng.uniform(0.8, 1.0)

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    shear_m = np.array([[1.0, shear], [0.0, 1.0]])
    affine = rot @ shear_m @ np.diag([sy, sx])

    pts = []
    for poly in strokes:
        wobble = rng.normal(0.0, 0.025, size=poly.shape)
        p = (poly + wobble - 0.5) @ affine.T * EXTENT
        p[:, 0] += CENTER + ty
        p[:, 1] += CENTER + tx
        pts.append(_densify(p, step=0.6))
    pts = np.concatenate(pts)

    d2 = ((_PIXELS[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    dist = np.sqrt(d2)
    img = np.clip((thickness / 2.0 + 0.4 - dist) / 0.8, 0.0, 1.0) * brightness
    return img.reshape(SIZE, SIZE)


def make_corpus(n: int, seed: int, tag: str = "basic") -> ImageDataset:
    """Balanced shuffled corpus of n glyphs, quantized to byte precision so a
    round trip through the IDX container is exact."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 10
    labels = labels[rng.permutation(n)]
    images = np.stack([render_glyph(int(c), rng) for c in labels])
    images = np.round(images * 255.0) / 255.0
    return ImageDataset(images=images, labels=labels, tag=tag)
