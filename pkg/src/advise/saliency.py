"""Saliency maps from score groups of units.

Units sharing a score form a group; each group's map is the activation
stack weighted by per-unit mean gradients, rectified, upsampled to the
input size with Catmull-Rom bicubic interpolation, and min-max
normalized for masking.  Weighting all units at once (ignoring scores)
gives the comparator map, which coincides with the single-group case.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Catmull-Rom spline parameter
_A = -0.5


def _cubic_kernel(t):
    at = np.abs(t)
    near = ((_A + 2.0) * at - (_A + 3.0)) * at * at + 1.0
    far = ((_A * at - 5.0 * _A) * at + 8.0 * _A) * at - 4.0 * _A
    return np.where(at <= 1.0, near, np.where(at < 2.0, far, 0.0))


def _axis_taps(n_out, n_in):
    """Tap indices [n_out, 4] (edge-clamped) and their kernel weights."""
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(x)
    frac = x - base
    offsets = np.arange(-1, 3)
    idx = base[:, None].astype(np.intp) + offsets[None, :]
    weights = _cubic_kernel(frac[:, None] - offsets[None, :])
    return np.clip(idx, 0, n_in - 1), weights


def resize_bicubic(arr, out_shape):
    """Catmull-Rom bicubic resample of a 2-D map to (H, W).

    Border taps are clamped to the edge rows/columns.  When the shape
    already matches, the input is returned unchanged (as a copy): the
    sampling positions then land exactly on the grid.
    """
    m = np.asarray(arr, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError("resize_bicubic expects a 2-D map")
    h, w = int(out_shape[0]), int(out_shape[1])
    if h < 1 or w < 1:
        raise ValidationError("target size must be positive")
    if m.shape == (h, w):
        return m.copy()
    idx_r, w_r = _axis_taps(h, m.shape[0])
    idx_c, w_c = _axis_taps(w, m.shape[1])
    rows = sum(w_r[:, t, None] * m[idx_r[:, t], :] for t in range(4))
    out = sum(w_c[None, :, t] * rows[:, idx_c[:, t]] for t in range(4))
    return out


def group_units(scores):
    """Partition unit indices by score, ascending score order."""
    scores = np.asarray(scores)
    return {
        int(s): np.nonzero(scores == s)[0]
        for s in np.unique(scores)
    }


def group_map(activation, gradient, unit_idx, relu=True):
    """Mean-gradient-weighted activation sum over one group of units."""
    unit_idx = np.asarray(unit_idx, dtype=np.intp)
    if unit_idx.size == 0:
        raise ValidationError("empty unit group")
    weights = gradient[:, :, unit_idx].mean(axis=(0, 1))
    m = np.einsum("uvk,k->uv", activation[:, :, unit_idx].astype(np.float64),
                  weights.astype(np.float64))
    if relu:
        m = np.maximum(m, 0.0)
    return m


def normalize_map(m):
    """Min-max to [0, 1]; constant maps go to all-ones (positive) or zeros."""
    lo = float(m.min())
    rng = float(m.max()) - lo
    if rng <= 0.0:
        return np.ones_like(m) if lo > 0.0 else np.zeros_like(m)
    return (m - lo) / rng


@dataclass
class SaliencyMapSet:
    """One map per score group, raw and normalized, plus bookkeeping."""

    maps: dict  # score -> raw map at input resolution
    normalized: dict  # score -> map scaled to [0, 1]
    group_sizes: dict  # score -> unit count
    relu: bool
    selected: int | None = None  # filled in by evaluation, not here

    def scores(self):
        return sorted(self.maps.keys())

    def eval_maps(self):
        """Ordered {map id: normalized map} view for the evaluation pass."""
        return {f"score:{s}": self.normalized[s] for s in self.scores()}


def build_advise_maps(bundle, scores, *, relu=True, out_size=None):
    """Build one saliency map per score group of a scored bundle."""
    scores = np.asarray(getattr(scores, "scores", scores))
    if scores.size != bundle.units:
        raise ValidationError(
            "got %d scores for %d units" % (scores.size, bundle.units)
        )
    size = tuple(out_size) if out_size is not None else tuple(bundle.manifest.input_size)
    groups = group_units(scores)
    maps, normalized, sizes = {}, {}, {}
    for score, idx in groups.items():
        small = group_map(bundle.activation, bundle.gradient, idx, relu=relu)
        big = resize_bicubic(small, size)
        if relu:
            np.maximum(big, 0.0, out=big)  # bicubic overshoot
        maps[score] = big
        normalized[score] = normalize_map(big)
        sizes[score] = int(idx.size)
    return SaliencyMapSet(maps=maps, normalized=normalized, group_sizes=sizes,
                          relu=relu)


def gradcam_map(bundle, *, relu=True, out_size=None):
    """Comparator map over all units at once; returns (raw, normalized)."""
    size = tuple(out_size) if out_size is not None else tuple(bundle.manifest.input_size)
    idx = np.arange(bundle.units)
    small = group_map(bundle.activation, bundle.gradient, idx, relu=relu)
    big = resize_bicubic(small, size)
    if relu:
        np.maximum(big, 0.0, out=big)
    return big, normalize_map(big)


def mask_image(image, saliency_norm):
    """Per-channel Hadamard product of an [H, W, 3] image with a map."""
    img = np.asarray(image, dtype=np.float64)
    m = np.asarray(saliency_norm, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("mask_image expects an [H, W, 3] image")
    if img.shape[:2] != m.shape:
        raise ValidationError(
            "map shape %s does not match image %s" % (m.shape, img.shape[:2])
        )
    return img * m[:, :, None]
