"""PNG image I/O and small pixel helpers.

Images travel through the pipeline as float64 [H, W, 3] arrays on
[0, 1]; files are 8-bit RGB PNG.  Pillow writes no timestamps, so saved
bytes depend only on pixel content.
"""

import numpy as np
from PIL import Image

from .errors import ValidationError

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def load_image(path):
    """Read a PNG (or any Pillow-readable file) as float64 [H, W, 3] in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise ValidationError("cannot read image %s: %s" % (path, exc)) from exc
    return arr


def save_image(arr, path):
    """Write a [0, 1] float image (2-D gray or [H, W, 3]) as 8-bit PNG."""
    a = np.asarray(arr, dtype=np.float64)
    pix = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pix).save(path, format="PNG")
    return path


def luma(image):
    """BT.601 luma of an [H, W, 3] image, same value scale as the input."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("luma expects an [H, W, 3] image")
    return img @ _LUMA


# Fixed blue->cyan->yellow->red ramp used for overlays, 256 entries.
def _build_ramp():
    t = np.linspace(0.0, 1.0, 256)
    r = np.clip(1.5 - np.abs(4.0 * t - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * t - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * t - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=1)


_RAMP = _build_ramp()


def colorize(saliency_norm):
    """Map a [0, 1] saliency map through the fixed color ramp."""
    m = np.asarray(saliency_norm, dtype=np.float64)
    idx = np.rint(np.clip(m, 0.0, 1.0) * 255.0).astype(np.intp)
    return _RAMP[idx]


def overlay(image, saliency_norm, alpha=0.5):
    """Blend the colorized map over the image."""
    img = np.asarray(image, dtype=np.float64)
    heat = colorize(saliency_norm)
    return (1.0 - alpha) * img + alpha * heat
