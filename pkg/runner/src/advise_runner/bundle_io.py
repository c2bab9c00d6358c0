"""Writer for the activation/gradient bundle directory format.

The consumer side of this format lives in the `advise` package; this is
an independent producer so the runner stays importable without it.  A
bundle directory holds `manifest.json` plus one raw little-endian
float32 blob per tensor, row-major with the unit axis fastest
([U][V][K]); the manifest describes each blob (name, dtype, byte order,
shape, file) and pins model, layer, image, input size, class index and
score, and the top-5 class indices.
"""

import json
import os

import numpy as np

FORMAT_VERSION = "advise-bundle/1"

# Keeps class_score strictly inside (0, 1) when a softmax saturates in
# float32; the shift stays far below the reader's 1e-6 logits check.
_SCORE_MARGIN = 1e-7


def clamp_score(value):
    return float(min(1.0 - _SCORE_MARGIN, max(_SCORE_MARGIN, float(value))))


def write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_bundle_dir(out_dir, *, model, layer, image, input_size, class_index,
                     class_score, top5, activation, gradient, logits=None):
    """Write one bundle directory; tensors are [U, V, K] arrays."""
    act = np.asarray(activation)
    grad = np.asarray(gradient)
    if act.shape != grad.shape or act.ndim != 3:
        raise ValueError(
            "activation %s and gradient %s must share one [U,V,K] shape"
            % (act.shape, grad.shape)
        )
    tensors = [("activation", act), ("gradient", grad)]
    if logits is not None:
        tensors.append(("logits", np.asarray(logits)))
    for name, arr in tensors:
        if not np.isfinite(arr).all():
            raise ValueError("non-finite values in tensor %r" % name)
    os.makedirs(out_dir, exist_ok=True)
    descriptors = []
    for name, arr in tensors:
        fname = name + ".bin"
        np.ascontiguousarray(arr, dtype="<f4").tofile(os.path.join(out_dir, fname))
        descriptors.append(
            {
                "name": name,
                "dtype": "f32",
                "byte_order": "LE",
                "shape": list(arr.shape),
                "file": fname,
            }
        )
    doc = {
        "version": FORMAT_VERSION,
        "model": str(model),
        "layer": str(layer),
        "image": str(image),
        "input_size": [int(input_size[0]), int(input_size[1])],
        "class_index": int(class_index),
        "class_score": clamp_score(class_score),
        "top5": [int(i) for i in top5],
        "tensors": descriptors,
    }
    write_json(doc, os.path.join(out_dir, "manifest.json"))
    return out_dir
