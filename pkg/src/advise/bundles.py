"""Activation/gradient bundle format.

A bundle is a directory holding ``manifest.json`` plus one raw binary blob
per tensor.  Blobs are float32, little-endian, row-major with the unit
axis fastest ([U][V][K]).  The manifest pins model, layer, source image,
input size, predicted class and its softmax score, and describes every
blob (name, dtype, byte order, shape, file).  Unknown manifest keys are
ignored so the format can grow without breaking old readers.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .ioutil import dump_json, load_json

FORMAT_VERSION = "advise-bundle/1"
MANIFEST_NAME = "manifest.json"

# Tensors every bundle must carry.
REQUIRED_TENSORS = ("activation", "gradient")


@dataclass
class Manifest:
    """Metadata block of a bundle."""

    model: str
    layer: str
    image: str
    input_size: tuple  # (H, W) of the raw image the maps are resized to
    class_index: int
    class_score: float
    top5: list | None = None
    version: str = FORMAT_VERSION


@dataclass
class TensorBundle:
    """In-memory bundle: manifest plus the tensors themselves."""

    manifest: Manifest
    activation: np.ndarray  # [U, V, K] float32
    gradient: np.ndarray  # [U, V, K] float32
    logits: np.ndarray | None = None  # [C] softmax scores, optional

    @property
    def units(self):
        return self.activation.shape[2]


def _check_finite(name, arr):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValidationError(
            "tensor %r has a non-finite value at index %s" % (name, (idx,))
        )


def validate_bundle(bundle):
    """Raise ValidationError unless every bundle invariant holds."""
    man = bundle.manifest
    act, grad = bundle.activation, bundle.gradient
    for name, arr in (("activation", act), ("gradient", grad)):
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValidationError(
                "tensor %r must be rank-3 [U,V,K] with positive dims, got %s"
                % (name, (arr.shape,))
            )
        _check_finite(name, arr)
    if act.shape != grad.shape:
        raise ValidationError(
            "activation shape %s != gradient shape %s" % (act.shape, grad.shape)
        )
    if len(man.input_size) != 2 or min(man.input_size) < 1:
        raise ValidationError("input_size must be [H, W] with positive sizes")
    if not 0.0 < float(man.class_score) < 1.0:
        raise ValidationError(
            "class_score must lie strictly inside (0, 1), got %r" % man.class_score
        )
    if man.top5 is not None and len(man.top5) != 5:
        raise ValidationError("top5 must list exactly 5 class indices")
    if bundle.logits is not None:
        lg = bundle.logits
        if lg.ndim != 1:
            raise ValidationError("logits must be rank-1")
        _check_finite("logits", lg)
        if lg.min() < 0.0 or lg.max() > 1.0:
            raise ValidationError("logits entries must lie in [0, 1]")
        c = int(man.class_index)
        if not 0 <= c < lg.size:
            raise ValidationError("class_index %d outside logits range" % c)
        if abs(float(lg[c]) - float(man.class_score)) > 1e-6:
            raise ValidationError(
                "logits[class_index]=%r disagrees with class_score=%r"
                % (float(lg[c]), float(man.class_score))
            )
    return bundle


def _tensor_items(bundle):
    items = [("activation", bundle.activation), ("gradient", bundle.gradient)]
    if bundle.logits is not None:
        items.append(("logits", bundle.logits))
    return items


def write_bundle(bundle, path):
    """Validate and write a bundle directory; returns the directory path."""
    validate_bundle(bundle)
    os.makedirs(path, exist_ok=True)
    descriptors = []
    for name, arr in _tensor_items(bundle):
        fname = name + ".bin"
        blob = np.ascontiguousarray(arr, dtype="<f4")
        blob.tofile(os.path.join(path, fname))
        descriptors.append(
            {
                "name": name,
                "dtype": "f32",
                "byte_order": "LE",
                "shape": list(arr.shape),
                "file": fname,
            }
        )
    man = bundle.manifest
    doc = {
        "version": man.version,
        "model": man.model,
        "layer": man.layer,
        "image": man.image,
        "input_size": [int(man.input_size[0]), int(man.input_size[1])],
        "class_index": int(man.class_index),
        "class_score": float(man.class_score),
        "tensors": descriptors,
    }
    if man.top5 is not None:
        doc["top5"] = [int(i) for i in man.top5]
    dump_json(doc, os.path.join(path, MANIFEST_NAME))
    return path


def read_bundle(path):
    """Read and validate a bundle directory into a TensorBundle."""
    mpath = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(mpath):
        raise ValidationError("no manifest at %s" % mpath)
    doc = load_json(mpath)
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(
            "unsupported bundle version %r in %s" % (doc.get("version"), mpath)
        )
    for key in ("model", "layer", "image", "input_size", "class_index",
                "class_score", "tensors"):
        if key not in doc:
            raise ValidationError("manifest %s lacks %r" % (mpath, key))
    tensors = {}
    for desc in doc["tensors"]:
        name = desc["name"]
        if desc.get("dtype") != "f32" or desc.get("byte_order") != "LE":
            raise ValidationError(
                "tensor %r in %s: only f32/LE blobs are supported" % (name, mpath)
            )
        shape = tuple(int(s) for s in desc["shape"])
        fpath = os.path.join(path, desc["file"])
        if not os.path.isfile(fpath):
            raise ValidationError("tensor blob missing: %s" % fpath)
        nbytes = os.path.getsize(fpath)
        count = int(np.prod(shape)) if shape else 1
        if nbytes != 4 * count:
            raise ValidationError(
                "tensor %r in %s: declared %d elements but blob holds %d bytes"
                % (name, mpath, count, nbytes)
            )
        arr = np.fromfile(fpath, dtype="<f4").reshape(shape)
        tensors[name] = arr
    for name in REQUIRED_TENSORS:
        if name not in tensors:
            raise ValidationError("bundle %s lacks required tensor %r" % (path, name))
    man = Manifest(
        model=doc["model"],
        layer=doc["layer"],
        image=doc["image"],
        input_size=tuple(int(s) for s in doc["input_size"]),
        class_index=int(doc["class_index"]),
        class_score=float(doc["class_score"]),
        top5=[int(i) for i in doc["top5"]] if "top5" in doc else None,
        version=doc["version"],
    )
    bundle = TensorBundle(
        manifest=man,
        activation=tensors["activation"],
        gradient=tensors["gradient"],
        logits=tensors.get("logits"),
    )
    return validate_bundle(bundle)
