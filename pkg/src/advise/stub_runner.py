"""Self-contained model runner for tests, demos, and offline development.

Implements the two-verb runner contract (``export``, ``infer``) without
any deep-learning framework.  Class probabilities are a fixed linear
readout of smooth image statistics (mean luma, channel means, quadrant
means), so byte-identical images always produce byte-identical
responses, and an all-ones mask round-trips to the exact original
probabilities.  Activations and gradients are synthesized from a
generator keyed by (image bytes, model, layer, class): gradients cycle
through 0..3 planted clusters per unit so downstream density scoring
has structure to find.

Model ids: ``stub`` (7x7x8, 16 classes) or ``stub-UxVxK`` /
``stub-UxVxKxC`` for other tensor shapes.
"""

import argparse
import hashlib
import json
import sys

import numpy as np

from .bundles import Manifest, TensorBundle, write_bundle
from .imgio import load_image, luma
from .ioutil import dump_json, load_json

DEFAULT_SHAPE = (7, 7, 8)
DEFAULT_CLASSES = 16
_LOGIT_SCALE = 4.0


def parse_model_id(model):
    """Shape (U, V, K, C) encoded in the model id."""
    if model == "stub":
        return DEFAULT_SHAPE + (DEFAULT_CLASSES,)
    if model.startswith("stub-"):
        parts = model[5:].split("x")
        if len(parts) in (3, 4) and all(p.isdigit() for p in parts):
            dims = [int(p) for p in parts]
            if len(dims) == 3:
                dims.append(DEFAULT_CLASSES)
            u, v, k, c = dims
            if min(u, v, k) >= 1 and c >= 5:
                return u, v, k, c
    raise ValueError(f"unrecognized stub model id: {model!r}")


def _hash_int(text):
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _file_hash_int(path):
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).digest()
    return int.from_bytes(digest[:8], "big")


def image_features(img):
    """Eight smooth statistics in [0, 1]: luma, RGB means, quadrant lumas."""
    y = luma(img)
    h, w = y.shape
    feats = [
        y.mean(),
        img[:, :, 0].mean(),
        img[:, :, 1].mean(),
        img[:, :, 2].mean(),
        y[: h // 2 or 1, : w // 2 or 1].mean(),
        y[: h // 2 or 1, w // 2 :].mean() if w > 1 else y.mean(),
        y[h // 2 :, : w // 2 or 1].mean() if h > 1 else y.mean(),
        y[h // 2 :, w // 2 :].mean() if h > 1 and w > 1 else y.mean(),
    ]
    return np.asarray(feats, dtype=np.float64)


def class_probabilities(img, model):
    """Softmax readout of image_features through a model-keyed matrix."""
    _, _, _, n_classes = parse_model_id(model)
    rng = np.random.default_rng(_hash_int(f"stub-readout:{model}"))
    mix = rng.normal(size=(n_classes, 8))
    logits = _LOGIT_SCALE * (mix @ (image_features(img) - 0.5))
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def top_k(probs, k=5):
    """Indices of the k largest probabilities, ties to the lower index."""
    order = np.argsort(-probs, kind="stable")
    return [int(i) for i in order[:k]]


def synth_bundle(image_path, model, layer, class_index):
    """Deterministic activation/gradient tensors for one request."""
    u, v, k, _ = parse_model_id(model)
    img = load_image(image_path)
    seed = np.random.SeedSequence(
        [
            _file_hash_int(image_path),
            _hash_int(f"model:{model}"),
            _hash_int(f"layer:{layer}"),
            int(class_index),
        ]
    )
    rng = np.random.default_rng(seed)

    # Activations: a coarse luma tile per unit plus unit-specific texture,
    # kept non-negative like post-ReLU feature maps.
    tile = _box_resample(luma(img), (u, v))
    gain = rng.uniform(0.2, 1.0, size=k)
    act = gain[None, None, :] * tile[:, :, None]
    act = act + np.abs(rng.normal(0.0, 0.15, size=(u, v, k)))

    # Gradients: unit j gets (j mod 4) planted clusters; 0 means a flat
    # slice, which downstream scoring must treat as score 0.
    grad = np.zeros((u, v, k))
    n = u * v
    for j in range(k):
        clusters = j % 4
        if clusters == 0:
            continue
        centers = np.linspace(0.2, 0.8, clusters)
        which = rng.integers(0, clusters, size=n)
        vals = centers[which] + rng.normal(0.0, 0.02, size=n)
        grad[:, :, j] = vals.reshape(u, v)
    return act, grad


def _box_resample(plane, out_shape):
    """Mean-pool a 2-D array onto an (h, w) grid of index blocks."""
    h_out, w_out = out_shape
    h_in, w_in = plane.shape
    rows = np.linspace(0, h_in, h_out + 1).astype(int)
    cols = np.linspace(0, w_in, w_out + 1).astype(int)
    out = np.empty((h_out, w_out))
    for i in range(h_out):
        r0, r1 = rows[i], max(rows[i + 1], rows[i] + 1)
        for j in range(w_out):
            c0, c1 = cols[j], max(cols[j + 1], cols[j] + 1)
            out[i, j] = plane[r0:r1, c0:c1].mean()
    return out


def cmd_export(args):
    model = args.model_override or args.model
    probs = class_probabilities(load_image(args.image), model)
    top5 = top_k(probs, 5)
    if args.klass == "top1":
        class_index = top5[0]
    else:
        class_index = int(args.klass)
        if not 0 <= class_index < probs.size:
            raise ValueError(f"class {class_index} out of range for {model}")
    act, grad = synth_bundle(args.image, model, args.layer, class_index)
    img = load_image(args.image)
    manifest = Manifest(
        model=model,
        layer=args.layer,
        image=str(args.image),
        input_size=[int(img.shape[0]), int(img.shape[1])],
        class_index=class_index,
        class_score=float(probs[class_index]),
        top5=top5,
    )
    bundle = TensorBundle(
        manifest=manifest,
        activation=act,
        gradient=grad,
        logits=probs,
    )
    write_bundle(bundle, args.out)
    return 0


def cmd_infer(args):
    req = load_json(args.manifest)
    topk = int(req.get("topk", 5))
    results = []
    for entry in req.get("images", []):
        rid = entry.get("id")
        try:
            img = load_image(entry["path"])
            probs = class_probabilities(img, args.model)
            if topk > probs.size:
                raise ValueError("topk exceeds class count")
            idx = top_k(probs, topk)
            wanted = [int(c) for c in entry.get("classes", [])]
            results.append(
                {
                    "id": rid,
                    "topk_indices": idx,
                    "topk_scores": [float(probs[i]) for i in idx],
                    "score_for_class": {
                        str(c): float(probs[c]) for c in wanted
                    },
                }
            )
        except Exception as e:  # report per image, keep the batch going
            results.append({"id": rid, "error": str(e)})
    dump_json({"results": results}, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="advise-stub-runner",
        description="deterministic stand-in for a CNN model runner",
    )
    # The model rides on the handle command (before the verb) so that
    # `infer`, whose flag set is pinned to --manifest/--out, still knows
    # which readout to apply.  `export --model` overrides it per call.
    parser.add_argument("--model", default="stub")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_exp = sub.add_parser("export", help="write an activation bundle")
    p_exp.add_argument("--image", required=True)
    p_exp.add_argument("--model", dest="model_override", default=None)
    p_exp.add_argument("--layer", default="units")
    p_exp.add_argument("--class", dest="klass", default="top1")
    p_exp.add_argument("--out", required=True)
    p_exp.set_defaults(func=cmd_export)

    p_inf = sub.add_parser("infer", help="score a batch of images")
    p_inf.add_argument("--manifest", required=True)
    p_inf.add_argument("--out", required=True)
    p_inf.set_defaults(func=cmd_infer)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"stub-runner: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
