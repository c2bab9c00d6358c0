"""Runner protocol front end for torch CNNs.

Two verbs, matching what the advise CLI drives over subprocess:

  advise-torch-runner [--model M] [--device cpu|auto] [--weights-dir D] \
      export --image I.png --model M --layer L --class top1|<int> --out DIR
  advise-torch-runner --model M infer --manifest requests.json --out responses.json

`infer` has a pinned flag set, so the model rides on the global flag
before the verb; pass the same id the bundles were exported with.  Exit
codes: 0 success, 2 usage/validation problems, 3 numerical failure.
"""

import argparse
import json
import sys

import numpy as np
import torch

from .bundle_io import clamp_score, read_json, write_bundle_dir, write_json
from .models import build_preprocess, load_model, load_rgb, resolve_layer

_FORWARD_CHUNK = 8  # keeps VGG-sized batches inside a laptop's memory


def _top_k(probs, k):
    """Indices of the k largest entries, ties to the lower index."""
    order = np.argsort(-probs, kind="stable")
    return [int(i) for i in order[:k]]


def _softmax_rows(logits):
    return torch.softmax(logits, dim=1).detach().cpu().double().numpy()


def cmd_export(args):
    model_id = args.model_override or args.model
    if not model_id:
        raise ValueError("no model given (export --model or the global flag)")
    device = _pick_device(args.device)
    net, canonical, entry = load_model(model_id, args.weights_dir, device)
    module, layer_name = resolve_layer(net, entry, args.layer)

    img = load_rgb(args.image)
    x = build_preprocess(entry)(img)[None].to(device)
    x.requires_grad_(True)

    captured = []
    hook = module.register_forward_hook(lambda m, i, o: captured.append(o))
    try:
        logits = net(x)
    finally:
        hook.remove()
    if not captured:
        raise ValueError(
            "layer %r never ran in the forward pass of %r" % (layer_name, canonical)
        )
    act_t = captured[-1]

    probs_t = torch.softmax(logits[0], dim=0)
    probs = probs_t.detach().cpu().double().numpy()
    top5 = _top_k(probs, 5)
    if args.klass == "top1":
        class_index = top5[0]
    else:
        class_index = int(args.klass)
        if not 0 <= class_index < probs.size:
            raise ValueError(
                "class %d out of range for %s (%d classes)"
                % (class_index, canonical, probs.size)
            )

    (grad_t,) = torch.autograd.grad(probs_t[class_index], act_t)
    activation = act_t.detach()[0].permute(1, 2, 0).cpu().numpy()
    gradient = grad_t[0].permute(1, 2, 0).cpu().numpy()
    if not (np.isfinite(activation).all() and np.isfinite(gradient).all()):
        raise FloatingPointError(
            "non-finite activation/gradient from %s layer %r" % (canonical, layer_name)
        )

    write_bundle_dir(
        args.out,
        model=canonical,
        layer=layer_name,
        image=str(args.image),
        input_size=(img.height, img.width),
        class_index=class_index,
        class_score=clamp_score(probs[class_index]),
        top5=top5,
        activation=activation,
        gradient=gradient,
        logits=probs,
    )
    return 0


def cmd_infer(args):
    if not args.model:
        raise ValueError("no model given (pass --model before the verb)")
    device = _pick_device(args.device)
    net, _, entry = load_model(args.model, args.weights_dir, device)
    prep = build_preprocess(entry)

    req = read_json(args.manifest)
    topk = int(req.get("topk", 5))
    entries = req.get("images", [])

    # Preprocess per image so one bad file cannot sink the batch.
    batch, failures = [], {}
    for pos, entry_doc in enumerate(entries):
        rid = entry_doc.get("id")
        try:
            if topk > entry.classes:
                raise ValueError("topk exceeds class count")
            batch.append((pos, rid, prep(load_rgb(entry_doc["path"]))))
        except Exception as e:
            failures[pos] = {"id": rid, "error": str(e)}

    probs_by_pos = {}
    with torch.no_grad():
        for i0 in range(0, len(batch), _FORWARD_CHUNK):
            chunk = batch[i0:i0 + _FORWARD_CHUNK]
            x = torch.stack([t for _, _, t in chunk]).to(device)
            rows = _softmax_rows(net(x))
            for (pos, _, _), row in zip(chunk, rows):
                probs_by_pos[pos] = row

    results = []
    for pos, entry_doc in enumerate(entries):
        if pos in failures:
            results.append(failures[pos])
            continue
        rid = entry_doc.get("id")
        probs = probs_by_pos[pos]
        try:
            wanted = [int(c) for c in entry_doc.get("classes", [])]
            bad = [c for c in wanted if not 0 <= c < probs.size]
            if bad:
                raise ValueError("class %d out of range" % bad[0])
            idx = _top_k(probs, topk)
            results.append(
                {
                    "id": rid,
                    "topk_indices": idx,
                    "topk_scores": [float(probs[i]) for i in idx],
                    "score_for_class": {str(c): float(probs[c]) for c in wanted},
                }
            )
        except Exception as e:
            results.append({"id": rid, "error": str(e)})
    write_json({"results": results}, args.out)
    return 0


def _pick_device(spec):
    if spec == "auto":
        return "cuda" if torch.cuda.is_available() else "cpu"
    return spec


def build_parser():
    parser = argparse.ArgumentParser(
        prog="advise-torch-runner",
        description="export activation/gradient bundles and batch-infer "
        "with torchvision CNNs",
    )
    parser.add_argument("--model", default=None)
    parser.add_argument("--device", choices=("cpu", "auto"), default="cpu")
    parser.add_argument("--weights-dir", default=None)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_exp = sub.add_parser("export", help="write an activation bundle")
    p_exp.add_argument("--image", required=True)
    p_exp.add_argument("--model", dest="model_override", default=None)
    p_exp.add_argument("--layer", default="last-conv")
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
        print(f"torch-runner: {e}", file=sys.stderr)
        return 2
    except (FloatingPointError, RuntimeError) as e:
        print(f"torch-runner: numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
