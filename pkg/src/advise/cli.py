"""Command-line front end.

Five subcommands cover the pipeline: ``score`` (per-unit density
scores), ``explain`` (score-grouped saliency maps), ``evaluate``
(masked re-inference and the metric suite), ``ablate`` (salt-and-pepper
robustness sweep), and ``report`` (aggregation tables and an AVX-vs-δ
plot).  Every artifact is byte-reproducible: floats are written with 9
significant digits and nothing embeds a timestamp.

Exit codes: 0 success, 2 validation problem (bad flag, malformed file,
missing input), 3 numerical failure, 4 runner subprocess failure or
timeout.
"""

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .ablation import DEFAULT_DENSITIES, AblationPlan, run_ablation
from .bundles import read_bundle
from .errors import (
    AdviseError,
    NumericalError,
    RunnerError,
    ValidationError,
)
from .imgio import load_image, overlay, save_image
from .ioutil import dump_json, fmt9, load_json
from .kde import KDEConfig
from .metrics import evaluate_explanation
from .runner import RunnerHandle
from .saliency import build_advise_maps, gradcam_map
from .scoring import DEFAULT_PROMINENCE, score_units
from .svgplot import line_plot

log = logging.getLogger(__name__)

ABLATION_COLUMNS = (
    "image", "delta", "relu_mode", "method",
    "avx", "ad", "ssim", "fsim", "mse", "hit", "cs",
)


def _add_kde_flags(p):
    p.add_argument("--gamma", default="search",
                   help="'search', 'fixed:<v>', or a bare value")
    p.add_argument("--grid-size", type=int, default=512)
    p.add_argument("--bandwidth-grid-size", type=int, default=64)
    p.add_argument("--prominence", type=float, default=DEFAULT_PROMINENCE)
    p.add_argument("--score-source", default="gradient",
                   choices=("gradient", "activation"))
    p.add_argument("--workers", type=int, default=None)


def _config_from(args):
    mode = args.gamma
    if mode != "search" and not mode.startswith("fixed:"):
        try:
            float(mode)
        except ValueError:
            raise ValidationError(
                f"--gamma must be 'search', 'fixed:<v>', or a number, "
                f"got {mode!r}"
            ) from None
        mode = f"fixed:{mode}"
    return KDEConfig(
        grid_size=args.grid_size,
        gamma_mode=mode,
        bandwidth_grid_size=args.bandwidth_grid_size,
    )


def _add_runner_flags(p):
    p.add_argument("--runner", required=True,
                   help="runner command, e.g. 'advise-stub-runner'")
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--batch-capacity", type=int, default=64)


def _runner_from(args):
    return RunnerHandle.from_spec(
        args.runner, timeout=args.timeout, batch_capacity=args.batch_capacity
    )


def _scores_payload(bundle_dir, usv, cfg):
    return {
        "bundle": str(bundle_dir),
        "score_source": usv.source,
        "scores": [int(s) for s in usv.scores],
        "peak_range": [int(v) for v in usv.peak_range()],
        "histogram": {str(k): int(v) for k, v in usv.histogram().items()},
        "kde_config": cfg.to_dict(),
    }


def cmd_score(args):
    bundle = read_bundle(args.bundle)
    cfg = _config_from(args)
    usv = score_units(
        bundle, cfg,
        score_source=args.score_source,
        prominence=args.prominence,
        workers=args.workers,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "scores.json"
    dump_json(_scores_payload(args.bundle, usv, cfg), path)
    print(f"wrote {path}")
    return 0


def _scores_for(args, bundle):
    """Score vector from --scores when given, else computed in-process."""
    if getattr(args, "scores", None):
        doc = load_json(args.scores)
        vec = np.asarray(doc["scores"], dtype=int)
        if vec.size != bundle.units:
            raise ValidationError(
                f"{args.scores} holds {vec.size} scores but the bundle "
                f"has {bundle.units} units"
            )
        return vec, doc.get("score_source", "gradient"), None
    cfg = _config_from(args)
    usv = score_units(
        bundle, cfg,
        score_source=args.score_source,
        prominence=args.prominence,
        workers=args.workers,
    )
    return np.asarray(usv.scores, dtype=int), usv.source, usv


def cmd_explain(args):
    bundle = read_bundle(args.bundle)
    scores, source, _ = _scores_for(args, bundle)
    relu = not args.no_relu
    image = load_image(bundle.manifest.image)
    mapset = build_advise_maps(bundle, scores, relu=relu)

    maps_dir = Path(args.out) / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    raw_arrays = {}
    for s in mapset.scores():
        name = f"score_{s}.png"
        save_image(mapset.normalized[s], maps_dir / name)
        save_image(
            overlay(image, mapset.normalized[s]),
            maps_dir / f"score_{s}_overlay.png",
        )
        files[f"score:{s}"] = name
        raw_arrays[f"score_{s}"] = mapset.maps[s]

    baseline = args.baseline
    if baseline == "gradcam":
        raw_g, norm_g = gradcam_map(bundle, relu=relu)
        save_image(norm_g, maps_dir / "gradcam.png")
        save_image(overlay(image, norm_g), maps_dir / "gradcam_overlay.png")
        files["gradcam"] = "gradcam.png"
        raw_arrays["gradcam"] = raw_g

    with open(maps_dir / "raw.atb", "wb") as fh:
        np.savez(fh, **raw_arrays)

    dump_json(
        {
            "relu": relu,
            "score_source": source,
            "groups": {str(s): mapset.group_sizes[s] for s in mapset.scores()},
            "maps": files,
            "baseline": baseline,
            "selected": None,
        },
        maps_dir / "index.json",
    )
    print(f"wrote {len(files)} maps under {maps_dir}")
    return 0


def cmd_evaluate(args):
    bundles = args.bundle
    b1 = read_bundle(bundles[0])
    b2 = read_bundle(bundles[1]) if len(bundles) > 1 else None
    man = b1.manifest
    image = load_image(man.image)
    runner = _runner_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    relu = not args.no_relu
    t0 = time.monotonic()

    peak_range = None
    if args.mask == "identity":
        maps = {"identity": np.ones(image.shape[:2])}
        maps_c2 = None
    else:
        scores1, _, usv1 = _scores_for(args, b1)
        if usv1 is not None:
            peak_range = usv1.peak_range()
        maps = build_advise_maps(b1, scores1, relu=relu).eval_maps()
        if b2 is not None:
            scores2, _, _ = _scores_for(args, b2)
            maps_c2 = build_advise_maps(b2, scores2, relu=relu).eval_maps()
        else:
            log.warning(
                "no second bundle given: CS undefined, misses are zeroed"
            )
            maps_c2 = None

    result = evaluate_explanation(
        image, maps, man.class_score, man.class_index, runner,
        out / "masked", maps_c2=maps_c2, select=args.select,
    )
    records = list(result.records)

    if args.baseline == "gradcam" and args.mask != "identity":
        _, g1 = gradcam_map(b1, relu=relu)
        gmaps_c2 = None
        if b2 is not None:
            _, g2 = gradcam_map(b2, relu=relu)
            gmaps_c2 = {"gradcam": g2}
        result_g = evaluate_explanation(
            image, {"gradcam": g1}, man.class_score, man.class_index,
            runner, out / "masked", maps_c2=gmaps_c2, select="best-avx",
            image_tag="gradcam",
        )
        records.extend(result_g.records)

    wall = time.monotonic() - t0
    dump_json(
        {
            "bundle": str(bundles[0]),
            "selected": result.selected_id,
            "records": [r.to_dict() for r in records],
        },
        out / "metrics.json",
    )
    _write_metrics_csv(
        out / "metrics.csv", records, peak_range,
        wall if args.timings else None,
    )

    index_path = out / "maps" / "index.json"
    if index_path.exists():
        doc = load_json(index_path)
        doc["selected"] = result.selected_id
        dump_json(doc, index_path)

    head = result.selected
    print(f"selected {head.map_id} AVX {fmt9(head.avx)}")
    return 0


def _write_metrics_csv(path, records, peak_range, wall):
    pr = "" if peak_range is None else f"{peak_range[0]}-{peak_range[1]}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["map_id", "ad", "ssim", "fsim", "mse", "avx",
             "peak_range", "wall_seconds"]
        )
        for r in records:
            w.writerow(
                [
                    r.map_id,
                    fmt9(r.ad), fmt9(r.ssim), fmt9(r.fsim),
                    fmt9(r.mse), fmt9(r.avx),
                    pr if r.map_id.startswith("score:") else "",
                    "" if wall is None else fmt9(wall),
                ]
            )


def cmd_ablate(args):
    manifests = []
    for bdir in args.bundle:
        manifests.append(read_bundle(bdir).manifest)
    models = {m.model for m in manifests}
    layers = {m.layer for m in manifests}
    if len(models) > 1 or len(layers) > 1:
        raise ValidationError(
            "ablation bundles must share one model and layer, got "
            f"models={sorted(models)} layers={sorted(layers)}"
        )
    plan = AblationPlan(
        images=[m.image for m in manifests],
        densities=_parse_densities(args.densities),
        seed=args.seed,
        relu_mode=args.relu_mode,
    )
    cfg = _config_from(args)
    rows = run_ablation(
        plan,
        _runner_from(args),
        manifests[0].model,
        manifests[0].layer,
        cfg,
        Path(args.out),
        score_source=args.score_source,
        prominence=args.prominence,
        baseline=args.baseline == "gradcam",
        select=args.select,
    )
    path = Path(args.out) / "ablation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for row in rows:
            w.writerow(
                [
                    row["image"],
                    fmt9(row["delta"]),
                    row["relu_mode"],
                    row["method"],
                    fmt9(row["avx"]), fmt9(row["ad"]), fmt9(row["ssim"]),
                    fmt9(row["fsim"]), fmt9(row["mse"]),
                    str(int(row["hit"])),
                    "" if row["cs"] is None else fmt9(row["cs"]),
                ]
            )
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _parse_densities(text):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValidationError(
            f"--densities must be comma-separated numbers, got {text!r}"
        ) from None


def cmd_report(args):
    rows = []
    for path in args.ablation:
        rows.extend(_load_ablation_csv(path))
    if not rows:
        raise ValidationError("no input rows to report on")

    groups = {}
    for row in rows:
        key = (row["method"], row["relu_mode"], row["delta"])
        groups.setdefault(key, []).append(row)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for key in sorted(groups):
        method, mode, delta = key
        rs = groups[key]
        mean = lambda field: sum(r[field] for r in rs) / len(rs)
        ad_m, ss_m = mean("ad"), mean("ssim")
        fs_m, ms_m = mean("fsim"), mean("mse")
        table.append(
            {
                "method": method,
                "relu_mode": mode,
                "delta": delta,
                "n": len(rs),
                "avx_per_image": mean("avx"),
                "avx_of_averages": _harmonic4(ad_m, ss_m, fs_m, ms_m),
                "ad_mean": ad_m,
                "ssim_mean": ss_m,
                "fsim_mean": fs_m,
                "mse_mean": ms_m,
                "hit_rate": mean("hit"),
            }
        )

    csv_path = out / "report.csv"
    cols = list(table[0].keys())
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow(
                [
                    row[c] if isinstance(row[c], (str, int)) else fmt9(row[c])
                    for c in cols
                ]
            )

    field = (
        "avx_per_image" if args.aggregation == "per-image"
        else "avx_of_averages"
    )
    series = {}
    for row in table:
        label = f"{row['method']}/{row['relu_mode']}"
        xs, ys = series.setdefault(label, ([], []))
        xs.append(row["delta"])
        ys.append(row[field])
    svg_path = out / "report.svg"
    line_plot(series, svg_path, title=f"AVX vs noise ({args.aggregation})")
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def _harmonic4(ad, ssim, fsim, mse):
    """AVX of averaged components (no penalty: these are aggregates)."""
    parts = (1.0 - ad, ssim, fsim, 1.0 - mse)
    if min(parts) <= 0.0:
        return 0.0
    return 4.0 / sum(1.0 / p for p in parts)


def _load_ablation_csv(path):
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e}") from None
    with fh:
        reader = csv.DictReader(fh)
        missing = set(ABLATION_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(
                f"{path} lacks columns: {', '.join(sorted(missing))}"
            )
        for rec in reader:
            rows.append(
                {
                    "image": rec["image"],
                    "delta": float(rec["delta"]),
                    "relu_mode": rec["relu_mode"],
                    "method": rec["method"],
                    "avx": float(rec["avx"]),
                    "ad": float(rec["ad"]),
                    "ssim": float(rec["ssim"]),
                    "fsim": float(rec["fsim"]),
                    "mse": float(rec["mse"]),
                    "hit": int(rec["hit"]),
                    "cs": float(rec["cs"]) if rec["cs"] else None,
                }
            )
    return rows


def build_parser():
    parser = argparse.ArgumentParser(
        prog="advise",
        description="score-grouped saliency maps and their evaluation",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("score", help="per-unit density peak scores")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    _add_kde_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("explain", help="score-grouped saliency maps")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scores", help="reuse a scores.json instead of rescoring")
    p.add_argument("--no-relu", action="store_true")
    p.add_argument("--baseline", choices=("gradcam",))
    _add_kde_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="mask, re-infer, and compute metrics")
    p.add_argument("--bundle", action="append", required=True,
                   help="repeat for the second-class bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--scores")
    p.add_argument("--select", default="best-avx",
                   help="'best-avx' or 'score:<i>'")
    p.add_argument("--mask", choices=("identity",),
                   help="force an all-ones map (smoke test)")
    p.add_argument("--no-relu", action="store_true")
    p.add_argument("--baseline", choices=("gradcam",))
    p.add_argument("--timings", action="store_true",
                   help="fill wall_seconds in metrics.csv (not reproducible)")
    _add_kde_flags(p)
    _add_runner_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="salt-and-pepper robustness sweep")
    p.add_argument("--bundle", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--densities",
                   default=",".join(fmt9(d) for d in DEFAULT_DENSITIES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--relu-mode", default="both",
                   choices=("with", "without", "both"))
    p.add_argument("--baseline", choices=("gradcam",))
    p.add_argument("--select", default="best-avx")
    _add_kde_flags(p)
    _add_runner_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="aggregate ablation rows and plot")
    p.add_argument("--ablation", action="append", required=True,
                   help="ablation.csv input, repeatable")
    p.add_argument("--out", required=True)
    p.add_argument("--aggregation", default="per-image",
                   choices=("per-image", "of-averages"),
                   help="which AVX aggregation the plot shows")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except RunnerError as e:
        print(f"runner failure: {e}", file=sys.stderr)
        return 4
    except AdviseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
