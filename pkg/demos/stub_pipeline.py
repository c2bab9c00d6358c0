#!/usr/bin/env python3
"""Whole pipeline in one script, against the bundled stub runner.

Writes a deterministic test image, has the stub runner export
activation/gradient bundles for the top class and the runner-up class,
scores the units, builds one saliency map per score group, and runs the
masked re-inference evaluation.  Prints the per-map metric rows and the
headline record.  Artifacts land in demos/out/stub_pipeline/.

The stub stands in for a real CNN: it speaks the same two-verb protocol
(export, infer) as a heavyweight runner, so everything here transfers
unchanged to real bundles.
"""

import sys
from pathlib import Path

import numpy as np

from advise.bundles import read_bundle
from advise.imgio import load_image, save_image
from advise.kde import KDEConfig
from advise.metrics import evaluate_explanation
from advise.runner import RunnerHandle
from advise.saliency import build_advise_maps, gradcam_map
from advise.scoring import score_units

OUT = Path(__file__).resolve().parent / "out" / "stub_pipeline"
MODEL = "stub-5x5x6"
CFG = KDEConfig(grid_size=64, bandwidth_grid_size=16, gamma_mode="fixed:0.3")


def test_image(seed=4, size=(48, 48)):
    rng = np.random.default_rng(seed)
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.empty((h, w, 3))
    img[:, :, 0] = 0.5 + 0.4 * np.sin(xx / 5.0)
    img[:, :, 1] = 0.5 + 0.4 * np.cos(yy / 7.0)
    img[:, :, 2] = rng.uniform(0.2, 0.8, (h, w))
    return np.clip(img, 0.0, 1.0)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    image = OUT / "input.png"
    save_image(test_image(), image)

    # the handle-level --model keeps infer on the same readout the
    # bundles are exported with
    runner = RunnerHandle([sys.executable, "-m", "advise.stub_runner",
                           "--model", MODEL])

    runner.export(image, MODEL, "mix1", "top1", OUT / "c1")
    c1 = read_bundle(OUT / "c1")
    runner_up = int(c1.manifest.top5[1])
    runner.export(image, MODEL, "mix1", str(runner_up), OUT / "c2")
    c2 = read_bundle(OUT / "c2")
    print(f"exported: class {c1.manifest.class_index} "
          f"(p={c1.manifest.class_score:.4f}), runner-up {runner_up}")

    scores = score_units(c1, CFG)
    print(f"unit scores: {scores.scores.tolist()} "
          f"(peak range {scores.peak_range()[0]}-{scores.peak_range()[1]})")

    maps = build_advise_maps(c1, scores)
    maps_c2 = build_advise_maps(c2, score_units(c2, CFG))
    print(f"score groups: { {s: n for s, n in sorted(maps.group_sizes.items())} }")

    result = evaluate_explanation(
        load_image(image), maps.eval_maps(),
        c1.manifest.class_score, c1.manifest.class_index,
        runner, OUT / "probes",
        maps_c2=maps_c2.eval_maps(), image_tag="demo")

    print()
    print("map        AD     SSIM   FSIM   MSE    hit  CS      AVX")
    for rec in result.records:
        cs = "  -  " if rec.cs is None else f"{rec.cs:+.2f}"
        print(f"{rec.map_id:9s}  {rec.ad:.3f}  {rec.ssim:.3f}  {rec.fsim:.3f}"
              f"  {rec.mse:.3f}  {rec.hit}    {cs}  {rec.avx:.4f}"
              f"  [{rec.penalty_branch}]")
    print()
    print(f"headline: {result.selected.map_id} "
          f"AVX={result.selected.avx:.4f}")

    # the all-units comparator, for reference
    _, gnorm = gradcam_map(c1)
    gres = evaluate_explanation(
        load_image(image), {"gradcam": gnorm},
        c1.manifest.class_score, c1.manifest.class_index,
        runner, OUT / "probes_gradcam", image_tag="gradcam")
    print(f"comparator: gradcam AVX={gres.records[0].avx:.4f}")


if __name__ == "__main__":
    main()
