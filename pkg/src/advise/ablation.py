"""Noise-robustness study: salt-and-pepper ablation over a density schedule.

For each image and noise density the pipeline is rerun from scratch on
the corrupted image (new bundle through the runner, new scores, new
maps, new metrics), once with the saliency ReLU and once without it.
The result is a flat table of headline metrics per (image, density,
relu mode) suitable for plotting AVX against density.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .bundles import read_bundle
from .errors import AdviseError, ValidationError
from .imgio import load_image, save_image
from .metrics import evaluate_explanation
from .saliency import build_advise_maps, gradcam_map
from .scoring import score_units

log = logging.getLogger(__name__)

# Density schedule used throughout the robustness study.
DEFAULT_DENSITIES = tuple(round(0.025 * i, 3) for i in range(1, 10))

RELU_MODES = ("with", "without")


@dataclass
class AblationPlan:
    images: list
    densities: list = field(default_factory=lambda: list(DEFAULT_DENSITIES))
    seed: int = 0
    relu_mode: str = "both"  # with | without | both

    def __post_init__(self):
        if not self.images:
            raise ValidationError("ablation plan needs at least one image")
        ds = [float(d) for d in self.densities]
        if any(not 0.0 <= d < 1.0 for d in ds):
            raise ValidationError("densities must lie in [0, 1)")
        if any(b <= a for a, b in zip(ds, ds[1:])):
            raise ValidationError("densities must be strictly increasing")
        self.densities = ds
        self.seed = int(self.seed)
        if self.relu_mode not in RELU_MODES + ("both",):
            raise ValidationError(f"unknown relu mode {self.relu_mode!r}")

    @property
    def modes(self):
        if self.relu_mode == "both":
            return RELU_MODES
        return (self.relu_mode,)


def salt_pepper(image, density, seed):
    """Replace exactly round(density * H * W) pixels with 0 or 1.

    Pixel locations are drawn without replacement; a chosen pixel is
    blanked or saturated across all three channels with equal
    probability.  Same seed, same output.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"expected [H, W, 3] image, got {image.shape}")
    density = float(density)
    if not 0.0 <= density < 1.0:
        raise ValidationError(f"density must be in [0, 1), got {density}")
    h, w = image.shape[:2]
    count = int(round(density * h * w))
    out = image.copy()
    if count == 0:
        return out
    rng = np.random.default_rng(seed)
    flat = rng.choice(h * w, size=count, replace=False)
    values = rng.integers(0, 2, size=count).astype(np.float64)
    out.reshape(-1, 3)[flat] = values[:, None]
    return out


def row_seed(base_seed, image_path, density_index):
    """Per-row generator seed, stable across machines and run order."""
    digest = hashlib.sha256(str(image_path).encode("utf-8")).digest()
    path_key = int.from_bytes(digest[:8], "big")
    ss = np.random.SeedSequence([int(base_seed), path_key, int(density_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_ablation(
    plan,
    runner,
    model,
    layer,
    config,
    out_dir,
    *,
    score_source="gradient",
    prominence=0.05,
    baseline=False,
    select="best-avx",
):
    """Run the full pipeline per (image, density, relu mode) row.

    Every density gets its own corrupted PNG, a fresh bundle exported by
    the runner for the top class and the runner-up class, unit scores,
    and grouped maps; the headline record per relu mode lands in one
    output row.  ``baseline=True`` adds an all-units comparator row per
    mode.  Failures carry their (image, density) coordinates.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    noise_dir = out_dir / "noise"
    bundle_dir = out_dir / "bundles"
    mask_dir = out_dir / "masked"
    rows = []
    for image_path in plan.images:
        img = load_image(image_path)
        stem = _stem(image_path)
        for di, dens in enumerate(plan.densities):
            try:
                rows.extend(
                    _one_cell(
                        img,
                        image_path,
                        stem,
                        di,
                        dens,
                        plan,
                        runner,
                        model,
                        layer,
                        config,
                        noise_dir,
                        bundle_dir,
                        mask_dir,
                        score_source,
                        prominence,
                        baseline,
                        select,
                    )
                )
            except AdviseError as e:
                raise type(e)(
                    f"image {image_path!s}, delta {dens:g}: {e}"
                ) from e
    return rows


def _one_cell(
    img,
    image_path,
    stem,
    di,
    dens,
    plan,
    runner,
    model,
    layer,
    config,
    noise_dir,
    bundle_dir,
    mask_dir,
    score_source,
    prominence,
    baseline,
    select,
):
    noise_dir.mkdir(parents=True, exist_ok=True)
    seed = row_seed(plan.seed, image_path, di)
    ablated = salt_pepper(img, dens, seed)
    noise_png = noise_dir / f"{stem}_d{di:02d}.png"
    save_image(ablated, noise_png)

    b1_dir = bundle_dir / f"{stem}_d{di:02d}_c1"
    runner.export(noise_png, model, layer, "top1", b1_dir)
    bundle1 = read_bundle(b1_dir)
    man = bundle1.manifest
    if not man.top5 or len(man.top5) < 2:
        raise ValidationError("runner manifest lacks a top-5 list")
    c2 = int(man.top5[1])

    b2_dir = bundle_dir / f"{stem}_d{di:02d}_c2"
    runner.export(noise_png, model, layer, str(c2), b2_dir)
    bundle2 = read_bundle(b2_dir)

    scores1 = score_units(
        bundle1, config, score_source=score_source, prominence=prominence
    )
    scores2 = score_units(
        bundle2, config, score_source=score_source, prominence=prominence
    )

    rows = []
    for mode in plan.modes:
        relu = mode == "with"
        set1 = build_advise_maps(bundle1, scores1, relu=relu)
        set2 = build_advise_maps(bundle2, scores2, relu=relu)
        workdir = mask_dir / f"{stem}_d{di:02d}_{mode}"
        result = evaluate_explanation(
            ablated,
            set1.eval_maps(),
            man.class_score,
            man.class_index,
            runner,
            workdir,
            maps_c2=set2.eval_maps(),
            select=select,
            image_tag="advise",
        )
        rows.append(_row(image_path, dens, mode, "advise", result.selected))
        if baseline:
            _, g1 = gradcam_map(bundle1, relu=relu)
            _, g2 = gradcam_map(bundle2, relu=relu)
            result_g = evaluate_explanation(
                ablated,
                {"gradcam": g1},
                man.class_score,
                man.class_index,
                runner,
                workdir,
                maps_c2={"gradcam": g2},
                select="best-avx",
                image_tag="gradcam",
            )
            rows.append(
                _row(image_path, dens, mode, "gradcam", result_g.selected)
            )
    return rows


def _row(image_path, dens, mode, method, rec):
    return {
        "image": str(image_path),
        "delta": float(dens),
        "relu_mode": mode,
        "method": method,
        "avx": rec.avx,
        "ad": rec.ad,
        "ssim": rec.ssim,
        "fsim": rec.fsim,
        "mse": rec.mse,
        "hit": rec.hit,
        "cs": rec.cs,
    }


def _stem(path):
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name
