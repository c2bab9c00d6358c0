"""Evaluation protocol for explanation maps.

Seven quantities per map: class sensitivity (CS), top-5 hit, average
confidence drop (AD), global structural similarity (SSIM), feature
similarity (FSIM), mean squared error (MSE), and the penalty-adjusted
harmonic aggregate AVX.  ``evaluate_explanation`` orchestrates the whole
pass for one image: mask, re-infer through the model runner, compute the
record per map, and pick a headline map.

Conventions: images are [H, W, 3] float arrays in [0, 1].  SSIM and FSIM
are computed on the luma channel rescaled to 0..255, where their
stability constants are defined.  MSE stays on the [0, 1] scale so that
1 - MSE is a valid harmonic-mean component.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .fsim import fsim
from .imgio import luma, save_image
from .saliency import mask_image

log = logging.getLogger(__name__)

# SSIM stability constants for L = 255.
_SSIM_E1 = (0.01 * 255.0) ** 2
_SSIM_E2 = (0.03 * 255.0) ** 2

# |CS| above this counts as significant class correlation.
CS_SIGNIFICANCE = 0.5


def class_sensitivity(map_c1, map_c2):
    """Pearson correlation of two flattened maps, or None.

    None is the undefined marker: it is returned when either map has
    zero variance, and the caller decides how the penalty logic treats
    it (see ``avx``).
    """
    a = np.asarray(map_c1, dtype=np.float64).ravel()
    b = np.asarray(map_c2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"map shapes differ: {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    va = (da * da).mean()
    vb = (db * db).mean()
    if va == 0.0 or vb == 0.0:
        return None
    # sqrt of the variance product, not std * std: this form keeps the
    # self and negation cases at exactly +-1.0 for any input
    r = (da * db).mean() / np.sqrt(va * vb)
    # guard against rounding just past the ends
    return float(min(1.0, max(-1.0, r)))


def hit(top1_index, masked_top5):
    """1 if the original top-1 class survives in the masked top-5."""
    idx = list(masked_top5)
    if len(idx) != 5:
        raise ValidationError(f"expected 5 top-k indices, got {len(idx)}")
    return 1 if int(top1_index) in [int(i) for i in idx] else 0


def average_drop(y_c, o_c):
    """Relative confidence drop max(0, y_c - o_c) / y_c."""
    y_c = float(y_c)
    o_c = float(o_c)
    if not 0.0 < y_c <= 1.0:
        raise ValidationError(f"y_c must be in (0, 1], got {y_c}")
    if not 0.0 <= o_c <= 1.0:
        raise ValidationError(f"o_c must be in [0, 1], got {o_c}")
    return max(0.0, y_c - o_c) / y_c


def ssim_global(image, masked):
    """Structural similarity with one set of image-wide statistics.

    Single global mean/variance/covariance over luma, not the original
    sliding-window average.  Identical images give exactly 1.0.
    """
    image = np.asarray(image, dtype=np.float64)
    masked = np.asarray(masked, dtype=np.float64)
    if image.shape != masked.shape:
        raise ValidationError(
            f"image shapes differ: {image.shape} vs {masked.shape}"
        )
    x = luma(image) * 255.0
    y = luma(masked) * 255.0
    mx = x.mean()
    my = y.mean()
    vx = x.var()
    vy = y.var()
    cov = ((x - mx) * (y - my)).mean()
    num = (2.0 * mx * my + _SSIM_E1) * (2.0 * cov + _SSIM_E2)
    den = (mx * mx + my * my + _SSIM_E1) * (vx + vy + _SSIM_E2)
    return float(num / den)


def mse(image, masked):
    """Mean squared difference over pixels and channels, inputs in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    masked = np.asarray(masked, dtype=np.float64)
    if image.shape != masked.shape:
        raise ValidationError(
            f"image shapes differ: {image.shape} vs {masked.shape}"
        )
    d = image - masked
    return float(np.mean(d * d))


@dataclass(frozen=True)
class PenaltyBranch:
    """Which penalty rule fired: 'none', 'delta' (with its value), or 'zeroed'."""

    kind: str
    delta: float = None

    def __str__(self):
        if self.kind == "delta":
            return f"delta({self.delta:.6g})"
        return self.kind


def avx(ad, ssim, fsim, mse, hit, cs, y_c, o_c):
    """Penalty-adjusted harmonic mean of the four fidelity components.

    Returns (value, PenaltyBranch).  Branch selection:

    * hit = 1: plain harmonic mean of (1-AD, SSIM, FSIM, 1-MSE).
    * hit = 0 and CS inside [-0.5, 0.5]: every raw component is first
      multiplied by delta = 1 - |y_c - o_c|.
    * hit = 0 and CS outside [-0.5, 0.5]: the map looked at the wrong
      class entirely; value is defined as 0.

    ``cs`` may be None (undefined correlation, e.g. a flat map); that is
    treated as non-significant, i.e. the delta branch.  Any transformed
    component reaching 0 yields 0 by the limit convention; in particular
    a non-positive SSIM (structure anticorrelated with the original)
    zeroes the value rather than being rejected.
    """
    ad = float(ad)
    ssim = float(ssim)
    fsim = float(fsim)
    mse = float(mse)
    if not 0.0 <= ad <= 1.0:
        raise ValidationError(f"AD out of range: {ad}")
    if not -1.0 <= ssim <= 1.0:
        raise ValidationError(f"SSIM out of range: {ssim}")
    if not 0.0 <= fsim <= 1.0:
        raise ValidationError(f"FSIM out of range: {fsim}")
    if not 0.0 <= mse <= 1.0:
        raise ValidationError(f"MSE out of range: {mse}")
    if hit not in (0, 1):
        raise ValidationError(f"hit must be 0 or 1, got {hit!r}")
    if cs is not None and not -1.0 <= float(cs) <= 1.0:
        raise ValidationError(f"CS out of range: {cs}")

    if hit == 1:
        branch = PenaltyBranch("none")
    elif cs is None or -CS_SIGNIFICANCE <= float(cs) <= CS_SIGNIFICANCE:
        delta = 1.0 - abs(float(y_c) - float(o_c))
        branch = PenaltyBranch("delta", delta)
        ad = ad * delta
        ssim = ssim * delta
        fsim = fsim * delta
        mse = mse * delta
    else:
        return 0.0, PenaltyBranch("zeroed")

    parts = (1.0 - ad, ssim, fsim, 1.0 - mse)
    if min(parts) <= 0.0:
        return 0.0, branch
    return 4.0 / sum(1.0 / p for p in parts), branch


@dataclass
class MetricRecord:
    """All measured quantities for one explanation map."""

    map_id: str
    cs: float  # None when undefined
    hit: int
    ad: float
    ssim: float
    fsim: float
    mse: float
    avx: float
    penalty_branch: str
    delta: float  # None unless penalty_branch == "delta"
    y_c: float
    o_c: float

    def to_dict(self):
        return {
            "map_id": self.map_id,
            "cs": self.cs,
            "hit": self.hit,
            "ad": self.ad,
            "ssim": self.ssim,
            "fsim": self.fsim,
            "mse": self.mse,
            "avx": self.avx,
            "penalty_branch": self.penalty_branch,
            "delta": self.delta,
            "y_c": self.y_c,
            "o_c": self.o_c,
        }


@dataclass
class EvaluationResult:
    records: list
    selected_id: str

    @property
    def selected(self):
        for rec in self.records:
            if rec.map_id == self.selected_id:
                return rec
        raise KeyError(self.selected_id)

    def to_dict(self):
        return {
            "selected": self.selected_id,
            "records": [r.to_dict() for r in self.records],
        }


def _map_key(map_id):
    """Numeric score behind ids like 'score:3', else None."""
    if isinstance(map_id, str) and map_id.startswith("score:"):
        return int(map_id.split(":", 1)[1])
    return None


def pair_for_cs(map_id, c2_ids):
    """Choose the c2 map to correlate against.

    Same id when the second class produced it; otherwise the nearest
    score value, ties going to the lower score.  None when no sensible
    partner exists.
    """
    if map_id in c2_ids:
        return map_id
    want = _map_key(map_id)
    scored = [(i, _map_key(i)) for i in c2_ids]
    scored = [(i, s) for i, s in scored if s is not None]
    if want is None or not scored:
        return None
    best = min(scored, key=lambda p: (abs(p[1] - want), p[1]))
    return best[0]


def evaluate_explanation(
    image,
    maps,
    y_c,
    class_index,
    runner,
    workdir,
    *,
    maps_c2=None,
    select="best-avx",
    image_tag="img",
):
    """Score every map against the live model and pick a headline.

    ``maps`` is an ordered {map_id: normalized map in [0,1]} dict; every
    map is applied to ``image``, the masked images go through the runner
    in one batch, and a MetricRecord is produced per map.  ``maps_c2``
    (same structure, built for the runner-up class) feeds CS; without it
    CS is undefined and a miss is zeroed rather than delta-penalized.

    ``select`` is "best-avx" (ties to the earliest map) or "score:<i>".
    Masked images are written under ``workdir`` as PNG so the runner
    sees exactly what a viewer would.
    """
    if not maps:
        raise ValidationError("no maps to evaluate")
    workdir.mkdir(parents=True, exist_ok=True)

    requests = []
    masked_arrays = {}
    for i, (map_id, m) in enumerate(maps.items()):
        masked = mask_image(image, m)
        path = workdir / f"masked_{image_tag}_{i:03d}.png"
        save_image(masked, path)
        masked_arrays[map_id] = masked
        requests.append((f"m{i:03d}", str(path), [int(class_index)]))
    id_of = {f"m{i:03d}": map_id for i, map_id in enumerate(maps.keys())}

    results = runner.infer(requests, workdir=workdir)

    records = []
    for rid, map_id in id_of.items():
        res = results[rid]
        o_c = _score_for(res, class_index)
        masked = masked_arrays[map_id]
        h = hit(class_index, res["topk_indices"])
        ad_v = average_drop(y_c, o_c)
        ss_v = ssim_global(image, masked)
        fs_v = fsim(image, masked)
        ms_v = mse(image, masked)

        if maps_c2:
            partner = pair_for_cs(map_id, list(maps_c2.keys()))
        else:
            partner = None
        if partner is not None:
            cs_v = class_sensitivity(maps[map_id], maps_c2[partner])
            if cs_v is None:
                log.info(
                    "map %s: flat map, CS undefined; treating as "
                    "non-significant",
                    map_id,
                )
            cs_for_avx = cs_v
        else:
            cs_v = None
            if maps_c2 is not None:
                log.info("map %s: no CS partner among c2 maps", map_id)
            if h == 0:
                # No second-class evidence to soften a miss: zero it.
                log.info(
                    "map %s: CS unavailable and hit=0, zeroing", map_id
                )
                cs_for_avx = 1.0
            else:
                cs_for_avx = None

        value, branch = avx(ad_v, ss_v, fs_v, ms_v, h, cs_for_avx, y_c, o_c)
        records.append(
            MetricRecord(
                map_id=map_id,
                cs=cs_v,
                hit=h,
                ad=ad_v,
                ssim=ss_v,
                fsim=fs_v,
                mse=ms_v,
                avx=value,
                penalty_branch=branch.kind,
                delta=branch.delta,
                y_c=float(y_c),
                o_c=float(o_c),
            )
        )

    selected_id = _select(records, select)
    return EvaluationResult(records=records, selected_id=selected_id)


def _score_for(result, class_index):
    table = result.get("score_for_class", {})
    for key in (str(int(class_index)), int(class_index)):
        if key in table:
            return float(table[key])
    raise ValidationError(
        f"runner response lacks a score for class {class_index}"
    )


def _select(records, policy):
    if policy == "best-avx":
        best = records[0]
        for rec in records[1:]:
            if rec.avx > best.avx:
                best = rec
        return best.map_id
    if isinstance(policy, str) and policy.startswith("score:"):
        for rec in records:
            if rec.map_id == policy:
                return rec.map_id
        raise ValidationError(f"no map named {policy!r} to select")
    raise ValidationError(f"unknown selection policy {policy!r}")
