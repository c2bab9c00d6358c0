"""Per-unit relevance scores: peaks of each unit's gradient density.

A unit's score is the number of retained peaks in the adaptive-bandwidth
density of its flattened, min-max normalized gradient (or activation)
values.  Degenerate units whose raw range collapses score 0.  Scoring is
pure per unit, so units can be scored in parallel without changing any
result.
"""

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import peak_prominences

from .errors import ValidationError
from .kde import EPS_VAR, KDEConfig, SampleSet, estimate_density

log = logging.getLogger(__name__)

DEFAULT_PROMINENCE = 0.05

SCORE_SOURCES = ("gradient", "activation")


def normalize_unit(values):
    """Min-max normalize one unit's values to [0, 1].

    Returns a SampleSet, or None when the raw range is at or below the
    degeneracy threshold (constant unit).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValidationError("unit has no values")
    if not np.all(np.isfinite(v)):
        raise ValidationError("unit contains a non-finite value")
    lo = v.min()
    rng = v.max() - lo
    if rng <= EPS_VAR:
        return None
    return SampleSet((v - lo) / rng)


def find_peaks(density, prominence_frac=DEFAULT_PROMINENCE):
    """Count retained peaks of a density estimate.

    A peak is an interior grid point strictly above both neighbours with
    topographic prominence at least ``prominence_frac`` times the global
    maximum.  Of two retained peaks closer than 2 grid cells the lower
    one is dropped (strict maxima can never violate this, but the rule
    is applied for completeness).  Boundary points are never peaks.
    """
    lam = np.asarray(density.density, dtype=np.float64)
    if lam.size < 3:
        return 0
    interior = (lam[1:-1] > lam[:-2]) & (lam[1:-1] > lam[2:])
    cand = np.nonzero(interior)[0] + 1
    if cand.size == 0:
        return 0
    proms = peak_prominences(lam, cand)[0]
    cand = cand[proms >= prominence_frac * lam.max()]
    if cand.size == 0:
        return 0
    # prune low peaks within 2 cells of a higher retained one
    order = cand[np.lexsort((cand, -lam[cand]))]
    kept = []
    for idx in order:
        if all(abs(idx - k) >= 2 for k in kept):
            kept.append(idx)
    return len(kept)


@dataclass
class UnitScoreVector:
    """Scores for every unit of a bundle plus normalization bookkeeping."""

    scores: np.ndarray  # int per unit
    normalization: list  # (min, max) per unit, raw scale
    source: str
    prominence: float
    densities: list | None = None  # per-unit DensityEstimate when kept

    def histogram(self):
        return dict(sorted(Counter(int(s) for s in self.scores).items()))

    def peak_range(self):
        return int(self.scores.min()), int(self.scores.max())


def _score_one(args):
    values, config_dict, prominence = args
    cfg = KDEConfig.from_dict(config_dict)
    sample = normalize_unit(values)
    if sample is None:
        return 0, None
    est = estimate_density(sample, cfg)
    return find_peaks(est, prominence), est


def score_units(bundle, config=None, *, score_source="gradient",
                prominence=DEFAULT_PROMINENCE, keep_densities=False,
                workers=None):
    """Score every unit of a bundle.

    score_source picks which tensor feeds the densities; the gradient
    reading is the default, activations are kept as an option.  workers
    > 1 scores units in separate processes; results are merged in unit
    order so the parallelization degree never changes a score.
    """
    if score_source not in SCORE_SOURCES:
        raise ValidationError(
            "score_source must be one of %s, got %r" % (SCORE_SOURCES, score_source)
        )
    if not 0.0 < prominence < 1.0:
        raise ValidationError("prominence must lie in (0, 1)")
    cfg = config if config is not None else KDEConfig()
    tensor = bundle.gradient if score_source == "gradient" else bundle.activation
    k_units = tensor.shape[2]
    units = [np.asarray(tensor[:, :, k], dtype=np.float64) for k in range(k_units)]
    norms = [(float(u.min()), float(u.max())) for u in units]
    jobs = [(u, cfg.to_dict(), prominence) for u in units]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_score_one, jobs, chunksize=4))
    else:
        results = [_score_one(j) for j in jobs]
    scores = np.array([r[0] for r in results], dtype=np.int64)
    densities = [r[1] for r in results] if keep_densities else None
    return UnitScoreVector(
        scores=scores,
        normalization=norms,
        source=score_source,
        prominence=float(prominence),
        densities=densities,
    )
