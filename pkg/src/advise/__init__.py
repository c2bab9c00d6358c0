"""Score-grouped CNN saliency maps from gradient-density peak counts.

The pipeline: a runner exports an activation/gradient bundle for one
image and class; each unit's flattened gradients get an
adaptive-bandwidth density estimate whose peak count is the unit's
score; units sharing a score form one saliency map; maps are evaluated
by masked re-inference under a seven-metric protocol with a
salt-and-pepper robustness sweep on top.
"""

from .ablation import AblationPlan, run_ablation, salt_pepper
from .bundles import Manifest, TensorBundle, read_bundle, write_bundle
from .errors import (
    AdviseError,
    NumericalError,
    RunnerError,
    RunnerTimeout,
    ValidationError,
    ZeroVarianceError,
)
from .fsim import fsim
from .kde import (
    DensityEstimate,
    KDEConfig,
    SampleSet,
    estimate_density,
    fixed_density,
    gauss_kernel,
    local_bandwidths,
    local_cost,
    optimize_fixed_bandwidth,
    pair_window_integral,
    smooth_bandwidths,
    variable_cost,
)
from .metrics import (
    EvaluationResult,
    MetricRecord,
    average_drop,
    avx,
    class_sensitivity,
    evaluate_explanation,
    hit,
    mse,
    ssim_global,
)
from .runner import RunnerHandle
from .saliency import (
    SaliencyMapSet,
    build_advise_maps,
    gradcam_map,
    group_map,
    group_units,
    mask_image,
    resize_bicubic,
)
from .scoring import UnitScoreVector, find_peaks, normalize_unit, score_units

__version__ = "0.1.0"

__all__ = [
    "AblationPlan",
    "AdviseError",
    "DensityEstimate",
    "EvaluationResult",
    "KDEConfig",
    "Manifest",
    "MetricRecord",
    "NumericalError",
    "RunnerError",
    "RunnerHandle",
    "RunnerTimeout",
    "SaliencyMapSet",
    "SampleSet",
    "TensorBundle",
    "UnitScoreVector",
    "ValidationError",
    "ZeroVarianceError",
    "average_drop",
    "avx",
    "build_advise_maps",
    "class_sensitivity",
    "estimate_density",
    "evaluate_explanation",
    "find_peaks",
    "fixed_density",
    "fsim",
    "gauss_kernel",
    "gradcam_map",
    "group_map",
    "group_units",
    "hit",
    "local_bandwidths",
    "local_cost",
    "mask_image",
    "mse",
    "normalize_unit",
    "optimize_fixed_bandwidth",
    "pair_window_integral",
    "read_bundle",
    "resize_bicubic",
    "run_ablation",
    "salt_pepper",
    "score_units",
    "smooth_bandwidths",
    "ssim_global",
    "variable_cost",
    "write_bundle",
]
