"""Shared fixtures: synthetic bundles, sample factories, a fake runner.

KDE-heavy tests use FAST_KDE (coarse grids, fixed stiffness) so the
whole suite stays single-core friendly; anything asserting on exact
pipeline defaults builds its own config.
"""

import numpy as np
import pytest
from scipy.stats import norm

from advise.bundles import Manifest, TensorBundle
from advise.imgio import load_image, save_image
from advise.ioutil import round9
from advise.kde import KDEConfig

# Coarse but inside every validated bound; used wherever the test only
# needs *a* density, not the default-resolution one.
FAST_KDE = KDEConfig(grid_size=64, bandwidth_grid_size=16,
                     gamma_mode="fixed:0.3")


def cluster_samples(rng, n, centers, sigma=0.04, zc=1.75):
    """n values split evenly across bounded clusters at the given centers.

    Clusters are quantile-stratified truncated normals: random, but with
    no stray tail samples.  Min-max normalization pins the extreme
    samples to 0 and 1, so an unbounded tail would read as its own tiny
    mode; bounded clusters keep the intended peak count decisive at any
    sample count the tests use.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=np.float64))
    per = np.full(centers.size, n // centers.size)
    per[: n - per.sum()] += 1
    qlo, qhi = norm.cdf(-zc), norm.cdf(zc)
    parts = []
    for c, k in zip(centers, per):
        u = (np.arange(k) + rng.uniform(0.2, 0.8, k)) / k
        parts.append(c + sigma * norm.ppf(qlo + (qhi - qlo) * u))
    return np.clip(np.concatenate(parts), 0.0, 1.0)


def make_bundle(rng, unit_clusters, spatial=(7, 7), input_size=(40, 40),
                class_index=3, class_score=0.62, activation=None):
    """Bundle whose unit k's gradients form unit_clusters[k] clusters.

    0 clusters means a constant slice (degenerate unit).  Activations
    default to positive random values so Grad-CAM style sums are
    nontrivial.
    """
    u, v = spatial
    k_units = len(unit_clusters)
    grad = np.empty((u, v, k_units))
    for k, c in enumerate(unit_clusters):
        if c == 0:
            grad[:, :, k] = 0.7
        else:
            centers = np.linspace(0.15, 0.85, c)
            vals = cluster_samples(rng, u * v, centers)
            grad[:, :, k] = (vals * 4.0 - 2.0).reshape(u, v)
    if activation is None:
        activation = rng.uniform(0.1, 1.0, (u, v, k_units))
    man = Manifest(
        model="test", layer="conv", image="synthetic.png",
        input_size=list(input_size), class_index=class_index,
        class_score=class_score,
        top5=[class_index]
        + [i for i in (1, 0, 7, 2, 5) if i != class_index][:4],
    )
    return TensorBundle(manifest=man, activation=activation, gradient=grad)


def textured_image(seed=0, size=(64, 64)):
    """Smooth ramps plus sinusoidal texture; FSIM needs structure."""
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = 0.3 + 0.4 * xx / w + 0.2 * yy / h
    tex = 0.12 * np.sin(2 * np.pi * xx / 9.0) * np.cos(2 * np.pi * yy / 7.0)
    blob = 0.25 * np.exp(-(((xx - w / 2) ** 2 + (yy - h / 2) ** 2)
                           / (2 * (w / 6.0) ** 2)))
    rng = np.random.default_rng(seed)
    img = np.stack([
        base + tex + blob,
        base + 0.8 * tex,
        base - 0.5 * tex + 0.1 * blob,
    ], axis=-1)
    img += rng.normal(0.0, 0.01, img.shape)
    return np.clip(img, 0.0, 1.0)


class FakeRunner:
    """In-process runner double with deterministic, content-keyed scores.

    The score of class c on an image is a rounded function of the pixel
    mean, so a byte-identical image always gets the identical score.
    ``force_top1`` keeps the requested class inside the reported top-5
    (hit = 1) unless disabled.
    """

    def __init__(self, force_top1=True):
        self.force_top1 = force_top1
        self.calls = []

    def score_of(self, path, cls):
        arr = load_image(path)
        raw = 0.05 + 0.9 * float(arr.mean())
        return round9(raw / (1.0 + 0.11 * (int(cls) % 5)))

    def infer(self, images, workdir, topk=5):
        self.calls.append([iid for iid, _, _ in images])
        out = {}
        for iid, path, classes in images:
            cls = int(classes[0]) if classes else 0
            score = self.score_of(path, cls)
            if self.force_top1:
                indices = [cls] + [i for i in (11, 12, 13, 14, 15)
                                   if i != cls][:4]
            else:
                indices = [11, 12, 13, 14, 15]
            scores = sorted(
                (min(1.0, max(0.0, score * f))
                 for f in (1.0, 0.5, 0.25, 0.12, 0.06)),
                reverse=True,
            )
            out[iid] = {
                "topk_indices": indices,
                "topk_scores": scores,
                "score_for_class": {str(cls): score},
            }
        return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def image64(tmp_path):
    """A textured image saved as PNG and reloaded, so arrays round-trip."""
    path = tmp_path / "input.png"
    save_image(textured_image(), path)
    return load_image(path), path
