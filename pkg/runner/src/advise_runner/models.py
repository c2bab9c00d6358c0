"""Model registry: construction, weights resolution, preprocessing, layers.

Each supported model carries its published preprocessing recipe and the
name of its last convolutional layer, so `--layer last-conv` means the
same thing callers expect from the literature.  Weights resolve in three
modes, encoded as tags on the model id (`vgg16`, `vgg16+ptw`,
`vgg16+rnd0`):

  ptw     load pretrained weights from --weights-dir or the torch hub
          cache; error if no file is found (nothing is downloaded).
  rnd<N>  deterministic random initialization from seed N.
  (none)  pretrained when a local file exists, otherwise rnd0.

Export writes the resolved tag back into the bundle manifest (plus an
informational `sc<crop>` preprocessing tag), so re-exports driven by a
manifest reproduce the exact same network.
"""

import os
import re
from dataclasses import dataclass

import torch
from PIL import Image
from torchvision import transforms

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

LAST_CONV_ALIAS = "last-conv"


@dataclass(frozen=True)
class ModelEntry:
    """One supported architecture and its canonical input pipeline."""

    name: str
    resize: int
    crop: int
    mean: tuple
    std: tuple
    classes: int
    last_conv: str | None  # None: resolve as the last registered Conv2d
    interpolation: str = "bilinear"


class TinyNet(torch.nn.Module):
    """Small three-conv CNN for fast protocol tests; 64x64 in, 10 classes."""

    def __init__(self):
        super().__init__()
        self.features = torch.nn.Sequential(
            torch.nn.Conv2d(3, 8, 5, stride=2),
            torch.nn.ReLU(inplace=True),
            torch.nn.Conv2d(8, 10, 3, stride=2),
            torch.nn.ReLU(inplace=True),
            torch.nn.Conv2d(10, 12, 3, stride=2),
            torch.nn.ReLU(inplace=True),
        )
        self.pool = torch.nn.AdaptiveAvgPool2d(2)
        self.classifier = torch.nn.Linear(12 * 4, 10)

    def forward(self, x):
        x = self.pool(self.features(x))
        return self.classifier(torch.flatten(x, 1))


REGISTRY = {
    "alexnet": ModelEntry("alexnet", 256, 224, IMAGENET_MEAN, IMAGENET_STD,
                          1000, "features.10"),
    "vgg16": ModelEntry("vgg16", 256, 224, IMAGENET_MEAN, IMAGENET_STD,
                        1000, "features.28"),
    "resnet50": ModelEntry("resnet50", 256, 224, IMAGENET_MEAN, IMAGENET_STD,
                           1000, "layer4.2.conv3"),
    # timm names the final separable-conv stage conv4; resolved dynamically
    # so the alias keeps working if timm renames modules.
    "xception": ModelEntry("xception", 333, 299, (0.5, 0.5, 0.5),
                           (0.5, 0.5, 0.5), 1000, None,
                           interpolation="bicubic"),
    "tiny": ModelEntry("tiny", 64, 64, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5),
                       10, "features.4"),
}


@dataclass(frozen=True)
class ModelId:
    """Parsed model id: architecture plus weight-resolution mode."""

    name: str
    weights: str  # "auto" | "pretrained" | "random"
    seed: int = 0

    def canonical(self, pretrained):
        """Id string with the weight mode actually used pinned down."""
        entry = REGISTRY[self.name]
        tag = "ptw" if pretrained else "rnd%d" % self.seed
        return "%s+sc%d+%s" % (self.name, entry.crop, tag)


def parse_model_id(model):
    """Split `name[+tag...]` and validate every tag."""
    parts = str(model).split("+")
    name = parts[0]
    if name not in REGISTRY:
        raise ValueError(
            "unknown model %r; supported: %s" % (name, ", ".join(sorted(REGISTRY)))
        )
    entry = REGISTRY[name]
    weights, seed = "auto", 0
    for tag in parts[1:]:
        if tag == "ptw":
            weights = "pretrained"
        elif re.fullmatch(r"rnd\d+", tag):
            weights, seed = "random", int(tag[3:])
        elif re.fullmatch(r"sc\d+", tag):
            if int(tag[2:]) != entry.crop:
                raise ValueError(
                    "model %r tag %r disagrees with its input size %d"
                    % (model, tag, entry.crop)
                )
        else:
            raise ValueError("unknown tag %r in model id %r" % (tag, model))
    return ModelId(name=name, weights=weights, seed=seed)


def _construct(name, seed):
    torch.manual_seed(seed)
    if name == "tiny":
        return TinyNet()
    if name == "xception":
        try:
            import timm
        except ImportError:
            raise ValueError(
                "model 'xception' needs the timm package "
                "(pip install advise-torch-runner[xception])"
            )
        for timm_name in ("legacy_xception", "xception"):
            try:
                return timm.create_model(timm_name, pretrained=False)
            except Exception:
                continue
        raise ValueError("timm is installed but provides no xception model")
    from torchvision import models

    return getattr(models, name)(weights=None)


def _weight_candidates(name, weights_dir):
    """Local files that may hold a state dict, most specific first."""
    names = [name + ".pth", name + ".pt"]
    try:  # canonical torchvision checkpoint filename, e.g. vgg16-397923af.pth
        from torchvision.models import get_model_weights

        url = get_model_weights(name).IMAGENET1K_V1.url
        names.append(os.path.basename(url))
    except Exception:
        pass
    dirs = []
    if weights_dir:
        dirs.append(weights_dir)
    dirs.append(os.path.join(torch.hub.get_dir(), "checkpoints"))
    return [os.path.join(d, n) for d in dirs for n in names]


def load_model(model, weights_dir=None, device="cpu"):
    """Build the network in eval mode.

    Returns (module, canonical id, registry entry).  Never touches the
    network: pretrained weights must already exist on disk.
    """
    mid = parse_model_id(model)
    entry = REGISTRY[mid.name]
    found = None
    if mid.weights != "random":
        for path in _weight_candidates(mid.name, weights_dir):
            if os.path.isfile(path):
                found = path
                break
        if found is None and mid.weights == "pretrained":
            raise ValueError(
                "no local weights for %r; put a state dict in --weights-dir "
                "or drop the +ptw tag to run randomly initialized" % mid.name
            )
    net = _construct(mid.name, mid.seed)
    if found is not None:
        state = torch.load(found, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
    net = net.to(device).eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net, mid.canonical(pretrained=found is not None), entry


def resolve_layer(net, entry, layer):
    """Map a layer spec to (module, resolved dotted name)."""
    if layer in (None, "", LAST_CONV_ALIAS):
        name = entry.last_conv
        if name is None:
            convs = [
                (n, m)
                for n, m in net.named_modules()
                if isinstance(m, torch.nn.Conv2d)
            ]
            if not convs:
                raise ValueError("model %r has no Conv2d layers" % entry.name)
            return convs[-1][1], convs[-1][0]
    else:
        name = str(layer)
    try:
        return net.get_submodule(name), name
    except AttributeError:
        raise ValueError(
            "unknown layer %r for model %r (try %r)"
            % (layer, entry.name, LAST_CONV_ALIAS)
        )


def build_preprocess(entry):
    """The model's published input pipeline: resize, crop, normalize."""
    interp = (
        transforms.InterpolationMode.BICUBIC
        if entry.interpolation == "bicubic"
        else transforms.InterpolationMode.BILINEAR
    )
    return transforms.Compose(
        [
            transforms.Resize(entry.resize, interpolation=interp),
            transforms.CenterCrop(entry.crop),
            transforms.ToTensor(),
            transforms.Normalize(entry.mean, entry.std),
        ]
    )


def load_rgb(path):
    with Image.open(path) as img:
        return img.convert("RGB")
