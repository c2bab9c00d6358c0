"""Torch CNN bridge for the advise runner protocol."""

from .bundle_io import write_bundle_dir
from .models import REGISTRY, load_model, parse_model_id, resolve_layer

__all__ = [
    "REGISTRY",
    "load_model",
    "parse_model_id",
    "resolve_layer",
    "write_bundle_dir",
]
