"""Small I/O helpers: deterministic JSON and float formatting.

Every JSON/CSV artifact this package writes must be byte-identical across
runs with the same inputs, so floats are pinned to 9 significant digits
and JSON key order is fixed by construction (no timestamps anywhere).
"""

import json

import numpy as np


def fmt9(x):
    """Format a float with 9 significant digits (CSV/SVG cells)."""
    return "%.9g" % float(x)


def round9(obj):
    """Recursively round floats in a JSON-ready structure to 9 sig digits."""
    if isinstance(obj, dict):
        return {k: round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round9(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(fmt9(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return round9(obj.tolist())
    return obj


def dump_json(obj, path):
    """Write JSON with fixed formatting; returns the serialized text."""
    text = json.dumps(round9(obj), indent=2, ensure_ascii=True)
    with open(path, "w") as fh:
        fh.write(text + "\n")
    return text


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
