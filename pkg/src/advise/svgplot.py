"""Minimal self-drawn SVG line plots.

No plotting library: the few hundred bytes of SVG we need are written
directly so that identical data produces byte-identical files.  All
coordinates are formatted with two decimals and there is no timestamp,
random id, or library version string anywhere in the output.
"""

from .errors import ValidationError
from .ioutil import fmt9

_PALETTE = (
    "#1f6fb2",
    "#c44e52",
    "#2e8b57",
    "#8a2be2",
    "#b8860b",
    "#444444",
)

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 24, 28, 48  # margins: left right top bottom


def _f(x):
    return "%.2f" % x


def line_plot(series, path, *, x_label="δ", y_label="AVX", title="",
              y_range=(0.0, 1.0)):
    """Write a fixed-size line plot of the given series to ``path``.

    ``series`` is an ordered {label: (xs, ys)} mapping; insertion order
    fixes color assignment and legend order.  The y axis is pinned to
    ``y_range`` (scores live in [0, 1]); the x axis spans the data.
    """
    if not series:
        raise ValidationError("no series to plot")
    xs_all = [x for xs, _ in series.values() for x in xs]
    if not xs_all:
        raise ValidationError("series contain no points")
    x_lo, x_hi = min(xs_all), max(xs_all)
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 0.05, x_hi + 0.05
    y_lo, y_hi = y_range

    px_w = _W - _ML - _MR
    px_h = _H - _MT - _MB

    def sx(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * px_w

    def sy(y):
        return _MT + (1.0 - (y - y_lo) / (y_hi - y_lo)) * px_h

    parts = []
    parts.append(
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">'
    )
    parts.append(f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>')
    if title:
        parts.append(
            f'<text x="{_f(_W / 2)}" y="18" font-family="sans-serif" '
            f'font-size="13" text-anchor="middle">{_esc(title)}</text>'
        )

    # frame and horizontal grid with y tick labels
    for i in range(5):
        y_val = y_lo + (y_hi - y_lo) * i / 4.0
        y_px = sy(y_val)
        parts.append(
            f'<line x1="{_f(_ML)}" y1="{_f(y_px)}" x2="{_f(_W - _MR)}" '
            f'y2="{_f(y_px)}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(_ML - 6)}" y="{_f(y_px + 4)}" '
            f'font-family="sans-serif" font-size="11" text-anchor="end">'
            f"{fmt9(y_val)}</text>"
        )

    # x ticks on the unique sorted data abscissae, thinned to a dozen
    ticks = sorted(set(xs_all))
    step = max(1, (len(ticks) + 11) // 12)
    for x_val in ticks[::step]:
        x_px = sx(x_val)
        parts.append(
            f'<line x1="{_f(x_px)}" y1="{_f(_H - _MB)}" x2="{_f(x_px)}" '
            f'y2="{_f(_H - _MB + 4)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(x_px)}" y="{_f(_H - _MB + 17)}" '
            f'font-family="sans-serif" font-size="11" text-anchor="middle">'
            f"{fmt9(x_val)}</text>"
        )

    parts.append(
        f'<rect x="{_f(_ML)}" y="{_f(_MT)}" width="{_f(px_w)}" '
        f'height="{_f(px_h)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )

    # axis labels, fixed text
    parts.append(
        f'<text x="{_f(_ML + px_w / 2)}" y="{_f(_H - 10)}" '
        f'font-family="sans-serif" font-size="12" text-anchor="middle">'
        f"{_esc(x_label)}</text>"
    )
    parts.append(
        f'<text x="16" y="{_f(_MT + px_h / 2)}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {_f(_MT + px_h / 2)})">'
        f"{_esc(y_label)}</text>"
    )

    for si, (label, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[si % len(_PALETTE)]
        pts = " ".join(f"{_f(sx(x))},{_f(sy(y))}" for x, y in zip(xs, ys))
        if len(xs) > 1:
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        for x, y in zip(xs, ys):
            parts.append(
                f'<circle cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="2.5" '
                f'fill="{color}"/>'
            )
        ly = _MT + 14 + 16 * si
        lx = _W - _MR - 150
        parts.append(
            f'<line x1="{_f(lx)}" y1="{_f(ly - 4)}" x2="{_f(lx + 18)}" '
            f'y2="{_f(ly - 4)}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_f(lx + 24)}" y="{_f(ly)}" '
            f'font-family="sans-serif" font-size="11">{_esc(label)}</text>'
        )

    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def _esc(text):
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
    )
