"""Dependency-free SVG scatter rendering for visual inspection.

Points are colored by cluster with a fixed categorical palette; noise is
drawn in gray, following the usual presentation of clustered localizations.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import NOISE

__all__ = ["write_svg"]

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5",
]
_NOISE_COLOR = "#b0b0b0"


def write_svg(path, coords, labels=None, size: int = 720,
              radius: float = 2.0, title: Optional[str] = None) -> None:
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.int64) if labels is not None \
        else np.full(coords.shape[0], NOISE, dtype=np.int64)
    if coords.shape[0]:
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
    else:
        lo = np.zeros(2)
        hi = np.ones(2)
    span = np.maximum(hi - lo, 1e-9)
    scale = (size - 20) / span.max()

    def sx(x: float) -> float:
        return 10 + (x - lo[0]) * scale

    def sy(y: float) -> float:
        return size - 10 - (y - lo[1]) * scale  # y axis points up

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="12" y="16" font-size="12" font-family="sans-serif">'
                     f'{title}</text>')
    for (x, y), lab in zip(coords, labels):
        color = _NOISE_COLOR if lab == NOISE else _PALETTE[int(lab) % len(_PALETTE)]
        opacity = "0.5" if lab == NOISE else "0.9"
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="{radius}" '
                     f'fill="{color}" fill-opacity="{opacity}"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
