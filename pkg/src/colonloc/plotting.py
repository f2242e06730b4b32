"""Minimal deterministic SVG export of a localization run.

Left panel: trajectory and major path projected on their two principal
axes.  Right panel: location index against time.  Output is plain SVG text
with fixed float formatting so identical inputs give identical files.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

PANEL = 320
PAD = 30


def _f(x: float) -> str:
    return "%.2f" % x


def _polyline(xy: np.ndarray, color: str, width: float = 1.0) -> str:
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in xy)
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def _fit_box(xy: np.ndarray, x0: float, y0: float, size: float) -> np.ndarray:
    lo = xy.min(axis=0)
    span = float(max(np.ptp(xy, axis=0).max(), 1e-12))
    out = (xy - lo) / span * size
    out[:, 1] = size - out[:, 1]
    return out + [x0, y0]


def localization_svg(
    positions: np.ndarray,
    path_points: np.ndarray,
    times: Sequence[float],
    index: Sequence[float],
    title: Optional[str] = None,
    comment: Optional[str] = None,
) -> str:
    """SVG text with the trajectory/path panel and the index-vs-time panel."""
    P = np.asarray(positions, dtype=float)
    Q = np.asarray(path_points, dtype=float)
    both = np.vstack([P, Q])
    centre = both.mean(axis=0)
    # principal plane of the trajectory
    _, _, Vt = np.linalg.svd(both - centre, full_matrices=False)
    basis = Vt[:2].T
    p2 = (P - centre) @ basis
    q2 = (Q - centre) @ basis
    box = PANEL - 2 * PAD
    allp = _fit_box(np.vstack([p2, q2]), PAD, PAD, box)
    p2, q2 = allp[: len(p2)], allp[len(p2) :]

    t = np.asarray(times, dtype=float)
    f = np.asarray(index, dtype=float)
    span_t = max(t[-1] - t[0], 1e-12)
    ix = PANEL + PAD + (t - t[0]) / span_t * box
    iy = PAD + (1.0 - f) * box

    w, h = 2 * PANEL, PANEL
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">']
    if comment:
        parts.append(f"<!-- {comment.lstrip('# ')} -->")
    parts.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>')
    parts.append(_polyline(p2, "#1f77b4", 0.8))
    parts.append(_polyline(q2, "#d62728", 1.6))
    a, b = q2[0], q2[-1]
    parts.append(f'<circle cx="{_f(a[0])}" cy="{_f(a[1])}" r="3" fill="black"/>')
    parts.append(f'<circle cx="{_f(b[0])}" cy="{_f(b[1])}" r="3" fill="gray"/>')
    x0, y0 = PANEL + PAD, PAD
    parts.append(f'<rect x="{x0}" y="{y0}" width="{box}" height="{box}" fill="none" stroke="black" stroke-width="0.5"/>')
    parts.append(_polyline(np.stack([ix, iy], axis=1), "#2ca02c", 1.0))
    parts.append(f'<text x="{PAD}" y="{h - 8}" font-size="11">trajectory (blue), major path (red)</text>')
    parts.append(f'<text x="{x0}" y="{h - 8}" font-size="11">location index vs time</text>')
    if title:
        parts.append(f'<text x="{PAD}" y="16" font-size="12">{title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
