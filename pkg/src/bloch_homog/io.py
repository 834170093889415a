"""Output helpers: RFC-4180 CSV, JSON with complex support, and small SVG log-log charts."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def to_jsonable(obj):
    """Recursively convert numpy/complex objects; complex numbers become [re, im] pairs."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if callable(obj):
        return None
    return obj


def write_json(path: Path | str, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=False) + "\n")
    return path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return str(v)


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def loglog_svg(series: dict[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "epsilon", ylabel: str = "eta", width: int = 480, height: int = 360) -> str:
    """Minimal log-log line chart; every series is drawn as a polyline with markers."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ok = (xs > 0) & (ys > 0)
    if not ok.any():
        raise ValueError("nothing positive to plot on log axes")
    lx0, lx1 = np.log10(xs[ok].min()), np.log10(xs[ok].max())
    ly0, ly1 = np.log10(ys[ok].min()), np.log10(ys[ok].max())
    lx1, ly1 = max(lx1, lx0 + 1e-3), max(ly1, ly0 + 1e-3)
    m = 50

    def px(x):
        return m + (np.log10(x) - lx0) / (lx1 - lx0) * (width - 2 * m)

    def py(y):
        return height - m - (np.log10(y) - ly0) / (ly1 - ly0) * (height - 2 * m)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" '
             'fill="none" stroke="#888"/>',
             f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">{xlabel} (log)</text>',
             f'<text x="14" y="{height / 2}" text-anchor="middle" '
             f'transform="rotate(-90 14 {height / 2})">{ylabel} (log)</text>']
    for e in range(math.ceil(lx0), math.floor(lx1) + 1):
        x = px(10.0**e)
        parts.append(f'<text x="{x:.1f}" y="{height - m + 14}" text-anchor="middle">1e{e}</text>')
    for e in range(math.ceil(ly0), math.floor(ly1) + 1):
        y = py(10.0**e)
        parts.append(f'<text x="{m - 4}" y="{y:.1f}" text-anchor="end">1e{e}</text>')
    for i, (label, (x, y)) in enumerate(series.items()):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = (x > 0) & (y > 0)
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep], y[keep]))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for a, b in zip(x[keep], y[keep]):
            parts.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{c}"/>')
        parts.append(f'<text x="{width - m - 4}" y="{m + 14 + 14 * i}" text-anchor="end" fill="{c}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path: Path | str, svg: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
