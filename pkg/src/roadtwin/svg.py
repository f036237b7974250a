"""Tiny deterministic SVG polyline charts."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, PAD = 640, 400, 50


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


class _Frame:
    def __init__(self, xlim, ylim, width=W, height=H, equal=False):
        (x0, x1), (y0, y1) = xlim, ylim
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            y1 = y0 + 1.0
        sx = (width - 2 * PAD) / (x1 - x0)
        sy = (height - 2 * PAD) / (y1 - y0)
        if equal:
            sx = sy = min(sx, sy)
        self.x0, self.y0, self.sx, self.sy, self.h = x0, y0, sx, sy, height

    def map(self, x, y):
        return PAD + (x - self.x0) * self.sx, self.h - PAD - (y - self.y0) * self.sy


def _points(frame, x, y):
    return " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (frame.map(a, b) for a, b in zip(x, y)))


def _header(title, width=W, height=H):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>']


def _legend(names, width=W):
    out = []
    for k, name in enumerate(names):
        y = PAD + 16 * k
        c = PALETTE[k % len(PALETTE)]
        out.append(f'<line x1="{width - 170}" y1="{y}" x2="{width - 150}" y2="{y}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{width - 144}" y="{y + 4}" font-size="12">{escape(name)}</text>')
    return out


def line_chart(path, series, title="", xlabel="", ylabel="", markers=True):
    """``series`` maps a label to (x, y); one polyline per label."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    fr = _Frame((xs.min(), xs.max()), (min(0.0, ys.min()), ys.max() * 1.05 if ys.max() > 0 else 1.0))
    out = _header(title)
    bx, by = fr.map(xs.min(), min(0.0, ys.min()))
    out.append(f'<line x1="{PAD}" y1="{_fmt(by)}" x2="{W - PAD}" y2="{_fmt(by)}" stroke="black"/>')
    out.append(f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>')
    for xv in np.unique(xs):
        px, _ = fr.map(xv, 0)
        out.append(f'<text x="{_fmt(px)}" y="{H - PAD + 16}" text-anchor="middle" font-size="11">{_fmt(xv)}</text>')
    out.append(f'<text x="{W / 2:.0f}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{H / 2:.0f}" font-size="12" transform="rotate(-90 14 {H / 2:.0f})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    for k, (name, (x, y)) in enumerate(series.items()):
        c = PALETTE[k % len(PALETTE)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{_points(fr, x, y)}"/>')
        if markers:
            for a, b in zip(x, y):
                px, py = fr.map(a, b)
                out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" fill="{c}"/>')
    out += _legend(list(series))
    out.append("</svg>")
    _write(path, out)


def path_plot(path, grid, paths, title=""):
    """Grid map (defect cells shaded) with planned paths overlaid."""
    lo = grid.origin
    hi = lo + grid.resolution * np.array([grid.width, grid.height])
    width = W
    fr = _Frame((lo[0], hi[0]), (lo[1], hi[1]), width=width, equal=True)
    height = int(round(2 * PAD + (hi[1] - lo[1]) * fr.sy))
    fr.h = height
    out = _header(title, width, height)
    x0, y0 = fr.map(lo[0], hi[1])
    out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt((hi[0] - lo[0]) * fr.sx)}" '
               f'height="{_fmt((hi[1] - lo[1]) * fr.sy)}" fill="#eeeeee" stroke="black"/>')
    r = grid.resolution
    for i, j in np.argwhere(grid.state == 1).tolist():
        cx, cy = fr.map(lo[0] + j * r, lo[1] + (i + 1) * r)
        out.append(f'<rect x="{_fmt(cx)}" y="{_fmt(cy)}" width="{_fmt(r * fr.sx)}" '
                   f'height="{_fmt(r * fr.sy)}" fill="#555555"/>')
    for k, (name, poses) in enumerate(paths.items()):
        p = np.asarray(poses, float)
        c = PALETTE[k % len(PALETTE)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" '
                   f'points="{_points(fr, p[:, 0], p[:, 1])}"/>')
    out += _legend(list(paths), width)
    out.append("</svg>")
    _write(path, out)


def _write(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
