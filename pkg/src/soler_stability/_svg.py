"""Minimal deterministic SVG plotting (scatter, lines, reference rays)."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, PAD = 640, 480, 60


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick(x: float) -> str:
    return f"{x:.4g}"


@dataclass
class Figure:
    """Axes with fixed data limits; elements are appended in call order."""

    xlim: tuple
    ylim: tuple
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    parts: list = field(default_factory=list)

    def _px(self, x, y):
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        px = PAD + (np.asarray(x) - x0) / (x1 - x0) * (WIDTH - 2 * PAD)
        py = HEIGHT - PAD - (np.asarray(y) - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)
        return px, py

    def _inside(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        return ((x >= self.xlim[0]) & (x <= self.xlim[1])
                & (y >= self.ylim[0]) & (y <= self.ylim[1]))

    def points(self, x, y, color="black", radius=2.5, label=None):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = self._inside(x, y)
        px, py = self._px(x[keep], y[keep])
        for a, b in zip(px, py):
            self.parts.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{radius}" '
                              f'fill="{color}"/>')
        if label:
            self._legend(label, color)

    def line(self, x, y, color="black", width=1.5, dash=None, label=None):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = np.isfinite(x) & np.isfinite(y)
        px, py = self._px(x[keep], y[keep])
        if len(px) < 2:
            return
        d = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{d}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}/>')
        if label:
            self._legend(label, color)

    def _legend(self, label, color):
        k = sum(1 for p in self.parts if p.startswith("<!--legend-->"))
        y = PAD + 14 + 16 * k
        self.parts.append(f'<!--legend--><text x="{WIDTH - PAD - 150}" y="{y}" '
                          f'font-size="12" fill="{color}">{escape(label)}</text>')

    def render(self) -> str:
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}">',
               f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
               f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
               f'fill="none" stroke="#444"/>']
        for t in np.linspace(0, 1, 5):
            xv = x0 + t * (x1 - x0)
            yv = y0 + t * (y1 - y0)
            px, _ = self._px(xv, y0)
            _, py = self._px(x0, yv)
            out.append(f'<text x="{_fmt(px)}" y="{HEIGHT - PAD + 18}" font-size="11" '
                       f'text-anchor="middle">{_tick(xv)}</text>')
            out.append(f'<text x="{PAD - 6}" y="{_fmt(py + 4)}" font-size="11" '
                       f'text-anchor="end">{_tick(yv)}</text>')
        out.append(f'<text x="{WIDTH / 2}" y="{PAD / 2}" font-size="14" '
                   f'text-anchor="middle">{escape(self.title)}</text>')
        out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" font-size="12" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{HEIGHT / 2}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(self.ylabel)}</text>')
        out.extend(p.replace("<!--legend-->", "") for p in self.parts)
        out.append("</svg>")
        return "\n".join(out) + "\n"


def padded_limits(values, frac=0.08, floor=1e-12):
    v = np.asarray(values, float)
    v = v[np.isfinite(v)]
    if len(v) == 0:
        return (-1.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    span = max(hi - lo, floor, 1e-3 * max(abs(lo), abs(hi)))
    return (lo - frac * span, hi + frac * span)
