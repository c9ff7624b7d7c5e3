"""Minimal SVG bar and line charts emitted as plain text."""

from __future__ import annotations

from html import escape
from typing import Mapping, Sequence

_W, _H = 640, 360
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 60, 20, 40, 70


def _frame(title: str, y_max: float, y_label: str) -> list[str]:
    plot_h = _H - _PAD_T - _PAD_B
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line x1="{_PAD_L}" y1="{_PAD_T}" x2="{_PAD_L}" y2="{_H - _PAD_B}" stroke="black"/>',
        f'<line x1="{_PAD_L}" y1="{_H - _PAD_B}" x2="{_W - _PAD_R}" y2="{_H - _PAD_B}" stroke="black"/>',
        f'<text x="14" y="{_PAD_T + plot_h / 2:.1f}" transform="rotate(-90 14 {_PAD_T + plot_h / 2:.1f})" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">{escape(y_label)}</text>',
    ]
    for i in range(5):
        v = y_max * i / 4
        y = _H - _PAD_B - plot_h * i / 4
        out.append(f'<line x1="{_PAD_L - 4}" y1="{y:.1f}" x2="{_PAD_L}" y2="{y:.1f}" stroke="black"/>')
        out.append(
            f'<text x="{_PAD_L - 6}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.3g}</text>'
        )
    return out


def bar_chart(values: Mapping[str, float], title: str, y_label: str = "accuracy", y_max: float | None = None) -> str:
    """One bar per key, in mapping order, labelled with its value."""
    names = list(values)
    top = y_max if y_max is not None else max([1e-12, *values.values()])
    out = _frame(title, top, y_label)
    plot_w = _W - _PAD_L - _PAD_R
    plot_h = _H - _PAD_T - _PAD_B
    slot = plot_w / max(len(names), 1)
    for i, name in enumerate(names):
        v = values[name]
        h = plot_h * min(max(v / top, 0.0), 1.0)
        x = _PAD_L + i * slot + slot * 0.15
        y = _H - _PAD_B - h
        cx = x + slot * 0.35
        out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{slot * 0.7:.1f}" height="{h:.1f}" fill="#4a78b5"/>')
        out.append(f'<text x="{cx:.1f}" y="{y - 4:.1f}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:.3f}</text>')
        out.append(
            f'<text x="{cx:.1f}" y="{_H - _PAD_B + 16}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(series: Mapping[str, Sequence[float]], title: str, y_label: str = "loss") -> str:
    """Polylines over a shared x axis (sample index), one colour per series."""
    colours = ("#4a78b5", "#d1603d", "#3a9c5b", "#8b5fbf", "#c9a227", "#555555")
    longest = max([len(s) for s in series.values()] + [2])
    top = max([1e-12] + [max(s) for s in series.values() if len(s)])
    out = _frame(title, top, y_label)
    plot_w = _W - _PAD_L - _PAD_R
    plot_h = _H - _PAD_T - _PAD_B
    for i, (name, ys) in enumerate(series.items()):
        colour = colours[i % len(colours)]
        pts = " ".join(
            f"{_PAD_L + plot_w * j / (longest - 1):.1f},{_H - _PAD_B - plot_h * max(y, 0.0) / top:.1f}" for j, y in enumerate(ys)
        )
        if pts:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.2"/>')
        out.append(
            f'<text x="{_PAD_L + 10 + 110 * i}" y="{_H - 20}" fill="{colour}" font-family="sans-serif" font-size="11">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
