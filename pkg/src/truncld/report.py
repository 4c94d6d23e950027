"""CSV tables and dependency-free SVG convergence plots."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from xml.sax.saxutils import escape

RESULT_HEADER = ["n", "estimate", "se", "ci_lo", "ci_hi", "analytic_limit", "rel_error", "method"]


def fmt(v) -> str:
    """17 significant digits for floats, empty cell for missing values."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


@dataclass
class ResultRow:
    n: int
    estimate: float
    se: float
    ci_lo: float
    ci_hi: float
    analytic_limit: float | None
    method: str
    wall_ms: float = 0.0

    @property
    def rel_error(self) -> float | None:
        lim = self.analytic_limit
        if lim is None or lim == 0 or not math.isfinite(lim):
            return None
        return abs(self.estimate - lim) / abs(lim)

    def cells(self) -> list[str]:
        return [fmt(self.n), fmt(self.estimate), fmt(self.se), fmt(self.ci_lo), fmt(self.ci_hi),
                fmt(self.analytic_limit), fmt(self.rel_error), self.method]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["rel_error"] = self.rel_error
        return d


def write_table(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_results(path: Path, rows: list[ResultRow]) -> None:
    write_table(path, RESULT_HEADER, [r.cells() for r in rows])


def convergence_svg(rows: list[ResultRow], title: str, ylabel: str,
                    width: int = 640, height: int = 400) -> str:
    """Estimate with CI whiskers against ``n`` on a log axis, plus the limit line."""
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    pts = [r for r in rows if math.isfinite(r.estimate)]
    limits = [r.analytic_limit for r in rows if r.analytic_limit is not None and math.isfinite(r.analytic_limit)]
    ys = [v for r in pts for v in (r.ci_lo, r.ci_hi, r.estimate) if math.isfinite(v)] + limits
    if not ys:
        ys = [0.0, 1.0]
    ylo, yhi = min(ys), max(ys)
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.08 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    ns = [max(r.n, 1) for r in rows] or [1, 10]
    xlo, xhi = math.log10(min(ns)), math.log10(max(ns))
    if xhi - xlo < 1e-12:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    xlo, xhi = xlo - 0.1 * (xhi - xlo), xhi + 0.1 * (xhi - xlo)

    def sx(n):
        return left + (math.log10(max(n, 1)) - xlo) / (xhi - xlo) * pw

    def sy(v):
        return top + (yhi - v) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for dec in range(math.ceil(xlo), math.floor(xhi) + 1):
        x = sx(10**dec)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle">1e{dec}</text>')
    for i in range(5):
        v = ylo + (yhi - ylo) * i / 4
        y = sy(v)
        out.append(f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">n (log scale)</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    if limits:
        y = sy(limits[-1])
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" '
                   f'stroke="firebrick" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{left + pw - 4}" y="{y - 6:.1f}" text-anchor="end" fill="firebrick">'
                   f'limit {limits[-1]:.4g}</text>')
    for r in pts:
        x = sx(r.n)
        if math.isfinite(r.ci_lo) and math.isfinite(r.ci_hi):
            lo, hi = sy(max(r.ci_lo, ylo)), sy(min(r.ci_hi, yhi))
            out.append(f'<line x1="{x:.1f}" y1="{lo:.1f}" x2="{x:.1f}" y2="{hi:.1f}" stroke="steelblue"/>')
            for yy in (lo, hi):
                out.append(f'<line x1="{x - 4:.1f}" y1="{yy:.1f}" x2="{x + 4:.1f}" y2="{yy:.1f}" stroke="steelblue"/>')
        out.append(f'<circle cx="{x:.1f}" cy="{sy(r.estimate):.1f}" r="3.5" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
