"""CSV and self-contained SVG output for aggregated sweeps."""
from __future__ import annotations

import json
import math
import os
from html import escape

from .. import __version__
from .experiment import AggregateRow

__all__ = ["OutputError", "CSV_HEADER", "csv_text", "write_csv", "error_bar_svg", "emit_outputs"]

CSV_HEADER = "panel,p,mean_gap,std_gap,mean_gap_conditional,n_escaped,R,seed"


class OutputError(OSError):
    """Failure writing an output file; the message names the path."""


def _fmt(x: float) -> str:
    return repr(float(x))


def provenance_lines(provenance: dict | None) -> list[str]:
    """``# key: json`` lines; keys sorted so the text is reproducible."""
    lines = [f"# sgdgenlab {__version__}"]
    for key in sorted(provenance or {}):
        lines.append(f"# {key}: {json.dumps(provenance[key], sort_keys=True, separators=(',', ':'))}")
    return lines


def csv_text(panels: dict[str, list[AggregateRow]], seed: int, provenance: dict | None = None) -> str:
    lines = provenance_lines(provenance)
    lines.append(CSV_HEADER)
    for name, rows in panels.items():
        for r in rows:
            lines.append(
                ",".join(
                    [
                        name,
                        str(r.p),
                        _fmt(r.mean_gap),
                        _fmt(r.std_gap),
                        _fmt(r.mean_gap_conditional),
                        str(r.n_escaped),
                        str(r.R),
                        str(seed),
                    ]
                )
            )
    return "\n".join(lines) + "\n"


def _write(path: str, text: str) -> str:
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror or exc}") from exc
    return path


def write_csv(path: str, panels: dict[str, list[AggregateRow]], seed: int, provenance: dict | None = None) -> str:
    return _write(path, csv_text(panels, seed, provenance))


# -- SVG ---------------------------------------------------------------------

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 20, 40, 60


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def error_bar_svg(
    rows: list[AggregateRow],
    title: str = "",
    xlabel: str = "dimension p",
    ylabel: str = "generalization error",
    log_y: bool | None = None,
) -> str:
    """Mean +- one standard deviation against ``p``.

    ``log_y=None`` switches to a log axis when the positive means span more
    than three decades.  On a log axis, lower whiskers that would cross zero
    are clipped to the bottom of the plot.
    """
    xs = [float(r.p) for r in rows]
    ms = [float(r.mean_gap) for r in rows]
    ss = [float(r.std_gap) for r in rows]
    finite = [(x, m, s) for x, m, s in zip(xs, ms, ss) if math.isfinite(m) and math.isfinite(s)]
    pos = [m for _, m, _ in finite if m > 0]
    if log_y is None:
        log_y = len(pos) >= 2 and max(pos) / min(pos) > 1e3
    if log_y and not pos:
        log_y = False

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    if finite:
        x_lo, x_hi = min(x for x, _, _ in finite), max(x for x, _, _ in finite)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
        pad = 0.05 * (x_hi - x_lo)
        x_lo, x_hi = x_lo - pad, x_hi + pad
        if log_y:
            floor = min(pos) / 10.0
            tops = [m + s for _, m, s in finite if m + s > 0]
            y_lo = math.floor(math.log10(floor))
            y_hi = math.ceil(math.log10(max(tops)))
            if y_hi <= y_lo:
                y_hi = y_lo + 1
            ty = lambda v: math.log10(max(v, 10.0**y_lo))  # noqa: E731
            ticks = [float(e) for e in range(y_lo, y_hi + 1)]
            tick_text = lambda e: f"1e{int(e)}"  # noqa: E731
        else:
            y_lo = min(0.0, min(m - s for _, m, s in finite))
            y_hi = max(m + s for _, m, s in finite)
            if y_hi <= y_lo:
                y_hi = y_lo + 1.0
            ticks = _nice_ticks(y_lo, y_hi)
            y_lo, y_hi = min(y_lo, ticks[0]), max(y_hi, ticks[-1])
            ty = lambda v: v  # noqa: E731
            tick_text = _tick_label

        def px(x):
            return LEFT + (x - x_lo) / (x_hi - x_lo) * pw

        def py_tick(t):
            return TOP + ph - (t - y_lo) / (y_hi - y_lo) * ph

        def py(v):
            return py_tick(ty(v))

        for t in ticks:
            y = py_tick(t)
            out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>')
            out.append(
                f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{tick_text(t)}</text>'
            )
        for x in sorted(set(xs)):
            out.append(
                f'<text x="{px(x):.2f}" y="{TOP + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{_tick_label(x)}</text>'
            )
        for x, m, s in finite:
            cx = px(x)
            lo_v, hi_v = m - s, m + s
            y_top = py(hi_v)
            y_bot = py(lo_v) if lo_v > 0 or not log_y else TOP + ph
            out.append(f'<line x1="{cx:.2f}" y1="{y_top:.2f}" x2="{cx:.2f}" y2="{y_bot:.2f}" stroke="#1f4e99" stroke-width="1.5"/>')
            for yy in (y_top, y_bot):
                out.append(f'<line x1="{cx - 5:.2f}" y1="{yy:.2f}" x2="{cx + 5:.2f}" y2="{yy:.2f}" stroke="#1f4e99" stroke-width="1.5"/>')
            if m > 0 or not log_y:
                out.append(f'<circle cx="{cx:.2f}" cy="{py(m):.2f}" r="3.5" fill="#c0392b"/>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>')
    out.append(
        f'<text x="{LEFT + pw / 2:.1f}" y="{H - 18}" text-anchor="middle" font-family="sans-serif" font-size="13">{escape(xlabel)}</text>'
    )
    ylab = ylabel + (" (log scale)" if log_y else "")
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(ylab)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(
    panels: dict[str, list[AggregateRow]],
    out_dir: str,
    stem: str,
    seed: int,
    provenance: dict | None = None,
    titles: dict[str, str] | None = None,
    svg: bool = True,
) -> list[str]:
    """Write ``<stem>.csv`` plus one ``<stem>_<panel>.svg`` per panel; returns the paths.

    The provenance is also embedded in each SVG as an XML comment.
    """
    written = [write_csv(os.path.join(out_dir, f"{stem}.csv"), panels, seed, provenance)]
    if svg:
        comment = "\n".join(line[2:] for line in provenance_lines(provenance)).replace("--", "- -")
        for name, rows in panels.items():
            text = error_bar_svg(rows, title=(titles or {}).get(name, f"{stem} {name}"))
            head, rest = text.split("\n", 1)
            text = f"{head}\n<!--\n{comment}\n-->\n{rest}"
            written.append(_write(os.path.join(out_dir, f"{stem}_{name}.svg"), text))
    return written
