"""CSV and SVG emission for sweep records."""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from pathlib import Path
from xml.sax.saxutils import escape

from .sweep import COLUMNS, RunRecord

_INT_COLUMNS = {"n", "d", "N", "seed", "replicate"}
_STR_COLUMNS = {"experiment", "estimator", "row_type", "theory_note", "error"}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def csv_text(records) -> str:
    """RFC 4180 CSV (CRLF line ends), columns in ``COLUMNS`` order, floats via ``repr``."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(COLUMNS)
    for rec in records:
        w.writerow([_cell(getattr(rec, c)) for c in COLUMNS])
    return buf.getvalue()


def emit_csv(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(records))
    return path


def read_csv(path) -> list[RunRecord]:
    """Inverse of :func:`emit_csv`; floats round-trip exactly."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            kw = {}
            for c in COLUMNS:
                v = row[c]
                if v == "":
                    kw[c] = None
                elif c in _STR_COLUMNS:
                    kw[c] = v
                elif c in _INT_COLUMNS:
                    kw[c] = int(v)
                else:
                    kw[c] = float(v)
            out.append(RunRecord(**kw))
    return out


# --- SVG -------------------------------------------------------------------

_W, _H = 760, 480
_L, _R, _T, _B = 70, 170, 30, 50
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _nice_ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v):
    return f"{v:.6g}"


def _series_label(key, value):
    if key == "theta_deg":
        return f"theta = {_fmt(value)} deg"
    if key == "estimator":
        return str(value)
    return f"{key} = {_fmt(value)}"


def svg_text(records, x_axis="gamma", series_key="theta_deg", estimator=None, title=None) -> str:
    """Line chart of aggregate rows: theory as solid lines, empirical means as
    markers with +-2 stderr bars, one series per ``series_key`` value.

    With several estimators present and ``series_key != 'estimator'`` only
    ``estimator`` (default: the first one seen) is drawn.
    """
    agg = [r for r in records if r.row_type == "aggregate"]
    if not agg:
        raise ValueError("no aggregate records to plot")
    if series_key != "estimator":
        if estimator is None:
            estimator = agg[0].estimator
        agg = [r for r in agg if r.estimator == estimator]
    series = OrderedDict()
    for r in agg:
        series.setdefault(getattr(r, series_key), []).append(r)

    xs, ys = [], []
    for rows in series.values():
        for r in rows:
            xs.append(getattr(r, x_axis))
            if r.risk_theory is not None:
                ys.append(r.risk_theory)
            if r.risk_empirical is not None:
                se = r.stderr or 0.0
                ys += [r.risk_empirical - 2 * se, r.risk_empirical + 2 * se]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    pad = 0.05 * (y_hi - y_lo or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    pw, ph = _W - _L - _R, _H - _T - _B

    def px(x):
        return _L + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return _T + (y_hi - y) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'width="{_W}" height="{_H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{_L + pw / 2:.2f}" y="18" text-anchor="middle">{escape(title)}</text>')
    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            out.append(f'<line x1="{px(t):.2f}" y1="{_T + ph}" x2="{px(t):.2f}" y2="{_T + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px(t):.2f}" y="{_T + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        if y_lo <= t <= y_hi:
            out.append(f'<line x1="{_L - 5}" y1="{py(t):.2f}" x2="{_L}" y2="{py(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{_L - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{_L + pw / 2:.2f}" y="{_H - 10}" text-anchor="middle">{escape(x_axis)}</text>')
    ylab = "minority risk" if series_key == "estimator" else f"minority risk ({escape(str(estimator))})"
    out.append(
        f'<text x="16" y="{_T + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_T + ph / 2:.2f})">{ylab}</text>'
    )

    for k, (value, rows) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        label = escape(_series_label(series_key, value))
        out.append(f'<g class="series" data-key="{escape(str(value))}">')
        rows = sorted(rows, key=lambda r: getattr(r, x_axis))
        # theory: solid polyline, broken where no value exists
        segment = []
        for r in rows + [None]:
            if r is not None and r.risk_theory is not None:
                segment.append(f"{px(getattr(r, x_axis)):.2f},{py(r.risk_theory):.2f}")
                continue
            if len(segment) > 1:
                out.append(f'<polyline class="theory" points="{" ".join(segment)}" fill="none" stroke="{color}" stroke-width="2"/>')
            elif segment:
                out.append(f'<circle class="theory" cx="{segment[0].split(",")[0]}" cy="{segment[0].split(",")[1]}" r="2" fill="{color}"/>')
            segment = []
        for r in rows:
            if r.risk_empirical is None:
                continue
            x, m, se = px(getattr(r, x_axis)), r.risk_empirical, r.stderr or 0.0
            out.append(
                f'<line class="errorbar" x1="{x:.2f}" y1="{py(m - 2 * se):.2f}" '
                f'x2="{x:.2f}" y2="{py(m + 2 * se):.2f}" stroke="{color}"/>'
            )
            out.append(f'<circle class="empirical" cx="{x:.2f}" cy="{py(m):.2f}" r="3.5" fill="{color}"/>')
        ly = _T + 14 + 18 * k
        out.append(f'<line x1="{_W - _R + 15}" y1="{ly - 4}" x2="{_W - _R + 40}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<circle cx="{_W - _R + 27.5}" cy="{ly - 4}" r="3.5" fill="{color}"/>')
        out.append(f'<text x="{_W - _R + 46}" y="{ly}">{label}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(records, path, x_axis="gamma", series_key="theta_deg", estimator=None, title=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_text(records, x_axis, series_key, estimator, title))
    return path
