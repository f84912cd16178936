"""Markdown report with hand-written SVG figures.

Every number is printed at fixed precision and nothing depends on the
clock, so a report regenerates byte-identically from the same artifacts.
"""
from __future__ import annotations

import base64
import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .datagen import TAMPER_TABLE, class_name
from .exceptions import DataError
from .pdn import FrequencyGrid, find_resonances

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=30, bottom=50)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    """Minimal SVG builder with a data-to-pixel mapping for one plot area."""

    def __init__(self, title: str, width: int = WIDTH, height: int = HEIGHT):
        self.width, self.height = width, height
        self.parts = [f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
                      f'font-size="14">{escape(title)}</text>']

    @property
    def box(self):
        m = MARGIN
        return m["left"], m["top"], self.width - m["right"], self.height - m["bottom"]

    def scale(self, xlim, ylim):
        x0, y0, x1, y1 = self.box
        (a, b), (c, d) = xlim, ylim
        b = b if b != a else a + 1.0
        d = d if d != c else c + 1.0
        return (lambda x: x0 + (x - a) / (b - a) * (x1 - x0),
                lambda y: y1 - (y - c) / (d - c) * (y1 - y0))

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, size=10, anchor="middle", rotate=None):
        tr = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
                 f'text-anchor="{anchor}"{tr}>{escape(s)}</text>')

    def axes(self, xlabel, ylabel):
        x0, y0, x1, y1 = self.box
        self.add(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" '
                 f'fill="none" stroke="#000"/>')
        self.text((x0 + x1) / 2, self.height - 12, xlabel, 11)
        self.text(16, (y0 + y1) / 2, ylabel, 11, rotate=-90)

    def render(self) -> str:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" '
                f'font-family="sans-serif">\n'
                f'<rect width="100%" height="100%" fill="#fff"/>\n'
                + "\n".join(self.parts) + "\n</svg>\n")


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _heat(v: float) -> str:
    """White to dark blue."""
    v = min(max(v, 0.0), 1.0)
    r = int(round(255 - v * (255 - 8)))
    g = int(round(255 - v * (255 - 48)))
    b = int(round(255 - v * (255 - 107)))
    return f"#{r:02x}{g:02x}{b:02x}"


def _diverging(v: float) -> str:
    """Blue (low) to red (high) for v in [0, 1]."""
    v = min(max(v, 0.0), 1.0)
    r = int(round(30 + v * (220 - 30)))
    b = int(round(220 - v * (220 - 30)))
    return f"#{r:02x}40{b:02x}"


def confusion_svg(cm, labels) -> str:
    cm = np.asarray(cm, dtype=float)
    n = len(cm)
    canvas = _Canvas("Pooled cross-validation confusion", 520, 520)
    x0, y0, x1, y1 = canvas.box
    cell = min(x1 - x0, y1 - y0) / n
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    for i in range(n):
        for j in range(n):
            x, y = x0 + j * cell, y0 + i * cell
            canvas.add(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cell)}" height="{_f(cell)}" '
                       f'fill="{_heat(frac[i, j])}" stroke="#ccc"/>')
            if cm[i, j]:
                color = "#fff" if frac[i, j] > 0.5 else "#000"
                canvas.add(f'<text x="{_f(x + cell / 2)}" y="{_f(y + cell / 2 + 3)}" '
                           f'font-size="9" text-anchor="middle" fill="{color}">'
                           f'{int(cm[i, j])}</text>')
        canvas.text(x0 - 6, y0 + (i + 0.5) * cell + 3, str(labels[i]), 10, "end")
        canvas.text(x0 + (i + 0.5) * cell, y0 + n * cell + 14, str(labels[i]), 10)
    canvas.text(x0 + n * cell / 2, y0 + n * cell + 32, "predicted class", 11)
    canvas.text(16, y0 + n * cell / 2, "true class", 11, rotate=-90)
    return canvas.render()


def beeswarm_svg(rows: list[dict], class_id: int) -> str:
    """Attribution per sample for each top feature, coloured by feature value."""
    if not rows:
        raise DataError(f"no beeswarm rows for class {class_id}")
    order = []
    for r in rows:
        if r["feature_index"] not in order:
            order.append(r["feature_index"])
    freq = {r["feature_index"]: r["frequency_hz"] for r in rows}
    phi = np.array([r["phi"] for r in rows])
    lim = float(np.max(np.abs(phi))) or 1.0
    height = 80 + 22 * len(order)
    canvas = _Canvas(f"Class {class_id} ({class_name(class_id)}): SHAP values", WIDTH, height)
    canvas.axes("SHAP value (impact on class probability)", "")
    sx, _ = canvas.scale((-lim, lim), (0, 1))
    x0, y0, x1, _ = canvas.box
    canvas.add(f'<line x1="{_f(sx(0))}" y1="{y0}" x2="{_f(sx(0))}" '
               f'y2="{height - MARGIN["bottom"]}" stroke="#999"/>')
    for t in _ticks(-lim, lim):
        canvas.text(sx(t), height - MARGIN["bottom"] + 14, f"{t:.3g}", 9)
    for k, feat in enumerate(order):
        yc = y0 + 11 + 22 * k
        canvas.text(x0 - 4, yc + 3, f"{freq[feat] / 1e6:.1f} MHz", 9, "end")
        pts = sorted((r for r in rows if r["feature_index"] == feat),
                     key=lambda r: (r["phi"], r["sample_id"]))
        vals = np.array([p["feature_value"] for p in pts])
        lo, hi = float(vals.min()), float(vals.max())
        for i, p in enumerate(pts):
            dy = ((i % 5) - 2) * 2.0
            v = 0.5 if hi == lo else (p["feature_value"] - lo) / (hi - lo)
            canvas.add(f'<circle cx="{_f(sx(p["phi"]))}" cy="{_f(yc + dy)}" r="2" '
                       f'fill="{_diverging(v)}" fill-opacity="0.8"/>')
    return canvas.render()


def overlay_svg(grid: FrequencyGrid, genuine, tampered: dict[int, np.ndarray],
                markers: list[tuple[float, float]]) -> str:
    """Mean |S11| of genuine boards against each tampered class, with resonance markers."""
    f = grid.frequencies / 1e6
    traces = [np.asarray(genuine)] + [np.asarray(t) for t in tampered.values()]
    lo = min(float(t.min()) for t in traces)
    hi = max(float(t.max()) for t in traces)
    canvas = _Canvas("Mean |S11|: genuine vs tampered classes")
    canvas.axes("frequency (MHz)", "|S11|")
    sx, sy = canvas.scale((f[0], f[-1]), (lo, hi))
    x0, y0, x1, y1 = canvas.box
    for t in _ticks(f[0], f[-1]):
        canvas.text(sx(t), y1 + 14, f"{t:.0f}", 9)
    for t in _ticks(lo, hi):
        canvas.text(x0 - 4, sy(t) + 3, f"{t:.4f}", 9, "end")

    def polyline(trace, color, width):
        pts = " ".join(f"{_f(sx(a))},{_f(sy(b))}" for a, b in zip(f, trace))
        canvas.add(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="{width}"/>')

    for k, (cid, trace) in enumerate(sorted(tampered.items())):
        polyline(trace, PALETTE[k % len(PALETTE)], 0.8)
        canvas.text(x1 - 4, y0 + 12 + 11 * k, f"class {cid}", 9, "end")
        canvas.add(f'<line x1="{x1 - 60}" y1="{_f(y0 + 9 + 11 * k)}" x2="{x1 - 48}" '
                   f'y2="{_f(y0 + 9 + 11 * k)}" stroke="{PALETTE[k % len(PALETTE)]}"/>')
    polyline(genuine, "#000", 1.6)
    for freq, depth in markers:
        x = sx(freq / 1e6)
        canvas.add(f'<line x1="{_f(x)}" y1="{y0}" x2="{_f(x)}" y2="{y1}" stroke="#d00" '
                   f'stroke-dasharray="4,3"/>')
        canvas.text(x + 3, sy(depth) + 12, f"{freq / 1e6:.1f} MHz", 9, "start")
    return canvas.render()


def data_uri(svg: str) -> str:
    return "data:image/svg+xml;base64," + base64.b64encode(svg.encode()).decode()


def read_beeswarm_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"sample_id": int(r["sample_id"]), "feature_index": int(r["feature_index"]),
                 "frequency_hz": float(r["frequency_hz"]), "phi": float(r["phi"]),
                 "feature_value": float(r["feature_value"])} for r in csv.DictReader(fh)]


def fold_table(metrics: dict) -> str:
    lines = ["| Fold | Accuracy | Min depth | Max depth |", "|---:|---:|---:|---:|"]
    for m in metrics["folds"]:
        lines.append(f"| {m['fold']} | {100 * m['accuracy']:.2f}% | {m['depth_min']} | "
                     f"{m['depth_max']} |")
    s = metrics["summary"]
    lines.append(f"| mean | {100 * s['mean_accuracy']:.2f}% | {s['depth_min']} | "
                 f"{s['depth_max']} |")
    return "\n".join(lines)


def build_report(outdir, grid: FrequencyGrid, rows, labels) -> Path:
    """Render ``report.md`` and its SVGs from the artifacts in ``outdir``."""
    outdir = Path(outdir)
    try:
        metrics = json.loads((outdir / "metrics.json").read_text())
        with open(outdir / "shap_summary.csv", newline="") as fh:
            summary = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"missing upstream artifact: {exc.filename}") from None
    bees = sorted(outdir.glob("beeswarm_*.csv"), key=lambda p: int(p.stem.split("_")[1]))

    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels)
    classes = [int(c) for c in metrics["classes"]]
    if 0 not in set(labels.tolist()):
        raise DataError("report needs genuine (class 0) traces")
    genuine = rows[labels == 0].mean(axis=0)
    tampered = {c: rows[labels == c].mean(axis=0) for c in classes if c != 0}
    markers = find_resonances(genuine, grid)[:3]

    figures = {"confusion": confusion_svg(np.sum([m["confusion"] for m in metrics["folds"]],
                                                 axis=0), classes),
               "overlay": overlay_svg(grid, genuine, tampered, markers)}
    for path in bees:
        cid = int(path.stem.split("_")[1])
        figures[f"beeswarm_{cid}"] = beeswarm_svg(read_beeswarm_csv(path), cid)
    for name, svg in figures.items():
        (outdir / f"{name}.svg").write_text(svg)

    s = metrics["summary"]
    md = ["# Tamper classification report", "",
          f"Classes: {len(classes)}. Folds: {len(metrics['folds'])}. "
          f"Mean accuracy {100 * s['mean_accuracy']:.2f}% "
          f"(spread {100 * s['accuracy_spread']:.2f} points).", "",
          "## Cross-validation", "", fold_table(metrics), "",
          "Recall per class (pooled over folds):", "",
          "| Class | Target | Recall |", "|---:|---|---:|"]
    for c, r in zip(classes, s["pooled_recall"]):
        md.append(f"| {c} | {class_name(c)} | {100 * r:.2f}% |")
    md += ["", f"![confusion]({data_uri(figures['confusion'])})", "",
           "## Signatures", "",
           "Deepest resonances (|S11| minima) of the mean genuine trace:", ""]
    for k, (freq, depth) in enumerate(markers):
        tag = " (fundamental)" if k == 0 else ""
        md.append(f"- {freq / 1e6:.1f} MHz, |S11| = {depth:.4f}{tag}")
    md += ["", f"![overlay]({data_uri(figures['overlay'])})", "",
           "## Attributions", "",
           "| Class | Target | Top frequency | Mean SHAP | Variance | Mean abs SHAP |",
           "|---:|---|---:|---:|---:|---:|"]
    for r in summary:
        if r["rank"] != "1":
            continue
        cid = int(r["class_id"])
        target = "genuine" if cid == 0 else "{} {}".format(*TAMPER_TABLE[cid])
        md.append(f"| {cid} | {target} | {float(r['frequency_hz']) / 1e6:.1f} MHz | "
                  f"{float(r['mean']):.3e} | {float(r['variance']):.3e} | "
                  f"{float(r['mean_abs']):.3e} |")
    md.append("")
    for name in figures:
        if name.startswith("beeswarm_"):
            md += [f"![{name}]({data_uri(figures[name])})", ""]
    path = outdir / "report.md"
    path.write_text("\n".join(md))
    return path
