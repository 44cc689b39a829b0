"""SVG figures and result tables for a finished analysis."""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from lxml import etree

from slime.errors import DataError, ReportError
from slime.models import AucPair, CountStats, FeatureStats, MethodComparison, PlotSpec
from slime.utils import format_float, parse_float

logger = logging.getLogger("report")

SVG_NS = "http://www.w3.org/2000/svg"

FEATURE_STATS_HEADER = [
    "category", "n_tokens", "mean_attr", "attr_group", "attr_pctile",
    "feature_auc", "null_auc_mean", "delta_auc", "auc_impact", "verdict",
]
COUNT_STATS_HEADER = ["category", "u_control", "p_value", "auc_control", "auc_AD", "significant"]

REPORT_FILES = (
    "feature_stats.csv", "count_stats.csv", "comparison.json",
    "scatter.svg", "bars.svg", "method_scatter.svg", "relative_diff.svg",
)


def _num(value: float) -> str:
    return f"{value:.2f}"


class LinearScale:
    """Maps a data interval onto a pixel interval."""

    def __init__(self, lo: float, hi: float, start: float, stop: float):
        self.lo, self.hi = lo, hi
        self.start, self.stop = start, stop

    @classmethod
    def padded(cls, values: Iterable[float], start: float, stop: float, pad: float = 0.05) -> "LinearScale":
        """Data extents widened by ``pad`` of the span on both sides (0.5 when the span is zero)."""
        values = list(values)
        lo, hi = min(values), max(values)
        span = hi - lo
        margin = pad * span if span > 0 else 0.5
        return cls(lo - margin, hi + margin, start, stop)

    def __call__(self, value: float) -> float:
        return self.start + (value - self.lo) / (self.hi - self.lo) * (self.stop - self.start)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def ticks(self, n: int = 5) -> List[float]:
        step = (self.hi - self.lo) / (n - 1)
        return [self.lo + i * step for i in range(n)]


class SvgCanvas:
    def __init__(self, spec: PlotSpec, title: str):
        self.spec = spec
        self.root = etree.Element(
            f"{{{SVG_NS}}}svg", nsmap={None: SVG_NS},
            version="1.1", width=str(spec.width), height=str(spec.height),
            viewBox=f"0 0 {spec.width} {spec.height}",
        )
        self.element("rect", x="0", y="0", width=str(spec.width), height=str(spec.height), fill="#ffffff")
        self.text(spec.width / 2, spec.margin / 2, title, **{"text-anchor": "middle", "font-size": "16"})

    def element(self, tag: str, parent=None, **attrs) -> etree._Element:
        return etree.SubElement(parent if parent is not None else self.root, f"{{{SVG_NS}}}{tag}", **attrs)

    def text(self, x: float, y: float, content: str, **attrs) -> etree._Element:
        node = self.element("text", x=_num(x), y=_num(y), **{"font-family": "sans-serif", "font-size": "11", **attrs})
        node.text = content
        return node

    def line(self, x1, y1, x2, y2, stroke="#333333", **attrs) -> etree._Element:
        return self.element("line", x1=_num(x1), y1=_num(y1), x2=_num(x2), y2=_num(y2), stroke=stroke, **attrs)

    def plot_box(self) -> Tuple[float, float, float, float]:
        m = self.spec.margin
        return m, m, self.spec.width - m, self.spec.height - m

    def axes(self, xscale: LinearScale, yscale: LinearScale, xlabel: str, ylabel: str) -> None:
        left, top, right, bottom = self.plot_box()
        self.line(left, bottom, right, bottom)
        self.line(left, top, left, bottom)
        for value in xscale.ticks():
            x = xscale(value)
            self.line(x, bottom, x, bottom + 4)
            self.text(x, bottom + 16, f"{value:.3g}", **{"text-anchor": "middle"})
        for value in yscale.ticks():
            y = yscale(value)
            self.line(left - 4, y, left, y)
            self.text(left - 6, y + 4, f"{value:.3g}", **{"text-anchor": "end"})
        self.text((left + right) / 2, self.spec.height - 20, xlabel, **{"text-anchor": "middle", "class": "x-label"})
        label = self.text(20, (top + bottom) / 2, ylabel, **{"text-anchor": "middle", "class": "y-label"})
        label.set("transform", f"rotate(-90 20 {_num((top + bottom) / 2)})")

    def tostring(self) -> bytes:
        return etree.tostring(self.root, xml_declaration=True, encoding="UTF-8", pretty_print=True)


def _x_points(cx: float, cy: float, size: float = 7.0, thickness: float = 2.0) -> str:
    """A plus-shaped polygon rotated by 45 degrees."""
    s, t = size, thickness
    plus = [(t, s), (t, t), (s, t), (s, -t), (t, -t), (t, -s), (-t, -s), (-t, -t), (-s, -t), (-s, t), (-t, t), (-t, s)]
    r = math.sqrt(0.5)
    return " ".join(f"{_num(cx + (x - y) * r)},{_num(cy + (x + y) * r)}" for x, y in plus)


def _present(stats: Sequence[FeatureStats]) -> List[FeatureStats]:
    present = [s for s in stats if s.verdict != "absent" and s.mean_attr is not None and s.delta_auc is not None]
    if not present:
        raise DataError("nothing to plot: every category is absent")
    return present


def render_scatter(stats: Sequence[FeatureStats], spec: Optional[PlotSpec] = None) -> bytes:
    """Mean attribution (x) against delta AUC (y), one marker per present category."""
    spec = spec or PlotSpec()
    present = _present(stats)
    canvas = SvgCanvas(spec, "Group contribution and AUC impact per category")
    left, top, right, bottom = canvas.plot_box()
    xscale = LinearScale.padded([s.mean_attr for s in present], left, right)
    yscale = LinearScale.padded([s.delta_auc for s in present], bottom, top)
    canvas.axes(xscale, yscale, "mean attribution (> 0 supports AD)", "delta AUC vs. subsample mean")
    if xscale.contains(0.0):
        canvas.line(xscale(0.0), top, xscale(0.0), bottom, stroke="#bbbbbb", **{"stroke-dasharray": "4 3"})
    if yscale.contains(0.0):
        canvas.line(left, yscale(0.0), right, yscale(0.0), stroke="#bbbbbb", **{"stroke-dasharray": "4 3"})

    markers = canvas.element("g", **{"class": "markers"})
    for s in present:
        cx, cy = xscale(s.mean_attr), yscale(s.delta_auc)
        attrs = {
            "stroke": spec.palette[s.attr_group],
            "fill": spec.impact_fill[s.auc_impact],
            "stroke-width": "1.5",
            "data-category": s.category,
            "data-cx": _num(cx),
            "data-cy": _num(cy),
        }
        if s.attr_group == "AD":
            node = canvas.element("polygon", markers, points=_x_points(cx, cy), **{"class": "marker marker-x"}, **attrs)
        elif s.attr_group == "control":
            node = canvas.element("circle", markers, cx=_num(cx), cy=_num(cy), r="5", **{"class": "marker marker-circle"}, **attrs)
        else:
            node = canvas.element(
                "rect", markers, x=_num(cx - 4), y=_num(cy - 4), width="8", height="8",
                **{"class": "marker marker-square"}, **attrs,
            )
        title = canvas.element("title", node)
        title.text = f"{s.category}: mean_attr={s.mean_attr:.4g}, delta_auc={s.delta_auc:+.4f} ({s.verdict})"
    return canvas.tostring()


def render_bars(stats: Sequence[FeatureStats], spec: Optional[PlotSpec] = None) -> bytes:
    """Horizontal mean-attribution bars, ascending; faded where the AUC impact is not significant."""
    spec = spec or PlotSpec()
    present = sorted(_present(stats), key=lambda s: (s.mean_attr, s.category))
    canvas = SvgCanvas(spec, "Mean attribution per category")
    left, top, right, bottom = canvas.plot_box()
    xscale = LinearScale.padded([0.0] + [s.mean_attr for s in present], left + 60, right)
    row = (bottom - top) / len(present)
    zero = xscale(0.0)
    canvas.line(zero, top, zero, bottom)

    bars = canvas.element("g", **{"class": "bars"})
    for i, s in enumerate(present):
        x0, x1 = sorted((zero, xscale(s.mean_attr)))
        y = top + i * row
        canvas.element(
            "rect", bars,
            x=_num(x0), y=_num(y + 0.15 * row), width=_num(max(x1 - x0, 0.5)), height=_num(0.7 * row),
            fill=spec.palette[s.attr_group],
            opacity="1" if s.auc_impact != "none" else str(spec.faded_opacity),
            **{"class": "bar", "data-category": s.category},
        )
        canvas.text(left, y + 0.5 * row + 4, s.category)
    canvas.text((left + right) / 2, spec.height - 20, "mean attribution", **{"text-anchor": "middle", "class": "x-label"})
    return canvas.tostring()


def method_class(pair: AucPair) -> str:
    """Colour key of a method-comparison point; attribution results outrank the count test."""
    if pair.verdict == "improves":
        return "improves"
    if pair.attr_group != "none":
        return "attributed"
    if pair.count_significant:
        return "count"
    return "none"


def render_method_scatter(comparison: MethodComparison, spec: Optional[PlotSpec] = None) -> bytes:
    """Count-based AUC (x) against attribution AUC (y) with the identity diagonal."""
    spec = spec or PlotSpec()
    if not comparison.pairs:
        raise DataError("nothing to plot: the method comparison has no shared categories")
    canvas = SvgCanvas(spec, f"Count-based vs. attribution AUC (r = {comparison.pearson_r:.2f})")
    left, top, right, bottom = canvas.plot_box()
    xscale = LinearScale(0.0, 1.0, left, right)
    yscale = LinearScale(0.0, 1.0, bottom, top)
    canvas.axes(xscale, yscale, "count-based AUC", "attribution AUC")
    canvas.line(xscale(0), yscale(0), xscale(1), yscale(1), stroke="#bbbbbb", **{"stroke-dasharray": "4 3"})
    markers = canvas.element("g", **{"class": "markers"})
    for pair in comparison.pairs:
        cx, cy = xscale(pair.count_auc), yscale(pair.slime_auc)
        key = method_class(pair)
        canvas.element(
            "circle", markers, cx=_num(cx), cy=_num(cy), r="4",
            fill=spec.method_colors[key], stroke="#333333",
            **{"class": f"marker marker-{key}", "data-category": pair.category},
        )
    return canvas.tostring()


def render_relative_diff(comparison: MethodComparison, spec: Optional[PlotSpec] = None, bins: int = 12) -> bytes:
    """Histogram of (attribution AUC - count AUC) / count AUC over the shared categories."""
    spec = spec or PlotSpec()
    values = np.array([p.relative_diff for p in comparison.pairs if p.relative_diff is not None])
    if values.size == 0:
        raise DataError("nothing to plot: no category has a relative AUC difference")
    counts, edges = np.histogram(values, bins=bins)
    if edges[0] == edges[-1]:
        edges = np.linspace(edges[0] - 0.5, edges[0] + 0.5, bins + 1)
    canvas = SvgCanvas(spec, "Relative difference in AUC, attribution vs. count-based")
    left, top, right, bottom = canvas.plot_box()
    xscale = LinearScale(float(edges[0]), float(edges[-1]), left, right)
    yscale = LinearScale(0.0, float(max(counts.max(), 1)), bottom, top)
    canvas.axes(xscale, yscale, "(AUC_attribution - AUC_count) / AUC_count", "categories")
    if xscale.contains(0.0):
        canvas.line(xscale(0.0), top, xscale(0.0), bottom, stroke="#bbbbbb", **{"stroke-dasharray": "4 3"})
    group = canvas.element("g", **{"class": "bins"})
    for count, lo, hi in zip(counts, edges[:-1], edges[1:]):
        x0, x1 = xscale(lo), xscale(hi)
        canvas.element(
            "rect", group,
            x=_num(x0), y=_num(yscale(count)), width=_num(max(x1 - x0 - 1, 0.5)), height=_num(bottom - yscale(count)),
            fill=spec.palette["none"],
            **{"class": "bin", "data-count": str(int(count))},
        )
    return canvas.tostring()


def write_feature_stats(stats: Sequence[FeatureStats], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FEATURE_STATS_HEADER)
        for s in stats:
            writer.writerow([
                s.category, s.n_tokens, format_float(s.mean_attr), s.attr_group, format_float(s.attr_pctile),
                format_float(s.feature_auc), format_float(s.null_auc_mean), format_float(s.delta_auc),
                s.auc_impact, s.verdict,
            ])


def write_count_stats(counts: Sequence[CountStats], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COUNT_STATS_HEADER)
        for c in counts:
            writer.writerow([
                c.category, format_float(c.u_control), format_float(c.p_value),
                format_float(c.auc_control), format_float(c.auc_ad), "true" if c.significant else "false",
            ])


def write_comparison(comparison: MethodComparison, path: Path) -> None:
    payload = comparison.model_dump()
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _read_rows(path, header: List[str]) -> List[Dict[str, str]]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != header:
                raise DataError(f"{path}: unexpected header {reader.fieldnames}")
            return list(reader)
    except OSError as e:
        raise ReportError(f"cannot read {path}: {e}") from None


def read_feature_stats(path) -> List[FeatureStats]:
    return [
        FeatureStats(
            category=row["category"],
            n_tokens=int(row["n_tokens"]),
            mean_attr=parse_float(row["mean_attr"]),
            attr_group=row["attr_group"],
            attr_pctile=parse_float(row["attr_pctile"]),
            feature_auc=parse_float(row["feature_auc"]),
            null_auc_mean=parse_float(row["null_auc_mean"]),
            delta_auc=parse_float(row["delta_auc"]),
            auc_impact=row["auc_impact"],
            verdict=row["verdict"],
        )
        for row in _read_rows(path, FEATURE_STATS_HEADER)
    ]


def read_count_stats(path) -> List[CountStats]:
    """Re-read count statistics; per-document proportions are not part of the table."""
    return [
        CountStats(
            category=row["category"],
            u_control=float(row["u_control"]),
            p_value=float(row["p_value"]),
            auc_control=float(row["auc_control"]),
            auc_ad=float(row["auc_AD"]),
            significant=row["significant"] == "true",
        )
        for row in _read_rows(path, COUNT_STATS_HEADER)
    ]


def read_comparison(path) -> MethodComparison:
    path = Path(path)
    try:
        return MethodComparison.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ReportError(f"cannot read {path}: {e}") from None


def export_results(
    stats: Sequence[FeatureStats],
    counts: Sequence[CountStats],
    comparison: MethodComparison,
    out_dir,
    spec: Optional[PlotSpec] = None,
) -> List[Path]:
    """Write the tables and the four figures into ``out_dir``."""
    out_dir = Path(out_dir)
    figures = {
        "scatter.svg": render_scatter(stats, spec),
        "bars.svg": render_bars(stats, spec),
        "method_scatter.svg": render_method_scatter(comparison, spec),
        "relative_diff.svg": render_relative_diff(comparison, spec),
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_feature_stats(stats, out_dir / "feature_stats.csv")
        write_count_stats(counts, out_dir / "count_stats.csv")
        write_comparison(comparison, out_dir / "comparison.json")
        for name, content in figures.items():
            (out_dir / name).write_bytes(content)
    except OSError as e:
        raise ReportError(f"cannot write report files to {out_dir}: {e.strerror or e}") from None
    logger.info(f"Wrote {len(REPORT_FILES)} report files to {out_dir}")
    return [out_dir / name for name in REPORT_FILES]
