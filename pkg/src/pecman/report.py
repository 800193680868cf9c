"""Benchmark summaries as CSV and grouped-bar SVG charts."""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import asdict, fields
from pathlib import Path

from .harness import BenchmarkSummary, CellSummary, TrialResult

COLUMNS = [f.name for f in fields(CellSummary)]
METRICS = {
    "median_completion_s": "Median completion time (s)",
    "mean_rebuilds": "Mean full rebuilds per trial",
    "fairness_gap_s": "Fairness gap (s)",
    "success_rate": "Success rate",
}
FORMATS = ("csv", "svg")
_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")


def to_csv(summary: BenchmarkSummary) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for c in summary.cells:
        # repr keeps floats exact so the file parses back to the same summary
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(c).items()})
    return buf.getvalue()


def from_csv(text: str) -> BenchmarkSummary:
    cells = []
    for row in csv.DictReader(io.StringIO(text)):
        cells.append(CellSummary(
            scenario=row["scenario"],
            strategy=row["strategy"],
            mode=row["mode"],
            agents=int(row["agents"]),
            trials=int(row["trials"]),
            median_completion_s=float(row["median_completion_s"]),
            mean_rebuilds=float(row["mean_rebuilds"]),
            fairness_gap_s=float(row["fairness_gap_s"]),
            success_rate=float(row["success_rate"]),
        ))
    return BenchmarkSummary(cells)


def svg_chart(summary: BenchmarkSummary, metric: str, width: int = 720, height: int = 360) -> str:
    """Grouped bars: one group per scenario, one bar per strategy/mode series."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}")
    if not summary.cells:
        raise ValueError("empty summary")
    scenarios = list(dict.fromkeys(c.scenario for c in summary.cells))
    series = list(dict.fromkeys(f"{c.strategy}/{c.mode}" for c in summary.cells))
    value = {(c.scenario, f"{c.strategy}/{c.mode}"): float(getattr(c, metric)) for c in summary.cells}
    top = max(value.values()) or 1.0

    ml, mr, mt, mb = 60, 20, 40, 70
    pw, ph = width - ml - mr, height - mt - mb
    gw = pw / len(scenarios)
    bw = gw * 0.8 / len(series)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "text", x=str(width / 2), y="20", attrib={"text-anchor": "middle"}).text = METRICS[metric]
    ET.SubElement(svg, "line", x1=str(ml), y1=str(mt + ph), x2=str(ml + pw), y2=str(mt + ph), stroke="black")
    ET.SubElement(svg, "line", x1=str(ml), y1=str(mt), x2=str(ml), y2=str(mt + ph), stroke="black")
    for t in range(5):
        v = top * t / 4
        y = mt + ph - ph * t / 4
        ET.SubElement(svg, "text", x=str(ml - 6), y=f"{y + 4:.1f}", attrib={"text-anchor": "end",
                                                                               "font-size": "10"}).text = f"{v:.3g}"
    for gi, scen in enumerate(scenarios):
        g = ET.SubElement(svg, "g", attrib={"class": "group", "data-scenario": scen})
        x0 = ml + gi * gw + gw * 0.1
        for si, name in enumerate(series):
            v = value.get((scen, name))
            if v is None:
                continue
            h = ph * v / top
            ET.SubElement(g, "rect", x=f"{x0 + si * bw:.2f}", y=f"{mt + ph - h:.2f}", width=f"{bw:.2f}",
                          height=f"{h:.2f}", fill=_PALETTE[si % len(_PALETTE)],
                          attrib={"data-series": name, "data-value": f"{v:.3f}"})
        ET.SubElement(g, "text", x=f"{ml + (gi + 0.5) * gw:.2f}", y=str(mt + ph + 16),
                      attrib={"text-anchor": "middle", "font-size": "11"}).text = scen
    for si, name in enumerate(series):
        x = ml + si * 130
        y = height - 20
        ET.SubElement(svg, "rect", x=str(x), y=str(y - 9), width="10", height="10",
                      fill=_PALETTE[si % len(_PALETTE)])
        ET.SubElement(svg, "text", x=str(x + 14), y=str(y), attrib={"font-size": "11"}).text = name
    return ET.tostring(svg, encoding="unicode")


def report(summary: BenchmarkSummary, fmt: str, out_dir) -> list[Path]:
    """Write the summary in ``fmt`` ("csv" or "svg") into ``out_dir``; returns the files written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if not summary.cells:
        raise ValueError("empty summary")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        p = out / "summary.csv"
        p.write_text(to_csv(summary))
        return [p]
    paths = []
    for m in METRICS:
        p = out / f"{m}.svg"
        p.write_text(svg_chart(summary, m))
        paths.append(p)
    return paths


def save_benchmark(summary: BenchmarkSummary, out_dir) -> None:
    """``summary.csv`` plus one JSON line per trial in ``results.jsonl``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(to_csv(summary))
    with open(out / "results.jsonl", "w") as f:
        for r in summary.results:
            f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def load_benchmark(in_dir) -> BenchmarkSummary:
    d = Path(in_dir)
    summary = from_csv((d / "summary.csv").read_text())
    res = d / "results.jsonl"
    if res.exists():
        summary.results = [TrialResult(**json.loads(line)) for line in res.read_text().splitlines() if line]
    return summary
