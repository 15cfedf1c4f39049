"""Deterministic report emission: JSON summary, CSV tables, simple SVGs.

Every writer formats numbers explicitly and sorts keys, so identical
inputs produce byte-identical files regardless of worker threads or dict
ordering upstream.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    """Write rows of already-formatted values."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def fnum(value) -> str:
    """Shortest round-trip decimal form of a float, stable across runs."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# SVG


def _svg_header(width: int, height: int) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">',
    ]


def ci_bullet_svg(entries) -> str:
    """Bullet chart of bootstrap CIs: one interval + mean marker per entry.

    ``entries`` is a list of dicts with keys name, mean, ci_low, ci_high.
    """
    width, row_h, left, right = 640, 48, 200, 40
    height = row_h * len(entries) + 40
    values = [e["ci_low"] for e in entries] + [e["ci_high"] for e in entries]
    values += [e["mean"] for e in entries]
    lo = min(values + [0.0])
    hi = max(values)
    span = (hi - lo) or 1.0

    def sx(v: float) -> float:
        return left + (v - lo) / span * (width - left - right)

    out = _svg_header(width, height)
    out.append('<style>text{font-family:sans-serif;font-size:12px;}</style>')
    for i, e in enumerate(entries):
        cy = 30 + i * row_h
        out.append(f'<text x="8" y="{cy + 4}">{e["name"]}</text>')
        out.append(
            f'<line x1="{sx(e["ci_low"]):.2f}" y1="{cy}" x2="{sx(e["ci_high"]):.2f}" '
            f'y2="{cy}" stroke="#444" stroke-width="6"/>'
        )
        out.append(
            f'<circle cx="{sx(e["mean"]):.2f}" cy="{cy}" r="5" fill="#c0392b"/>'
        )
        out.append(
            f'<text x="{width - right + 4}" y="{cy + 4}">{e["mean"]:.3f}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def summarize_values(values) -> dict:
    """Five-number summary plus mean and count, for the box charts."""
    v = np.asarray(list(values), dtype=np.float64)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "n": int(v.size),
        "min": float(v.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(v.max()),
        "mean": float(v.mean()),
    }


def box_summary_svg(entries) -> str:
    """Box summaries per named group.

    ``entries`` is a list of dicts with keys name and summary (as produced
    by :func:`summarize_values`).
    """
    width, col_w, top, bottom = 120 * max(len(entries), 1) + 80, 120, 30, 60
    height = 320
    if not entries:
        return "\n".join(_svg_header(width, height) + ["</svg>"]) + "\n"
    lo = min(e["summary"]["min"] for e in entries)
    hi = max(e["summary"]["max"] for e in entries)
    span = (hi - lo) or 1.0

    def sy(v: float) -> float:
        return top + (hi - v) / span * (height - top - bottom)

    out = _svg_header(width, height)
    out.append('<style>text{font-family:sans-serif;font-size:11px;}</style>')
    for i, e in enumerate(entries):
        s = e["summary"]
        cx = 60 + i * col_w
        out.append(
            f'<line x1="{cx}" y1="{sy(s["min"]):.2f}" x2="{cx}" '
            f'y2="{sy(s["max"]):.2f}" stroke="#444" stroke-width="1"/>'
        )
        out.append(
            f'<rect x="{cx - 22}" y="{sy(s["q3"]):.2f}" width="44" '
            f'height="{abs(sy(s["q1"]) - sy(s["q3"])):.2f}" '
            f'fill="#86b5d9" stroke="#444"/>'
        )
        out.append(
            f'<line x1="{cx - 22}" y1="{sy(s["median"]):.2f}" x2="{cx + 22}" '
            f'y2="{sy(s["median"]):.2f}" stroke="#fff" stroke-width="2"/>'
        )
        out.append(
            f'<circle cx="{cx}" cy="{sy(s["mean"]):.2f}" r="4" fill="#c0392b"/>'
        )
        out.append(
            f'<text x="{cx}" y="{height - 36}" text-anchor="middle">{e["name"]}</text>'
        )
        out.append(
            f'<text x="{cx}" y="{height - 20}" text-anchor="middle">n={s["n"]}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit_report(out_dir) -> dict:
    """Collect stage outputs from ``out_dir`` into one JSON + SVG bundle.

    Stages that never ran are simply absent from the summary; the bundle
    is valid regardless.
    """
    summary: dict = {"stages": {}}

    def maybe(name):
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        return None

    for stage, filename in (
        ("validate", "validation.json"),
        ("cluster", "clusters_summary.json"),
        ("idw", "idw.json"),
        ("bootstrap", "bootstrap.json"),
        ("grid_corr", "grid_corr.json"),
        ("elevation", "elevation.json"),
        ("deteval", "deteval.json"),
        ("synth", "synth_summary.json"),
    ):
        data = maybe(filename)
        if data is not None:
            summary["stages"][stage] = data

    boot = summary["stages"].get("bootstrap")
    if boot:
        entries = [
            {
                "name": rec["name"],
                "mean": rec["observed_mean"],
                "ci_low": rec["ci_low"],
                "ci_high": rec["ci_high"],
            }
            for rec in boot["sets"]
        ]
        write_text(os.path.join(out_dir, "bootstrap_ci.svg"), ci_bullet_svg(entries))
        summary["charts"] = summary.get("charts", []) + ["bootstrap_ci.svg"]

    elev = summary["stages"].get("elevation")
    if elev and elev.get("subset_summaries"):
        entries = [
            {"name": name, "summary": s}
            for name, s in sorted(elev["subset_summaries"].items())
            if s["n"] > 0
        ]
        if entries:
            write_text(
                os.path.join(out_dir, "elevation_boxes.svg"), box_summary_svg(entries)
            )
            summary["charts"] = summary.get("charts", []) + ["elevation_boxes.svg"]

    write_json(os.path.join(out_dir, "report.json"), summary)
    return summary
