"""Render experiment figures from the bounds CLI's CSV files.

Three figure styles cover the whole experiment set:

  prob_vs_value   violation probability against the target delay or
                  backlog, log-y; one curve per (method, site), plus
                  simulation curves with standard-error bands.
  delay_vs_param  delay-at-epsilon against a swept parameter.
  counterexample  empirical double-supremum tails per horizon against
                  the invalid e*exp(-theta x) line and the valid
                  single-window exp(-theta x) line.

Everything is computed upstream; this package only reads columns and
draws.  Rendering is deterministic: fixed style, no timestamps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FIGSIZE = (6.0, 4.2)
DPI = 120

_BOUND_STYLE = {
    "pmoo": {"color": "#d62728", "linestyle": "--"},
    "martingale": {"color": "#1f77b4", "linestyle": "-"},
    "martingale_best": {"color": "#17becf", "linestyle": "-."},
    "simulation": {"color": "#2ca02c", "linestyle": ":"},
}
_SITE_COLORS = ["#1f77b4", "#9467bd", "#8c564b", "#e377c2"]


class PlotError(Exception):
    """Raised for unusable inputs (missing file, column, or rows)."""


@dataclass(frozen=True)
class FigureSpec:
    axes: str  # prob_vs_value | delay_vs_param | counterexample
    inputs: tuple[str, ...]
    output: str
    logy: bool = True
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    @staticmethod
    def from_json(path: str) -> "FigureSpec":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            return FigureSpec(
                axes=doc["axes"],
                inputs=tuple(doc["inputs"]),
                output=doc["output"],
                logy=bool(doc.get("logy", True)),
                title=doc.get("title", ""),
                xlabel=doc.get("xlabel", ""),
                ylabel=doc.get("ylabel", ""),
            )
        except KeyError as missing:
            raise PlotError(f"figure spec is missing field {missing}") from None


def read_rows(path: str, required: tuple[str, ...]) -> list[dict]:
    """CSV rows as dicts, comment lines skipped; named error per column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as err:
        raise PlotError(f"cannot read {path}: {err}") from None
    rows = list(csv.DictReader(lines))
    if not rows:
        raise PlotError(f"{path} has no data rows")
    for col in required:
        if col not in rows[0]:
            raise PlotError(f"column {col!r} missing in {path}")
    return rows


def _curve_label(method: str, site: str) -> str:
    if method == "martingale" and site:
        return f"martingale h={site}"
    if method == "martingale_best" and site:
        return "martingale best"
    return method.replace("_", " ")


def _style_for(method: str, site: str):
    base = method.split("_")[0] if method.startswith("simulation") else method
    style = dict(_BOUND_STYLE.get(base, {"color": "#7f7f7f", "linestyle": "-"}))
    if method == "martingale" and site:
        style["color"] = _SITE_COLORS[(int(site) - 1) % len(_SITE_COLORS)]
    return style


def _group_curves(rows, x_col, y_col):
    """Ordered (method, site) -> list of (x, row) with parseable y."""
    curves: dict[tuple[str, str], list] = {}
    for row in rows:
        y = row[y_col]
        if y == "" or y.lower() == "nan":
            continue
        key = (row.get("method", ""), row.get("site", "") or "")
        curves.setdefault(key, []).append((float(row[x_col]), row))
    for pts in curves.values():
        pts.sort(key=lambda p: p[0])
    return curves


def _draw_prob_vs_value(ax, paths):
    drew = False
    for path in paths:
        rows = read_rows(path, ("value", "probability", "method"))
        is_sim = "stderr" in rows[0]
        curves = _group_curves(rows, "value", "probability")
        for (method, site), pts in sorted(curves.items()):
            if method == "simulation_backlog":
                continue
            xs = [p for p, _ in pts]
            ys = [float(r["probability"]) for _, r in pts]
            label = _curve_label(method, site)
            style = _style_for(method, site)
            if is_sim:
                keep = [i for i, y in enumerate(ys) if y > 0.0]
                xs = [xs[i] for i in keep]
                ys = [ys[i] for i in keep]
                se = [float(pts[i][1]["stderr"]) for i in keep]
                lo = [max(y - 3 * e, 1e-300) for y, e in zip(ys, se)]
                hi = [y + 3 * e for y, e in zip(ys, se)]
                ax.fill_between(xs, lo, hi, alpha=0.25, color=style["color"], lw=0)
                label = "simulation"
            ax.plot(xs, ys, label=label, **style)
            drew = True
    if not drew:
        raise PlotError("no drawable curves in the given files")


def _draw_delay_vs_param(ax, paths):
    for path in paths:
        rows = read_rows(path, ("param", "method", "site", "delay"))
        curves = _group_curves(rows, "param", "delay")
        for (method, site), pts in sorted(curves.items()):
            if method == "martingale_best":
                continue  # redundant with the per-site curves here
            xs = [p for p, _ in pts]
            ys = [float(r["delay"]) for _, r in pts]
            ax.plot(
                xs, ys, marker="o", markersize=3,
                label=_curve_label(method, site), **_style_for(method, site),
            )


def _draw_counterexample(ax, paths):
    for path in paths:
        rows = read_rows(
            path, ("x", "horizon", "empirical", "stderr", "claimed_bound", "sound_bound")
        )
        horizons = sorted({int(r["horizon"]) for r in rows})
        for i, h in enumerate(horizons):
            pts = [r for r in rows if int(r["horizon"]) == h]
            pts.sort(key=lambda r: float(r["x"]))
            xs = [float(r["x"]) for r in pts]
            ys = [float(r["empirical"]) for r in pts]
            keep = [j for j, y in enumerate(ys) if y > 0.0]
            color = _SITE_COLORS[i % len(_SITE_COLORS)]
            ax.plot(
                [xs[j] for j in keep],
                [ys[j] for j in keep],
                color=color,
                label=f"horizon {h}",
            )
        pts = sorted(rows, key=lambda r: float(r["x"]))
        xs = [float(r["x"]) for r in pts]
        ax.plot(
            xs, [float(r["claimed_bound"]) for r in pts],
            color="black", linestyle="--", label="claimed e·exp(-θx)",
        )
        ax.plot(
            xs, [float(r["sound_bound"]) for r in pts],
            color="black", linestyle=":", label="single-window exp(-θx)",
        )


_AXES_DEFAULTS = {
    "prob_vs_value": ("target value", "violation probability"),
    "delay_vs_param": ("parameter", "delay at epsilon"),
    "counterexample": ("x", "probability"),
}


def render(spec: FigureSpec) -> str:
    """Draw the figure and write it to spec.output; returns the path."""
    if spec.axes not in _AXES_DEFAULTS:
        raise PlotError(f"unknown axes kind {spec.axes!r}")
    fig, ax = plt.subplots(figsize=FIGSIZE)
    try:
        if spec.axes == "prob_vs_value":
            _draw_prob_vs_value(ax, spec.inputs)
        elif spec.axes == "delay_vs_param":
            _draw_delay_vs_param(ax, spec.inputs)
        else:
            _draw_counterexample(ax, spec.inputs)
        if spec.logy and spec.axes != "delay_vs_param":
            ax.set_yscale("log")
        xdef, ydef = _AXES_DEFAULTS[spec.axes]
        ax.set_xlabel(spec.xlabel or xdef)
        ax.set_ylabel(spec.ylabel or ydef)
        if spec.title:
            ax.set_title(spec.title)
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, dpi=DPI)
    finally:
        plt.close(fig)
    return str(spec.output)


# ---------------------------------------------------------------------------
# Named figures over the default CLI output file names
# ---------------------------------------------------------------------------

def _curve_files(directory: Path, stem: str) -> tuple[str, ...]:
    return (
        str(directory / f"{stem}_pmoo.csv"),
        str(directory / f"{stem}_martingale.csv"),
        str(directory / f"{stem}_sim.csv"),
    )


def fig4(directory=".") -> list[str]:
    d = Path(directory)
    return [
        render(
            FigureSpec(
                axes="counterexample",
                inputs=(str(d / "counterexample.csv"),),
                output=str(d / "fig4.png"),
                title="double-supremum tail vs the claimed bound",
            )
        )
    ]


def _two_panel(directory, stem, name, sweep_xlabel) -> list[str]:
    d = Path(directory)
    left = render(
        FigureSpec(
            axes="prob_vs_value",
            inputs=_curve_files(d, stem),
            output=str(d / f"{name}_left.png"),
            xlabel="target delay",
        )
    )
    right = render(
        FigureSpec(
            axes="delay_vs_param",
            inputs=(str(d / f"{stem}_sweep.csv"),),
            output=str(d / f"{name}_right.png"),
            xlabel=sweep_xlabel,
        )
    )
    return [left, right]


def fig5(directory=".") -> list[str]:
    return _two_panel(directory, "fig1a", "fig5", "service probability of server 1")


def fig6(directory=".") -> list[str]:
    return _two_panel(directory, "fig1b", "fig6", "rate of server 2")


def fig7(directory=".") -> list[str]:
    d = Path(directory)
    return [
        render(
            FigureSpec(
                axes="prob_vs_value",
                inputs=_curve_files(d, "sinktree_up"),
                output=str(d / "fig7.png"),
                xlabel="target delay",
            )
        )
    ]


def fig8(directory=".") -> list[str]:
    d = Path(directory)
    return [
        render(
            FigureSpec(
                axes="prob_vs_value",
                inputs=_curve_files(d, "sinktree_down"),
                output=str(d / "fig8.png"),
                xlabel="target delay",
            )
        )
    ]


NAMED_FIGURES = {"fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7, "fig8": fig8}
