"""Loss-curve rendering from metrics CSVs.

Each input CSV holds one scheme's per-node, per-round metrics. The pipeline
filters to one task group, averages ``val_loss`` over that group's nodes for
every round, draws one line per scheme, and writes the averaged series next
to the image as a small CSV so the numbers stay checkable without image
diffing.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import PlotError

EXPECTED_COLUMNS = (
    "round",
    "node_id",
    "group_id",
    "scheme",
    "train_loss",
    "val_loss",
    "phi",
)

TABLE_COLUMNS = ("scheme", "round", "mean_val_loss")


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: input CSVs (one per scheme), group filter, output path."""

    inputs: tuple[str, ...]
    group: int
    out: str
    title: str = "Mean validation loss per round"

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        if len(self.inputs) == 0:
            raise PlotError("at least one input CSV is required")


def read_metrics(path: str) -> list[dict]:
    """Parse one metrics CSV into typed rows, enforcing the exact schema."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{path}: empty file") from None
        if tuple(header) != EXPECTED_COLUMNS:
            raise PlotError(
                f"{path}: schema mismatch: expected columns "
                f"{','.join(EXPECTED_COLUMNS)}, got {','.join(header)}"
            )
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != len(EXPECTED_COLUMNS):
                raise PlotError(f"{path}:{lineno}: expected {len(EXPECTED_COLUMNS)} cells")
            try:
                rows.append(
                    {
                        "round": int(cells[0]),
                        "node_id": int(cells[1]),
                        "group_id": int(cells[2]),
                        "scheme": cells[3],
                        "train_loss": float(cells[4]),
                        "val_loss": float(cells[5]),
                        "phi": float(cells[6]) if cells[6] != "" else None,
                    }
                )
            except ValueError as exc:
                raise PlotError(f"{path}:{lineno}: bad cell value: {exc}") from exc
    return rows


def group_mean_series(rows: list[dict], group: int, source: str) -> tuple[str, list[tuple[int, float]]]:
    """One file's (scheme, per-round mean val_loss over the group's nodes)."""
    schemes = {r["scheme"] for r in rows}
    if len(schemes) != 1:
        raise PlotError(f"{source}: expected a single scheme per file, got {sorted(schemes)}")
    scheme = schemes.pop()
    by_round: dict[int, list[float]] = {}
    for r in rows:
        if r["group_id"] == group:
            by_round.setdefault(r["round"], []).append(r["val_loss"])
    if not by_round:
        raise PlotError(f"{source}: no rows for group {group}")
    series = [(rnd, sum(vals) / len(vals)) for rnd, vals in sorted(by_round.items())]
    return scheme, series


def load_series(spec: PlotSpec) -> dict[str, list[tuple[int, float]]]:
    """All input files reduced to per-scheme mean-loss series."""
    out: dict[str, list[tuple[int, float]]] = {}
    for path in spec.inputs:
        scheme, series = group_mean_series(read_metrics(path), spec.group, path)
        if scheme in out:
            raise PlotError(f"{path}: scheme {scheme!r} appears in more than one input")
        out[scheme] = series
    return out


def build_figure(series: dict[str, list[tuple[int, float]]], title: str):
    """One labelled line per scheme with a legend; caller owns the figure."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for scheme in sorted(series):
        points = series[scheme]
        ax.plot([p[0] for p in points], [p[1] for p in points], label=scheme)
    ax.set_xlabel("round")
    ax.set_ylabel("mean validation loss")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig


def table_path_for(image_path: str) -> str:
    stem, _ = os.path.splitext(image_path)
    return stem + "-data.csv"


def write_table(series: dict[str, list[tuple[int, float]]], path: str) -> None:
    """The reduced data behind the figure, with full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TABLE_COLUMNS) + "\n")
        for scheme in sorted(series):
            for rnd, mean in series[scheme]:
                fh.write(f"{scheme},{rnd},{mean!r}\n")


def plot_loss_curves(spec: PlotSpec) -> tuple[str, str]:
    """Render the figure and its data table; returns both paths."""
    series = load_series(spec)
    fig = build_figure(series, spec.title)
    out_dir = os.path.dirname(spec.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    try:
        fig.savefig(spec.out, dpi=150)
    finally:
        plt.close(fig)
    table_path = table_path_for(spec.out)
    write_table(series, table_path)
    return spec.out, table_path
