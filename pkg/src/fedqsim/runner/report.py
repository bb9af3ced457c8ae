"""Report emission: long-format CSV, final-round summary, and figures.

Takes any number of per-run metric JSONL files and produces artifacts a
spreadsheet or plotting script can consume directly: one long CSV with a
(run_id, round, metric, value) row per recorded value, a summary CSV of
final-round values with cumulative counters, and a PNG line chart per
quality metric with one line per run.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from ..errors import DataError
from ..metrics import MetricSeries

_COUNTER_FIELDS = ("bytes_up", "bytes_down", "local_steps", "critical_path_steps")


@dataclass(frozen=True)
class RunMetrics:
    """One run's metric series under its display name."""

    run_id: str
    path: Path
    series: MetricSeries

    def quality_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for record in self.series.records:
            for name in record.metric_values():
                if name not in names:
                    names.append(name)
        return tuple(names)


def _derive_run_id(path: Path) -> str:
    # Run directories conventionally hold a file named metrics.jsonl, so the
    # stem alone would collapse every run to the same id.
    if path.stem == "metrics" and path.parent.name:
        return path.parent.name
    return path.stem


def load_runs(metric_files) -> list[RunMetrics]:
    """Loads each JSONL file and assigns a unique run id."""
    runs: list[RunMetrics] = []
    seen: dict[str, Path] = {}
    for raw in metric_files:
        path = Path(raw)
        if not path.exists():
            raise DataError(f"metric file not found: {path}")
        series = MetricSeries.load_jsonl(path)
        if not series.records:
            raise DataError(f"metric file is empty: {path}")
        run_id = _derive_run_id(path)
        if run_id in seen:
            raise DataError(
                f"run id {run_id!r} is ambiguous: {seen[run_id]} and {path}; "
                "rename a file or its directory"
            )
        seen[run_id] = path
        runs.append(RunMetrics(run_id=run_id, path=path, series=series))
    if not runs:
        raise DataError("no metric files given")
    return runs


def check_schemas(runs: list[RunMetrics]) -> tuple[str, ...]:
    """The shared quality-metric names; raises if runs disagree."""
    reference = runs[0].quality_names()
    for run in runs[1:]:
        names = run.quality_names()
        if set(names) != set(reference):
            raise DataError(
                "metric files mix incompatible schemas: "
                f"{runs[0].run_id} records {sorted(reference)} but "
                f"{run.run_id} records {sorted(names)}"
            )
    return reference


def long_rows(runs: list[RunMetrics]) -> list[tuple[str, int, str, float]]:
    """(run_id, round, metric, value) rows; one per recorded value."""
    rows: list[tuple[str, int, str, float]] = []
    for run in runs:
        for record in run.series.records:
            for name, value in record.metric_values().items():
                rows.append((run.run_id, record.round, name, value))
            for name in _COUNTER_FIELDS:
                rows.append((run.run_id, record.round, name, float(getattr(record, name))))
    return rows


def _write_long_csv(path: Path, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("run_id", "round", "metric", "value"))
        for run_id, round_index, metric, value in rows:
            writer.writerow((run_id, round_index, metric, _format_value(value)))


def _format_value(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def summary_rows(runs: list[RunMetrics], quality: tuple[str, ...]) -> list[dict]:
    """Final-round values plus whole-run counter totals, one row per run."""
    rows = []
    for run in runs:
        final = run.series.final()
        row: dict = {"run_id": run.run_id, "final_round": final.round}
        values = final.metric_values()
        for name in quality:
            row[name] = values.get(name)
        for name, total in run.series.totals().items():
            row[f"total_{name}"] = total
        rows.append(row)
    return rows


def _write_summary_csv(path: Path, rows: list[dict]) -> None:
    fieldnames = list(rows[0].keys())
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: ("" if v is None else _format_value(v) if isinstance(v, float) else v)
                 for k, v in row.items()}
            )


def format_summary_table(rows: list[dict]) -> str:
    """Aligned text table of the summary rows."""
    headers = list(rows[0].keys())
    cells = [headers] + [
        ["" if row[h] is None else (f"{row[h]:.4f}" if isinstance(row[h], float) else str(row[h]))
         for h in headers]
        for row in rows
    ]
    widths = [max(len(line[i]) for line in cells) for i in range(len(headers))]
    out = io.StringIO()
    for i, line in enumerate(cells):
        out.write("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() + "\n")
        if i == 0:
            out.write("  ".join("-" * w for w in widths) + "\n")
    return out.getvalue()


def render_figures(
    runs: list[RunMetrics], quality: tuple[str, ...], out_dir: Path
) -> list[Path]:
    """One line chart per quality metric, one line per run."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for name in quality:
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        for run in runs:
            points = [
                (r.round, r.metric_values()[name])
                for r in run.series.records
                if name in r.metric_values()
            ]
            if not points:
                continue
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker="o", markersize=3, label=run.run_id)
        ax.set_xlabel("round")
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def emit_report(metric_files, out_dir: str | Path) -> dict:
    """Full report for a set of metric files.

    Writes ``report.csv`` (long format), ``summary.csv``, and one PNG per
    quality metric into ``out_dir``; returns the artifact paths and the
    printable summary table under ``summary_text``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = load_runs(metric_files)
    quality = check_schemas(runs)
    rows = long_rows(runs)
    csv_path = out / "report.csv"
    _write_long_csv(csv_path, rows)
    summary = summary_rows(runs, quality)
    summary_path = out / "summary.csv"
    _write_summary_csv(summary_path, summary)
    figures = render_figures(runs, quality, out)
    return {
        "csv": csv_path,
        "summary_csv": summary_path,
        "figures": figures,
        "summary_text": format_summary_table(summary),
    }
