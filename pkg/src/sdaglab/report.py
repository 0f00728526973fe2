"""Machine-readable run reports and table rendering."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .stats import TTestResult

TABLE_STYLES = ("markdown", "csv")


def ttest_dict(result: TTestResult | None) -> dict | None:
    if result is None:
        return None
    return {"t": result.t, "p": result.p, "df": result.df, "degenerate": result.degenerate}


@dataclass(frozen=True)
class RunReport:
    """Everything a run produced, recomputable from the per-question records."""

    config: dict
    modes: dict[str, dict]
    significance: dict | None
    strata: dict
    dominant_sets: dict
    provenance: dict
    n_questions: int = 0
    _extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_questions": self.n_questions,
            "modes": self.modes,
            "significance": self.significance,
            "strata": self.strata,
            "dominant_sets": self.dominant_sets,
            "provenance": self.provenance,
            **self._extras,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "RunReport":
        known = {"config", "n_questions", "modes", "significance", "strata", "dominant_sets", "provenance"}
        return cls(
            config=obj.get("config", {}),
            n_questions=obj.get("n_questions", 0),
            modes=obj.get("modes", {}),
            significance=obj.get("significance"),
            strata=obj.get("strata", {}),
            dominant_sets=obj.get("dominant_sets", {}),
            provenance=obj.get("provenance", {}),
            _extras={k: v for k, v in obj.items() if k not in known},
        )


def _metrics_rows(report: RunReport) -> list[tuple[str, float, float, int]]:
    rows = []
    for mode in sorted(report.modes):
        m = report.modes[mode]
        rows.append((mode, m["acc"], m["asr"], m["n"]))
    return rows


def render_markdown_table(report: RunReport) -> str:
    lines = ["| mode | acc | asr | n |", "| --- | --- | --- | --- |"]
    for mode, acc, asr, n in _metrics_rows(report):
        lines.append(f"| {mode} | {acc:.4f} | {asr:.4f} | {n} |")
    sig = report.significance
    if sig:
        lines.append("")
        for metric in ("acc", "asr"):
            entry = sig.get(metric)
            if entry:
                lines.append(
                    f"paired t ({metric}): t={entry['t']:.4f}, p={entry['p']:.4f}, df={entry['df']:.0f}"
                )
    return "\n".join(lines) + "\n"


def render_csv_table(report: RunReport) -> str:
    # full-precision floats so the csv round-trips to the exact report numbers
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["mode", "acc", "asr", "n"])
    for mode, acc, asr, n in _metrics_rows(report):
        writer.writerow([mode, repr(acc), repr(asr), n])
    return buffer.getvalue()


def emit_tables(
    report: RunReport, style: str, out_dir: str | Path, *, stem: str = "metrics"
) -> list[Path]:
    """Write the ACC/ASR grid; bytes are deterministic for a fixed report."""
    if style not in TABLE_STYLES:
        raise ValueError(f"style must be one of {TABLE_STYLES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if style == "markdown":
        path = out / f"{stem}.md"
        path.write_bytes(render_markdown_table(report).encode("utf-8"))
    else:
        path = out / f"{stem}.csv"
        path.write_bytes(render_csv_table(report).encode("utf-8"))
    return [path]


def load_report(path: str | Path) -> RunReport:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunReport.from_dict(obj)
