"""Writes metadata JSON, metric CSVs and convergence-curve data."""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path
from typing import Mapping, Sequence

from metabbo.metadata import SuiteMetadata, atomic_write_text, write_metadata
from metabbo.metrics import PerfReport, Ranking, convergence_rows


class OutputError(OSError):
    pass


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def write_csv(path: str | os.PathLike, header: Sequence[str], rows) -> Path:
    try:
        return atomic_write_text(path, _csv_text(header, rows))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_rank_csv(path, ranking: Ranking) -> Path:
    rows = [(a, f"{ranking.average[a]:.6g}") for a in ranking.order]
    return write_csv(path, ["algorithm", "average_rank"], rows)


def write_perf_csv(path, reports: Mapping[str, Mapping[str, PerfReport]]) -> Path:
    """``reports[algorithm][suite] -> PerfReport``."""
    rows = []
    for alg in sorted(reports):
        for suite in sorted(reports[alg]):
            rows.append((alg, suite, repr(reports[alg][suite].perf)))
    return write_csv(path, ["algorithm", "suite", "perf"], rows)


def write_instance_csv(path, report: PerfReport) -> Path:
    rows = [
        (pid, repr(report.instance_scores[pid]), repr(report.final_mean[pid]), repr(report.final_std[pid]))
        for pid in report.instance_scores
    ]
    return write_csv(path, ["instance_id", "score", "final_mean", "final_std"], rows)


def write_convergence_csv(path, md: SuiteMetadata, suite=None) -> Path:
    rows = [(pid, g, repr(m), repr(lo), repr(hi)) for pid, g, m, lo, hi in convergence_rows(md, suite)]
    return write_csv(path, ["instance_id", "generation", "median", "q25", "q75"], rows)


def emit_outputs(
    md: Mapping[str, SuiteMetadata],
    reports: Mapping[str, Mapping[str, PerfReport]],
    destination: str | os.PathLike,
    *,
    rankings: Mapping[str, Ranking] | None = None,
    efficiency: Mapping[str, Sequence[tuple[int, float]]] | None = None,
    anti_nfl: Mapping[str, float] | None = None,
    suites: Mapping[str, object] | None = None,
) -> list[Path]:
    """Write every artifact under ``destination``; returns the written paths.

    ``md`` maps a label (``"<algorithm>@<suite>"``) to its metadata.
    """
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {dest}: {exc}") from exc
    written = []
    for label, m in md.items():
        safe = label.replace("/", "_")
        try:
            written.append(write_metadata(dest / f"metadata_{safe}.json", m))
        except OSError as exc:
            raise OutputError(f"cannot write metadata for {label} under {dest}: {exc}") from exc
        suite = None
        if suites is not None:
            suite = suites.get(label)
        written.append(write_convergence_csv(dest / f"convergence_{safe}.csv", m, suite))
    if reports:
        written.append(write_perf_csv(dest / "perf.csv", reports))
    for suite_name, ranking in (rankings or {}).items():
        written.append(write_rank_csv(dest / f"rank_{suite_name.replace('/', '_')}.csv", ranking))
    if efficiency:
        rows = [(alg, g, repr(v)) for alg in sorted(efficiency) for g, v in efficiency[alg]]
        written.append(write_csv(dest / "efficiency.csv", ["algorithm", "epoch", "efficiency"], rows))
    if anti_nfl:
        rows = [(alg, repr(anti_nfl[alg])) for alg in sorted(anti_nfl)]
        written.append(write_csv(dest / "anti_nfl.csv", ["algorithm", "anti_nfl"], rows))
    return written
