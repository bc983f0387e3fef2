"""Word recognition rate, severity-tier aggregation, usability flags and
report emission (text table, CSV, JSON)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

SATISFACTORY_HEALTHY = 90.0
TOLERABLE_IMPAIRED = 65.0
TIERS = ("mild", "moderate", "high")
TIER_LABELS = {"mild": "Mild", "moderate": "Mod", "high": "High", "all": "All"}


class ReportError(ValueError):
    pass


def wrr(correct: int, attempted: int) -> float:
    """Percentage of words recognised correctly."""
    if attempted < 1:
        raise ReportError("zero words attempted")
    if not 0 <= correct <= attempted:
        raise ReportError(f"correct={correct} outside [0, {attempted}]")
    return 100.0 * correct / attempted


def round2(x: float) -> float:
    """Two decimals, halves rounded away from zero."""
    if math.isnan(x):
        return x
    return float(Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def fmt2(x: float) -> str:
    return "nan" if math.isnan(x) else f"{round2(x):.2f}"


def mean_sd(values: Sequence[float], ddof: int = 1) -> tuple[float, float]:
    """Mean and standard deviation; a single value has SD 0.

    ``ddof=1`` (sample SD) is the default because it reproduces the
    published tier aggregates.
    """
    n = len(values)
    if n == 0:
        raise ReportError("cannot aggregate an empty group")
    mean = math.fsum(values) / n
    if n - ddof <= 0:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - ddof)
    return mean, math.sqrt(var)


@dataclass
class Row:
    speaker_id: str
    severity: str
    values: dict[str, float]


@dataclass
class WrrReport:
    scenarios: list[str]
    rows: list[Row] = field(default_factory=list)

    def column(self, scenario: str, tier: str = "all") -> list[float]:
        return [r.values[scenario] for r in self.rows if tier == "all" or r.severity == tier]

    def tiers_present(self) -> list[str]:
        return [t for t in TIERS if any(r.severity == t for r in self.rows)]


def aggregate(rows: Iterable[Row], scenarios: Sequence[str], ddof: int = 1) -> dict[str, dict[str, tuple[float, float]]]:
    """{tier: {scenario: (mean, sd)}} for every tier present plus ``all``."""
    rows = list(rows)
    for r in rows:
        if r.severity not in TIERS:
            raise ReportError(f"{r.speaker_id}: unknown severity tier {r.severity!r}")
    if not rows:
        raise ReportError("empty tier: no rows")
    out: dict[str, dict[str, tuple[float, float]]] = {}
    for tier in [t for t in TIERS if any(r.severity == t for r in rows)] + ["all"]:
        members = [r for r in rows if tier == "all" or r.severity == tier]
        out[tier] = {s: mean_sd([r.values[s] for r in members], ddof) for s in scenarios}
    return out


@dataclass(frozen=True)
class UsabilityFlags:
    healthy_satisfactory: bool
    impaired_tolerable: bool


def usability_flags(value: float) -> UsabilityFlags:
    if not 0.0 <= value <= 100.0:
        raise ReportError(f"WRR {value} outside [0, 100]")
    return UsabilityFlags(value >= SATISFACTORY_HEALTHY, value >= TOLERABLE_IMPAIRED)


def best_in_row(values: dict[str, float], scenarios: Sequence[str]) -> set[str]:
    """Every scenario attaining the row maximum at reporting precision."""
    rounded = {s: round2(values[s]) for s in scenarios}
    top = max(rounded.values())
    return {s for s, v in rounded.items() if v == top}


def count_tolerable(report: WrrReport, scenarios: Sequence[str] | None = None, threshold: float = TOLERABLE_IMPAIRED) -> int:
    """Speakers whose best WRR over ``scenarios`` reaches ``threshold``.

    ``scenarios`` is the selection policy: the columns allowed to count.
    """
    chosen = list(scenarios) if scenarios is not None else report.scenarios
    return sum(1 for r in report.rows if max(r.values[s] for s in chosen) >= threshold)


# -- emission -----------------------------------------------------------------


def to_csv(report: WrrReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["speaker_id", "severity", *report.scenarios])
    for r in report.rows:
        w.writerow([r.speaker_id, r.severity, *(repr(float(r.values[s])) for s in report.scenarios)])
    return buf.getvalue()


def from_csv(text: str) -> WrrReport:
    lines = list(csv.reader(io.StringIO(text)))
    if not lines or lines[0][:2] != ["speaker_id", "severity"]:
        raise ReportError("csv report needs a speaker_id,severity,... header")
    scenarios = lines[0][2:]
    rows = [Row(l[0], l[1], {s: float(v) for s, v in zip(scenarios, l[2:])}) for l in lines[1:] if l]
    return WrrReport(scenarios, rows)


def to_json(report: WrrReport) -> str:
    payload = {
        "scenarios": report.scenarios,
        "rows": [
            {
                "speaker_id": r.speaker_id,
                "severity": r.severity,
                "wrr": {s: r.values[s] for s in report.scenarios},
                "flags": {
                    s: {
                        "healthy_satisfactory": f.healthy_satisfactory,
                        "impaired_tolerable": f.impaired_tolerable,
                    }
                    for s in report.scenarios
                    for f in [usability_flags(r.values[s])]
                },
            }
            for r in report.rows
        ],
        "aggregates": (
            {t: {s: {"mean": m, "sd": sd} for s, (m, sd) in d.items()} for t, d in aggregate(report.rows, report.scenarios).items()}
            if report.rows
            else {}
        ),
        "tolerable_count": count_tolerable(report) if report.rows else 0,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def from_json(text: str) -> WrrReport:
    data = json.loads(text)
    rows = [Row(r["speaker_id"], r["severity"], {s: float(v) for s, v in r["wrr"].items()}) for r in data["rows"]]
    return WrrReport(list(data["scenarios"]), rows)


def to_text(report: WrrReport, title: str | None = None) -> str:
    """Fixed-width table; best value per row is starred."""
    header = ["Severity", "Speaker", *report.scenarios]
    lines: list[list[str]] = []
    last_tier = None
    for r in report.rows:
        best = best_in_row(r.values, report.scenarios)
        tier = TIER_LABELS.get(r.severity, r.severity).capitalize() if r.severity != last_tier else ""
        last_tier = r.severity
        lines.append([tier, r.speaker_id, *(fmt2(r.values[s]) + ("*" if s in best else "") for s in report.scenarios)])
    agg_lines: list[list[str]] = []
    if report.rows:
        agg = aggregate(report.rows, report.scenarios)
        for i, (tier, d) in enumerate(agg.items()):
            best_mean = max(round2(m) for m, _ in d.values())
            cells = [f"{fmt2(m)} ({fmt2(sd)})" + ("*" if round2(m) == best_mean else "") for m, sd in d.values()]
            agg_lines.append(["Mean (SD)" if i == 0 else "", TIER_LABELS[tier], *cells])
    widths = [max(len(x[i]) for x in [header, *lines, *agg_lines]) for i in range(len(header))]

    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = []
    if title:
        out.append(title)
    out.append(fmt(header))
    out.append("-" * len(out[-1]))
    out.extend(fmt(c) for c in lines)
    if agg_lines:
        out.append("-" * len(fmt(header)))
        out.extend(fmt(c) for c in agg_lines)
    return "\n".join(out) + "\n"


def emit_report(report: WrrReport, path: str | Path, fmt: str = "text", title: str | None = None) -> Path:
    path = Path(path)
    if fmt == "text":
        body = to_text(report, title)
    elif fmt == "csv":
        body = to_csv(report)
    elif fmt == "json":
        body = to_json(report)
    else:
        raise ReportError(f"unknown report format {fmt!r}")
    path.write_text(body, encoding="utf-8")
    return path
