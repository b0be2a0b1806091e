"""Evaluation arithmetic: field accuracy, coefficient errors, trial rates.

Accuracy compares a computed field against a reference sampled on the same
points, as 1 minus the relative L2 deviation. Every sum goes through
``math.fsum`` so results do not depend on the order the samples arrive in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

NEAR_ZERO_REFERENCE = 1e-6
COORDINATE_COLUMNS = 3


class LengthMismatch(Exception):
    pass


class ZeroReferenceNorm(Exception):
    pass


class FieldFileError(Exception):
    pass


@dataclass(frozen=True)
class FieldArray:
    """Flat sample array of one field; vectors are stored interleaved."""

    values: tuple[float, ...]
    name: str = ""
    components: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values",
                           tuple(float(v) for v in self.values))
        if self.components < 1:
            raise ValueError("component count must be positive")
        if len(self.values) % self.components:
            raise ValueError(
                f"{len(self.values)} values do not divide into groups "
                f"of {self.components}")
        for value in self.values:
            if not math.isfinite(value):
                raise ValueError("field values must be finite")

    def __len__(self) -> int:
        return len(self.values)


def read_field_file(path: Path | str, *,
                    coordinate_columns: int = COORDINATE_COLUMNS,
                    name: str | None = None) -> FieldArray:
    """Loads whitespace-separated columns, skipping `#` header lines.

    Files wider than ``coordinate_columns`` are treated as sampled-surface
    output: the leading position columns are dropped and the rest become
    the field components. Narrower files are taken wholesale.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc}") from exc
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            rows.append([float(token) for token in stripped.split()])
        except ValueError:
            raise FieldFileError(
                f"{path}:{lineno}: non-numeric value in {stripped!r}")
        if len(rows[-1]) != len(rows[0]):
            raise FieldFileError(
                f"{path}:{lineno}: expected {len(rows[0])} columns, "
                f"got {len(rows[-1])}")
    if not rows:
        raise FieldFileError(f"{path}: no data rows")
    width = len(rows[0])
    drop = coordinate_columns if width > coordinate_columns else 0
    values = tuple(value for row in rows for value in row[drop:])
    return FieldArray(values, name=name if name is not None else path.stem,
                      components=width - drop)


def field_accuracy(candidate: FieldArray, reference: FieldArray) -> float:
    """1 − ‖candidate − reference‖₂ / ‖reference‖₂.

    Negative for very poor candidates; clamping is left to presentation.
    """
    if (len(candidate.values) != len(reference.values)
            or candidate.components != reference.components):
        raise LengthMismatch(
            f"candidate has {len(candidate.values)} values "
            f"x{candidate.components}, reference "
            f"{len(reference.values)} x{reference.components}")
    reference_sq = math.fsum(v * v for v in reference.values)
    if reference_sq == 0.0:
        raise ZeroReferenceNorm("reference field has zero norm")
    deviation_sq = math.fsum(
        (c - r) ** 2 for c, r in zip(candidate.values, reference.values))
    return 1.0 - math.sqrt(deviation_sq) / math.sqrt(reference_sq)


@dataclass(frozen=True)
class CoefficientError:
    value: float
    near_zero_reference: bool = False

    def describe(self) -> str:
        if self.near_zero_reference:
            return (f"absolute deviation {self.value:g} "
                    "(reference too close to zero for a relative error)")
        return f"{self.value:.2f}%"


def coefficient_error(candidate: float, reference: float) -> CoefficientError:
    """Relative error in percent; absolute deviation when |reference| ~ 0."""
    if abs(reference) < NEAR_ZERO_REFERENCE:
        return CoefficientError(abs(candidate - reference),
                                near_zero_reference=True)
    return CoefficientError(100.0 * abs(candidate - reference) / abs(reference))


@dataclass(frozen=True)
class TrialAggregate:
    trials: int
    converged: int
    completed: int
    success_rate: float
    completion_rate: float
    mean_iterations: float
    mean_tokens: float

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 100.0:
            raise ValueError("success rate outside [0, 100]")
        if not 0.0 <= self.completion_rate <= 100.0:
            raise ValueError("completion rate outside [0, 100]")
        if self.completion_rate < self.success_rate:
            raise ValueError("completion rate below success rate")


def aggregate_trials(reports) -> TrialAggregate:
    """Rates and means over workflow reports of repeated identical runs.

    A converged trial counts as completed whatever its completed flag says,
    so the completion rate can never undercut the success rate.
    """
    if not reports:
        raise ValueError("at least one trial is required")
    trials = len(reports)
    converged = sum(1 for r in reports if r.converged)
    completed = sum(1 for r in reports if r.completed or r.converged)
    return TrialAggregate(
        trials=trials,
        converged=converged,
        completed=completed,
        success_rate=100.0 * converged / trials,
        completion_rate=100.0 * completed / trials,
        mean_iterations=math.fsum(r.iterations for r in reports) / trials,
        mean_tokens=math.fsum(r.tokens.total for r in reports) / trials,
    )


@dataclass(frozen=True)
class ReportRow:
    label: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values",
                           tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class Report:
    title: str
    columns: tuple[str, ...]
    rows: tuple[ReportRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(self.rows))
        for row in self.rows:
            if len(row.values) != len(self.columns):
                raise ValueError(
                    f"row {row.label!r} has {len(row.values)} values for "
                    f"{len(self.columns)} columns")


AVERAGE_LABEL = "Avg."


def _format(value: float) -> str:
    return f"{value:.4f}"


def render_report(report: Report) -> str:
    """Fixed-width table; a mean row is appended when there are 2+ rows."""
    rows = list(report.rows)
    if len(rows) >= 2:
        means = tuple(
            math.fsum(row.values[i] for row in rows) / len(rows)
            for i in range(len(report.columns)))
        rows.append(ReportRow(AVERAGE_LABEL, means))
    label_width = max([len("Case")] + [len(r.label) for r in rows])
    widths = [
        max(len(name), *(len(_format(r.values[i])) for r in rows))
        if rows else len(name)
        for i, name in enumerate(report.columns)
    ]
    header = "  ".join(["Case".ljust(label_width)]
                       + [name.rjust(w)
                          for name, w in zip(report.columns, widths)])
    rule = "  ".join(["-" * label_width] + ["-" * w for w in widths])
    lines = [report.title, header, rule]
    for row in rows:
        lines.append("  ".join(
            [row.label.ljust(label_width)]
            + [_format(v).rjust(w) for v, w in zip(row.values, widths)]))
    return "\n".join(lines) + "\n"


def report_to_json(report: Report) -> dict:
    return {
        "title": report.title,
        "columns": list(report.columns),
        "rows": [
            {"label": row.label, "values": list(row.values)}
            for row in report.rows
        ],
    }


def report_from_json(data: dict) -> Report:
    return Report(
        title=data["title"],
        columns=tuple(data["columns"]),
        rows=tuple(ReportRow(row["label"], tuple(row["values"]))
                   for row in data["rows"]),
    )


def report_schema() -> dict:
    """The documented shape of a serialized report record."""
    schema_path = Path(__file__).parent / "data" / "report.schema.json"
    return json.loads(schema_path.read_text())
