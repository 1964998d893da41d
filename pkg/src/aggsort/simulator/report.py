"""Sorting reports: per-lithology grasp and classification tallies, rendered as text or CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from ..dataset import Lithology, REPORT_ORDER

COLUMNS = ("category", "attempted", "grasp_successes", "success_rate_pct", "correctly_classified", "accuracy_pct")
CATEGORY_LABELS = {lith: f"{lith.label} ({lith.code})" for lith in Lithology}
OVERALL = "overall"


@dataclass(frozen=True)
class CategoryRow:
    lithology: Lithology
    attempted: int
    grasp_successes: int
    correctly_classified: int

    def __post_init__(self) -> None:
        if self.attempted < 0 or not 0 <= self.grasp_successes <= self.attempted:
            raise ValueError(f"grasp successes {self.grasp_successes} outside [0, {self.attempted}]")
        if not 0 <= self.correctly_classified <= self.attempted:
            raise ValueError(f"correct count {self.correctly_classified} outside [0, {self.attempted}]")

    @property
    def grasp_rate(self) -> Fraction | None:
        return Fraction(100 * self.grasp_successes, self.attempted) if self.attempted else None

    @property
    def accuracy(self) -> Fraction | None:
        return Fraction(100 * self.correctly_classified, self.attempted) if self.attempted else None


@dataclass(frozen=True)
class SortReport:
    rows: tuple[CategoryRow, ...]

    def row(self, lith: Lithology) -> CategoryRow:
        for r in self.rows:
            if r.lithology is lith:
                return r
        raise KeyError(lith)

    @property
    def attempted(self) -> int:
        return sum(r.attempted for r in self.rows)

    @property
    def grasp_successes(self) -> int:
        return sum(r.grasp_successes for r in self.rows)

    @property
    def correctly_classified(self) -> int:
        return sum(r.correctly_classified for r in self.rows)

    def _mean(self, rates) -> Fraction | None:
        vals = [r for r in rates if r is not None]
        return sum(vals, Fraction(0)) / len(vals) if vals else None

    @property
    def mean_grasp_rate(self) -> Fraction | None:
        """Unweighted mean of the per-category grasp rates."""
        return self._mean(r.grasp_rate for r in self.rows)

    @property
    def mean_accuracy(self) -> Fraction | None:
        return self._mean(r.accuracy for r in self.rows)

    @property
    def overall_mean(self) -> Fraction | None:
        """Mean over every per-category grasp rate and accuracy."""
        return self._mean([r.grasp_rate for r in self.rows] + [r.accuracy for r in self.rows])


def pct(value: Fraction | None) -> str:
    """Integer when exact, otherwise one decimal (half away from zero)."""
    if value is None:
        return "-"
    if value.denominator == 1:
        return str(value.numerator)
    return _one_decimal(value)


def _one_decimal(value: Fraction) -> str:
    tenths = value * 10
    n = int(abs(tenths) + Fraction(1, 2))
    sign = "-" if value < 0 else ""
    return f"{sign}{n // 10}.{n % 10}"


def mean_pct(value: Fraction | None) -> str:
    return "-" if value is None else _one_decimal(value)


def _row_cells(r: CategoryRow) -> list[str]:
    return [CATEGORY_LABELS[r.lithology], str(r.attempted), str(r.grasp_successes), pct(r.grasp_rate),
            str(r.correctly_classified), pct(r.accuracy)]


def _overall_cells(rep: SortReport) -> list[str]:
    return [OVERALL, str(rep.attempted), str(rep.grasp_successes), mean_pct(rep.mean_grasp_rate),
            str(rep.correctly_classified), mean_pct(rep.mean_accuracy)]


def render_report(report: SortReport, fmt: str = "table") -> str:
    """Render as an aligned text table or CSV.

    The ``overall`` line carries totals and the unweighted means of the
    category rates; a final line gives the mean over all rates. An empty
    report renders as the header alone.
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in report.rows:
            w.writerow(_row_cells(r))
        if report.rows:
            w.writerow(_overall_cells(report))
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    body = [list(COLUMNS)] + [_row_cells(r) for r in report.rows]
    if report.rows:
        body.append(_overall_cells(report))
    widths = [max(len(row[i]) for row in body) for i in range(len(COLUMNS))]
    lines = []
    for row in body:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    if report.rows:
        lines.append(f"overall mean: {mean_pct(report.overall_mean)}%")
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> SortReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError("missing or unexpected CSV header")
    by_label = {v: k for k, v in CATEGORY_LABELS.items()}
    out = []
    for cells in rows[1:]:
        if not cells or cells[0] == OVERALL:
            continue
        lith = by_label[cells[0]]
        r = CategoryRow(lith, int(cells[1]), int(cells[2]), int(cells[4]))
        if pct(r.grasp_rate) != cells[3] or pct(r.accuracy) != cells[5]:
            raise ValueError(f"rates in row {cells} disagree with its counts")
        out.append(r)
    return SortReport(tuple(out))


def report_from_tallies(tallies, order=REPORT_ORDER) -> SortReport:
    """Build from ``(lithology, Tally)`` pairs, skipping categories never attempted."""
    d = dict(tallies)
    rows = []
    for lith in order:
        t = d.get(lith)
        if t is not None and t.attempted:
            rows.append(CategoryRow(lith, t.attempted, t.grasp_successes, t.correct))
    return SortReport(tuple(rows))
