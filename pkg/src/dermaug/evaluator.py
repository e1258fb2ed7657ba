"""Subgroup accuracy, binomial confidence intervals, and the result tables.

The interval is the normal approximation (p +/- z*sqrt(p(1-p)/n), clipped
to [0,1]) with z=1.96, which back-computation identifies as the method
behind the published bounds. A Wilson interval is available behind a flag
for comparison but is never the default.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import InvalidN, LengthMismatch, MissingPredictions
from .manifest import GROUP_ORDER, FSTGroup
from .splitter import MODES, SplitPlan

Z_95 = 1.96

#: Rendered placeholder for cells with no test data.
EMPTY_CELL = "—"


def accuracy(predictions: Sequence[str], truths: Sequence[str]) -> tuple[int, int, float | None]:
    """(correct, n, accuracy); accuracy is None when n=0."""
    if len(predictions) != len(truths):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(truths)} truths"
        )
    n = len(truths)
    correct = sum(1 for p, t in zip(predictions, truths) if p == t)
    return correct, n, (correct / n if n else None)


def wald_ci(accuracy: float, n: int, z: float = Z_95) -> tuple[float, float]:
    """Normal-approximation binomial interval, clipped to [0,1]."""
    if n < 1:
        raise InvalidN(f"n must be >= 1, got {n}")
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy {accuracy} outside [0,1]")
    half = z * math.sqrt(accuracy * (1.0 - accuracy) / n)
    return (max(0.0, accuracy - half), min(1.0, accuracy + half))


def wilson_ci(accuracy: float, n: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval; offered for methodological comparison only."""
    if n < 1:
        raise InvalidN(f"n must be >= 1, got {n}")
    denom = 1.0 + z * z / n
    center = (accuracy + z * z / (2 * n)) / denom
    half = z * math.sqrt((accuracy * (1 - accuracy) + z * z / (4 * n)) / n) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class EvalCell:
    """One (condition, training side, test group, mode) accuracy cell."""

    condition: str
    train_group: FSTGroup
    group: FSTGroup
    mode: str
    n: int
    correct: int
    accuracy: float | None
    ci_low: float | None
    ci_high: float | None

    def __post_init__(self) -> None:
        if self.correct > self.n:
            raise ValueError(f"correct {self.correct} > n {self.n}")


@dataclass(frozen=True)
class DoseRow:
    condition: str
    train_group: FSTGroup
    group: FSTGroup
    dose: int
    n: int
    correct: int
    accuracy: float | None


@dataclass(frozen=True)
class SpilloverRow:
    augmented: str | None  # None marks the un-augmented baseline block
    condition: str
    train_group: FSTGroup
    group: FSTGroup
    n: int
    correct: int
    accuracy: float | None


@dataclass(frozen=True)
class EvalReport:
    cells: tuple[EvalCell, ...]
    dose_rows: tuple[DoseRow, ...] = ()
    spillover: tuple[SpilloverRow, ...] = ()


def _cell_sort_key(cell: EvalCell) -> tuple:
    return (
        cell.condition,
        GROUP_ORDER.index(cell.train_group),
        GROUP_ORDER.index(cell.group),
        MODES.index(cell.mode),
    )


def _score_plan(
    plan: SplitPlan, predictions: Mapping[str, str]
) -> dict[tuple[str, FSTGroup], tuple[int, int]]:
    """(correct, n) per (condition, test group); fails if any test record
    lacks a prediction."""
    missing = [
        rec.image_id
        for recs in plan.test_by_group.values()
        for rec in recs
        if rec.image_id not in predictions
    ]
    if missing:
        raise MissingPredictions(
            f"{len(missing)} test records lack predictions (first: {missing[:5]})",
            missing,
        )
    tallies: dict[tuple[str, FSTGroup], tuple[int, int]] = {}
    for group, recs in plan.test_by_group.items():
        for condition in sorted(plan.spec.conditions):
            subset = [rec for rec in recs if rec.condition == condition]
            correct = sum(1 for rec in subset if predictions[rec.image_id] == rec.condition)
            tallies[(condition, group)] = (correct, len(subset))
    return tallies


def _make_cell(
    condition: str,
    train_group: FSTGroup,
    group: FSTGroup,
    mode: str,
    correct: int,
    n: int,
) -> EvalCell:
    acc = correct / n if n else None
    low, high = wald_ci(acc, n) if n else (None, None)
    return EvalCell(
        condition=condition,
        train_group=train_group,
        group=group,
        mode=mode,
        n=n,
        correct=correct,
        accuracy=acc,
        ci_low=low,
        ci_high=high,
    )


PlanResult = tuple[SplitPlan, Mapping[str, str]]


def build_report(
    plan_results: Iterable[PlanResult],
    dose_results: Iterable[PlanResult] = (),
    spillover_results: Iterable[PlanResult] = (),
) -> EvalReport:
    """Assemble the three result sections.

    `plan_results` feeds the mode-comparison cells; dose and spillover plans
    are passed separately because a dose-32 single-condition plan is
    structurally indistinguishable from a mode or spillover plan. Ordering
    of the inputs never matters; all sections are sorted deterministically.
    """
    cells = []
    for plan, predictions in plan_results:
        tallies = _score_plan(plan, predictions)
        for (condition, group), (correct, n) in tallies.items():
            cells.append(
                _make_cell(condition, plan.spec.train_group, group, plan.spec.mode, correct, n)
            )
    cells.sort(key=_cell_sort_key)

    dose_rows = []
    for plan, predictions in dose_results:
        tallies = _score_plan(plan, predictions)
        for condition in sorted(plan.spec.augmented_conditions):
            for group in GROUP_ORDER:
                if (condition, group) not in tallies:
                    continue
                correct, n = tallies[(condition, group)]
                dose_rows.append(
                    DoseRow(
                        condition=condition,
                        train_group=plan.spec.train_group,
                        group=group,
                        dose=plan.spec.dose,
                        n=n,
                        correct=correct,
                        accuracy=correct / n if n else None,
                    )
                )
    dose_rows.sort(
        key=lambda r: (r.condition, GROUP_ORDER.index(r.train_group), GROUP_ORDER.index(r.group), r.dose)
    )

    spillover_rows = []
    for plan, predictions in spillover_results:
        tallies = _score_plan(plan, predictions)
        augmented: str | None
        if plan.spec.mode == "fitz_only":
            augmented = None
        elif len(plan.spec.augmented_conditions) == 1:
            augmented = next(iter(plan.spec.augmented_conditions))
        else:
            raise ValueError("spillover plans augment exactly one condition (or none)")
        for (condition, group), (correct, n) in tallies.items():
            spillover_rows.append(
                SpilloverRow(
                    augmented=augmented,
                    condition=condition,
                    train_group=plan.spec.train_group,
                    group=group,
                    n=n,
                    correct=correct,
                    accuracy=correct / n if n else None,
                )
            )
    spillover_rows.sort(
        key=lambda r: (
            r.augmented is not None,  # baseline block first
            r.augmented or "",
            r.condition,
            GROUP_ORDER.index(r.train_group),
            GROUP_ORDER.index(r.group),
        )
    )
    return EvalReport(cells=tuple(cells), dose_rows=tuple(dose_rows), spillover=tuple(spillover_rows))


# ---- rendering ----

def format_cell(cell: EvalCell) -> str:
    """Published notation: accuracy to 3 decimals, CI bounds to 2."""
    if cell.n == 0 or cell.accuracy is None:
        return EMPTY_CELL
    return f"{cell.accuracy:.3f} ({cell.ci_low:.2f}-{cell.ci_high:.2f})"


def _fmt_acc(value: float | None) -> str:
    return EMPTY_CELL if value is None else f"{value:.3f}"


def render_modes_markdown(report: EvalReport) -> str:
    lines = ["# Classification accuracy (95% CI), N — by training data"]
    conditions = sorted({c.condition for c in report.cells})
    by_key = {
        (c.condition, c.train_group, c.group, c.mode): c for c in report.cells
    }
    for condition in conditions:
        lines.append("")
        lines.append(f"## {condition}")
        lines.append("| FST | trained on | fitz_only | seed | dalle_and_seed | N |")
        lines.append("| --- | --- | --- | --- | --- | --- |")
        for train_group in (FSTGroup.I_II, FSTGroup.V_VI):
            for group in GROUP_ORDER:
                if group is train_group:
                    continue
                row_cells = [
                    by_key.get((condition, train_group, group, mode)) for mode in MODES
                ]
                if all(c is None for c in row_cells):
                    continue
                n = next((c.n for c in row_cells if c is not None), 0)
                rendered = [format_cell(c) if c is not None else EMPTY_CELL for c in row_cells]
                lines.append(
                    f"| {group.value} | {train_group.value} | "
                    + " | ".join(rendered)
                    + f" | {n} |"
                )
    return "\n".join(lines) + "\n"


def render_dose_markdown(report: EvalReport) -> str:
    doses = sorted({r.dose for r in report.dose_rows})
    lines = ["# Classification accuracy by number of added synthetic training images"]
    conditions = sorted({r.condition for r in report.dose_rows})
    by_key = {(r.condition, r.train_group, r.group, r.dose): r for r in report.dose_rows}
    header = "| FST | " + " | ".join(f"+{d} images" for d in doses) + " | N |"
    for condition in conditions:
        lines.append("")
        lines.append(f"## {condition}")
        lines.append(header)
        lines.append("| --- |" + " --- |" * (len(doses) + 1))
        train_groups = sorted(
            {r.train_group for r in report.dose_rows if r.condition == condition},
            key=GROUP_ORDER.index,
        )
        for train_group in train_groups:
            for group in GROUP_ORDER:
                row = [by_key.get((condition, train_group, group, d)) for d in doses]
                if all(r is None for r in row):
                    continue
                n = next((r.n for r in row if r is not None), 0)
                accs = [
                    _fmt_acc(r.accuracy) if r is not None else EMPTY_CELL for r in row
                ]
                lines.append(f"| {group.value} | " + " | ".join(accs) + f" | {n} |")
    return "\n".join(lines) + "\n"


def render_spillover_markdown(report: EvalReport) -> str:
    lines = ["# Classification accuracy across conditions when one condition is augmented"]
    blocks: list[str | None] = []
    for row in report.spillover:
        if row.augmented not in blocks:
            blocks.append(row.augmented)
    conditions = sorted({r.condition for r in report.spillover})
    by_key = {(r.augmented, r.condition, r.train_group, r.group): r for r in report.spillover}
    for augmented in blocks:
        lines.append("")
        lines.append(f"## {'Fitzpatrick images only' if augmented is None else 'augmented: ' + augmented}")
        lines.append("| FST | trained on | " + " | ".join(conditions) + " |")
        lines.append("| --- | --- |" + " --- |" * len(conditions))
        train_groups = sorted(
            {r.train_group for r in report.spillover}, key=GROUP_ORDER.index
        )
        for train_group in train_groups:
            for group in GROUP_ORDER:
                row = [by_key.get((augmented, c, train_group, group)) for c in conditions]
                if all(r is None for r in row):
                    continue
                rendered = [
                    (EMPTY_CELL if r is None else f"{_fmt_acc(r.accuracy)}, {r.n}") for r in row
                ]
                lines.append(f"| {group.value} | {train_group.value} | " + " | ".join(rendered) + " |")
    return "\n".join(lines) + "\n"


def _float_repr(value: float | None) -> str:
    return "" if value is None else repr(value)


def _float_parse(text: str) -> float | None:
    return None if text == "" else float(text)


def render_modes_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["condition", "train_group", "test_group", "mode", "n", "correct", "accuracy", "ci_low", "ci_high"]
    )
    for c in report.cells:
        writer.writerow(
            [
                c.condition,
                c.train_group.value,
                c.group.value,
                c.mode,
                c.n,
                c.correct,
                _float_repr(c.accuracy),
                _float_repr(c.ci_low),
                _float_repr(c.ci_high),
            ]
        )
    return buf.getvalue()


def render_dose_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["condition", "train_group", "test_group", "dose", "n", "correct", "accuracy"])
    for r in report.dose_rows:
        writer.writerow(
            [r.condition, r.train_group.value, r.group.value, r.dose, r.n, r.correct, _float_repr(r.accuracy)]
        )
    return buf.getvalue()


def render_spillover_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["augmented", "condition", "train_group", "test_group", "n", "correct", "accuracy"])
    for r in report.spillover:
        writer.writerow(
            [
                r.augmented or "",
                r.condition,
                r.train_group.value,
                r.group.value,
                r.n,
                r.correct,
                _float_repr(r.accuracy),
            ]
        )
    return buf.getvalue()


def render_tables(report: EvalReport, format: str) -> dict[str, str]:
    """One document per table. `markdown` uses the published notation;
    `csv` is lossless (full float precision)."""
    if format == "markdown":
        return {
            "modes": render_modes_markdown(report),
            "dose": render_dose_markdown(report),
            "spillover": render_spillover_markdown(report),
        }
    if format == "csv":
        return {
            "modes": render_modes_csv(report),
            "dose": render_dose_csv(report),
            "spillover": render_spillover_csv(report),
        }
    raise ValueError(f"unknown format {format!r}")


def parse_report_csv(documents: Mapping[str, str]) -> EvalReport:
    """Inverse of render_tables(report, 'csv')."""
    cells = []
    for row in csv.DictReader(io.StringIO(documents["modes"])):
        cells.append(
            EvalCell(
                condition=row["condition"],
                train_group=FSTGroup(row["train_group"]),
                group=FSTGroup(row["test_group"]),
                mode=row["mode"],
                n=int(row["n"]),
                correct=int(row["correct"]),
                accuracy=_float_parse(row["accuracy"]),
                ci_low=_float_parse(row["ci_low"]),
                ci_high=_float_parse(row["ci_high"]),
            )
        )
    dose_rows = []
    for row in csv.DictReader(io.StringIO(documents["dose"])):
        dose_rows.append(
            DoseRow(
                condition=row["condition"],
                train_group=FSTGroup(row["train_group"]),
                group=FSTGroup(row["test_group"]),
                dose=int(row["dose"]),
                n=int(row["n"]),
                correct=int(row["correct"]),
                accuracy=_float_parse(row["accuracy"]),
            )
        )
    spillover = []
    for row in csv.DictReader(io.StringIO(documents["spillover"])):
        spillover.append(
            SpilloverRow(
                augmented=row["augmented"] or None,
                condition=row["condition"],
                train_group=FSTGroup(row["train_group"]),
                group=FSTGroup(row["test_group"]),
                n=int(row["n"]),
                correct=int(row["correct"]),
                accuracy=_float_parse(row["accuracy"]),
            )
        )
    return EvalReport(cells=tuple(cells), dose_rows=tuple(dose_rows), spillover=tuple(spillover))


def report_to_json_dict(report: EvalReport, config_digest: str | None = None) -> dict:
    doc = {
        "cells": [
            {
                "condition": c.condition,
                "train_group": c.train_group.value,
                "test_group": c.group.value,
                "mode": c.mode,
                "n": c.n,
                "correct": c.correct,
                "accuracy": c.accuracy,
                "ci_low": c.ci_low,
                "ci_high": c.ci_high,
            }
            for c in report.cells
        ],
        "dose_rows": [
            {
                "condition": r.condition,
                "train_group": r.train_group.value,
                "test_group": r.group.value,
                "dose": r.dose,
                "n": r.n,
                "correct": r.correct,
                "accuracy": r.accuracy,
            }
            for r in report.dose_rows
        ],
        "spillover": [
            {
                "augmented": r.augmented,
                "condition": r.condition,
                "train_group": r.train_group.value,
                "test_group": r.group.value,
                "n": r.n,
                "correct": r.correct,
                "accuracy": r.accuracy,
            }
            for r in report.spillover
        ],
    }
    if config_digest is not None:
        doc["config_digest"] = config_digest
    return doc


def save_report(report: EvalReport, directory: str | Path, config_digest: str | None = None) -> list[Path]:
    """Write report.json plus one markdown and one csv document per table."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    json_path = directory / "report.json"
    json_path.write_text(
        json.dumps(report_to_json_dict(report, config_digest), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written.append(json_path)
    for fmt, suffix in (("markdown", "md"), ("csv", "csv")):
        for name, doc in render_tables(report, fmt).items():
            path = directory / f"report.{name}.{suffix}"
            path.write_text(doc, encoding="utf-8")
            written.append(path)
    return written
