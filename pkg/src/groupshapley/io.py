"""Utility and constraint file formats, and importance-table rendering."""

from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coalition import GroupPartition, UtilityTable, mask_key, parse_mask_key
from .errors import DomainError, GroupShapleyError
from .partial import ConstraintRow, LinearConstraintSet, PartialInferenceResult
from .shapley import ShapleyResult


class SchemaError(GroupShapleyError):
    """An input document does not follow its file format."""


def data_path(*parts: str):
    """Path of a file shipped under the package ``data`` directory."""
    return resources.files("groupshapley").joinpath("data", *parts)


def format_float(x: float) -> str:
    """Shortest text that reads back to exactly ``x`` (17 significant digits)."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("cannot serialize a non-finite number")
    # -0.0 would read back as 0
    return format(x + 0.0, ".17g")


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(f"{where}: number is not finite")
    return float(value)


# ---------------------------------------------------------------------------
# utility files


def utility_table_from_doc(doc) -> UtilityTable:
    if not isinstance(doc, dict):
        raise SchemaError("utility file must be a JSON object")
    for key in ("groups", "values", "grand"):
        if key not in doc:
            raise SchemaError(f"utility file is missing {key!r}")
    groups = doc["groups"]
    if not isinstance(groups, list) or not all(isinstance(g, str) for g in groups):
        raise SchemaError("'groups' must be an array of strings")
    try:
        partition = GroupPartition(tuple(groups))
    except GroupShapleyError as exc:
        raise SchemaError(str(exc)) from None
    if not isinstance(doc["values"], dict):
        raise SchemaError("'values' must be an object")
    values = {}
    for key, v in doc["values"].items():
        try:
            mask = parse_mask_key(key, partition.n_groups)
        except DomainError as exc:
            raise SchemaError(str(exc)) from None
        if mask in values:
            raise SchemaError(f"coalition {key!r} appears twice")
        values[mask] = _number(v, f"values[{key!r}]")
    return UtilityTable(partition, values, _number(doc["grand"], "grand"))


def read_utilities(path) -> UtilityTable:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return utility_table_from_doc(doc)


def dumps_utilities(table: UtilityTable) -> str:
    groups = ", ".join(json.dumps(g, ensure_ascii=False) for g in table.partition.groups)
    lines = ["{", f'  "groups": [{groups}],']
    items = [f'    "{mask_key(m)}": {format_float(v)}' for m, v in table.entries.items()]
    if items:
        lines.append('  "values": {')
        lines.append(",\n".join(items))
        lines.append("  },")
    else:
        lines.append('  "values": {},')
    lines.append(f'  "grand": {format_float(table.grand)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_utilities(table: UtilityTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_utilities(table))


# ---------------------------------------------------------------------------
# constraint files


def constraints_from_doc(doc, n_groups: int) -> LinearConstraintSet:
    if not isinstance(doc, list):
        raise SchemaError("constraint file must be a JSON array of rows")
    rows = []
    for r, row in enumerate(doc):
        if not isinstance(row, dict) or "terms" not in row or "rhs" not in row:
            raise SchemaError(f"row {r}: expected an object with 'terms' and 'rhs'")
        if not isinstance(row["terms"], list):
            raise SchemaError(f"row {r}: 'terms' must be an array")
        terms = []
        for t, term in enumerate(row["terms"]):
            if not isinstance(term, dict) or "coalition" not in term or "coef" not in term:
                raise SchemaError(f"row {r} term {t}: expected 'coalition' and 'coef'")
            try:
                mask = parse_mask_key(term["coalition"], n_groups)
            except DomainError as exc:
                raise SchemaError(f"row {r} term {t}: {exc}") from None
            terms.append((mask, _number(term["coef"], f"row {r} term {t} coef")))
        rows.append(ConstraintRow(tuple(terms), _number(row["rhs"], f"row {r} rhs")))
    return LinearConstraintSet(n_groups, tuple(rows))


def read_constraints(path, n_groups: int) -> LinearConstraintSet:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return constraints_from_doc(doc, n_groups)


def dumps_constraints(constraints: LinearConstraintSet) -> str:
    rows = []
    for row in constraints.rows:
        terms = ", ".join(
            f'{{"coalition": "{mask_key(m)}", "coef": {format_float(c)}}}' for m, c in row.terms
        )
        rows.append(f'  {{"terms": [{terms}], "rhs": {format_float(row.rhs)}}}')
    if not rows:
        return "[]\n"
    return "[\n" + ",\n".join(rows) + "\n]\n"


def write_constraints(constraints: LinearConstraintSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_constraints(constraints))


# ---------------------------------------------------------------------------
# tables

VALUE_DIGITS = 6
SHARE_DIGITS = 4


@dataclass(frozen=True)
class ImportanceTable:
    labels: tuple[str, ...]
    values: np.ndarray
    shares: np.ndarray
    grand: float
    method: str

    @classmethod
    def from_result(cls, result: ShapleyResult) -> "ImportanceTable":
        return cls(result.partition.groups, result.values, result.shares, result.grand, result.method)

    def _rows(self):
        def share(s):
            return "nan" if math.isnan(s) else f"{s:.{SHARE_DIGITS}f}"

        rows = [(lab, f"{v:.{VALUE_DIGITS}f}", share(s)) for lab, v, s in zip(self.labels, self.values, self.shares)]
        total_share = share(float(np.sum(self.shares)))
        rows.append(("total", f"{self.grand:.{VALUE_DIGITS}f}", total_share))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("group", "value", "share"))
        w.writerows(self._rows())
        buf.write(f"# method: {self.method}\n")
        return buf.getvalue()

    def to_markdown(self) -> str:
        rows = [("group", "value", "share")] + self._rows()
        w0, w1, w2 = (max(len(r[i]) for r in rows) for i in range(3))
        lines = [f"| {rows[0][0]:<{w0}} | {rows[0][1]:>{w1}} | {rows[0][2]:>{w2}} |"]
        lines.append(f"|{'-' * (w0 + 2)}|{'-' * (w1 + 1)}:|{'-' * (w2 + 1)}:|")
        lines += [f"| {lab:<{w0}} | {v:>{w1}} | {s:>{w2}} |" for lab, v, s in rows[1:]]
        lines.append("")
        lines.append(f"grand value g(P) = {self.grand:.{VALUE_DIGITS}f}; method: {self.method}")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_markdown()


def _fmt_bound(x: float, status: str) -> str:
    if status == "optimal":
        return f"{x:.{VALUE_DIGITS}f}"
    return status


def bounds_table(name: str, labels: Sequence[str], result: PartialInferenceResult, fmt: str) -> str:
    """SLB / SUB / SMNS rows for one aggregate, one column per group."""
    header = ("aggregate", "bound") + tuple(labels)
    if not result.feasible:
        rows = [(name, "infeasible") + ("",) * len(labels)]
    else:
        smns = result.smns.values
        rows = [
            (name, "SLB") + tuple(_fmt_bound(x, s) for x, s in zip(result.lower, result.lower_status)),
            (name, "SUB") + tuple(_fmt_bound(x, s) for x, s in zip(result.upper, result.upper_status)),
            (name, "SMNS") + tuple(f"{x:.{VALUE_DIGITS}f}" for x in smns),
        ]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"
