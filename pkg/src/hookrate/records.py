"""Longline set records: validation, ingestion, pooling and serialization.

The atomic observation is one longline set: how many hooks went out, and in
what condition each came back (baited, with target catch, with non-target
catch, empty, or not returned at all). Files are plain UTF-8 CSV, one row
per set, or optionally one row per hook with a condition code.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, TextIO

from .errors import DataValidationError, SoakSpreadError

SET_COLUMNS = [
    "set_id",
    "n_hooks",
    "n_baited",
    "n_target",
    "n_nontarget",
    "n_empty",
    "n_unknown",
    "soak_minutes",
]
OPTIONAL_COLUMNS = ["year", "area"]
HOOK_CONDITIONS = {"B", "T", "NT", "E", "U"}

DEFAULT_SOAK_TOLERANCE = 0.05


@dataclass(frozen=True)
class SetRecord:
    """Hook-outcome counts for one longline set.

    The counts must account for every hook deployed:
    ``n_baited + n_target + n_nontarget + n_empty + n_unknown == n_hooks``.
    Hooks that did not return (``n_unknown``) carry no outcome information
    and are excluded from the effective hook count used by estimators.
    """

    set_id: str
    n_hooks: int
    n_baited: int
    n_target: int
    n_nontarget: int
    n_empty: int
    soak_minutes: float
    n_unknown: int = 0
    year: int | None = None
    area: str | None = None

    def __post_init__(self):
        counts = {
            "n_hooks": self.n_hooks,
            "n_baited": self.n_baited,
            "n_target": self.n_target,
            "n_nontarget": self.n_nontarget,
            "n_empty": self.n_empty,
            "n_unknown": self.n_unknown,
        }
        for name, value in counts.items():
            if value < 0:
                raise DataValidationError(f"{name} is negative ({value})", set_id=self.set_id)
        if self.soak_minutes <= 0:
            raise DataValidationError(
                f"soak_minutes must be positive (got {self.soak_minutes})", set_id=self.set_id
            )
        parts = self.n_baited + self.n_target + self.n_nontarget + self.n_empty + self.n_unknown
        if parts != self.n_hooks:
            raise DataValidationError(
                f"hook conditions sum to {parts} but n_hooks is {self.n_hooks}",
                set_id=self.set_id,
            )

    @property
    def n_effective(self) -> int:
        """Hooks with a known outcome (deployed minus not-returned)."""
        return self.n_hooks - self.n_unknown


@dataclass(frozen=True)
class PooledCounts:
    """Totals over sets sharing a soak time; sufficient for the closed forms."""

    n_hooks_total: int
    n_baited_total: int
    n_target_total: int
    n_nontarget_total: int
    n_empty_total: int
    soak_minutes: float
    n_sets: int

    def __post_init__(self):
        parts = (
            self.n_baited_total
            + self.n_target_total
            + self.n_nontarget_total
            + self.n_empty_total
        )
        if parts != self.n_hooks_total:
            raise DataValidationError(
                f"pooled conditions sum to {parts} but n_hooks_total is {self.n_hooks_total}"
            )
        if self.soak_minutes <= 0 or self.n_sets < 1:
            raise DataValidationError("pooled counts need a positive soak time and >= 1 set")

    @property
    def n_unbaited_total(self) -> int:
        return self.n_hooks_total - self.n_baited_total


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of set records, optionally tagged by year/area."""

    records: tuple[SetRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: dict[tuple, str] = {}
        for rec in self.records:
            key = (rec.year, rec.area, rec.set_id)
            if key in seen:
                raise DataValidationError(
                    "duplicate set_id within a (year, area) group", set_id=rec.set_id
                )
            seen[key] = rec.set_id

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def soak_minutes(self) -> list[float]:
        return [r.soak_minutes for r in self.records]

    def groups(self) -> dict[tuple[int | None, str | None], "Dataset"]:
        """Split into per-(year, area) datasets, preserving record order."""
        out: dict[tuple[int | None, str | None], list[SetRecord]] = {}
        for rec in self.records:
            out.setdefault((rec.year, rec.area), []).append(rec)
        return {k: Dataset(tuple(v)) for k, v in out.items()}

    def filtered(self, year=None, area=None) -> "Dataset":
        recs = [
            r
            for r in self.records
            if (year is None or r.year == year) and (area is None or r.area == area)
        ]
        return Dataset(tuple(recs))

    def merged_label(self, area: str) -> "Dataset":
        """Relabel every record's area, e.g. when pooling survey areas."""
        return Dataset(tuple(replace(r, area=area) for r in self.records))


def _parse_int(value: str, column: str, row: int) -> int:
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"column {column!r} is not an integer: {value!r}", row=row)
    return n


def _parse_float(value: str, column: str, row: int) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DataValidationError(f"column {column!r} is not numeric: {value!r}", row=row)


def parse_records(source: TextIO | str | Iterable[str]) -> Dataset:
    """Read one-row-per-set CSV into a validated :class:`Dataset`.

    Required columns: ``set_id, n_hooks, n_baited, n_target, n_nontarget,
    n_empty, soak_minutes``. ``n_unknown`` defaults to 0 when absent;
    ``year`` and ``area`` are optional. Errors carry the offending row
    number and set id.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise DataValidationError("empty file: no header row")
    header = [h.strip() for h in reader.fieldnames]
    required = [c for c in SET_COLUMNS if c != "n_unknown"]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataValidationError(f"missing required column(s): {', '.join(missing)}")

    records = []
    for row_no, row in enumerate(reader, start=2):
        set_id = (row.get("set_id") or "").strip()
        if not set_id:
            raise DataValidationError("empty set_id", row=row_no)
        try:
            rec = SetRecord(
                set_id=set_id,
                n_hooks=_parse_int(row["n_hooks"], "n_hooks", row_no),
                n_baited=_parse_int(row["n_baited"], "n_baited", row_no),
                n_target=_parse_int(row["n_target"], "n_target", row_no),
                n_nontarget=_parse_int(row["n_nontarget"], "n_nontarget", row_no),
                n_empty=_parse_int(row["n_empty"], "n_empty", row_no),
                n_unknown=_parse_int(row.get("n_unknown") or "0", "n_unknown", row_no),
                soak_minutes=_parse_float(row["soak_minutes"], "soak_minutes", row_no),
                year=int(row["year"]) if row.get("year") not in (None, "") else None,
                area=(row.get("area") or "").strip() or None,
            )
        except DataValidationError as err:
            if err.row is None:
                raise DataValidationError(str(err), row=row_no) from None
            raise
        records.append(rec)
    if not records:
        raise DataValidationError("file contains a header but no data rows")
    return Dataset(tuple(records))


def parse_hook_records(source: TextIO | str) -> Dataset:
    """Read one-row-per-hook CSV and reduce it to set records by counting.

    Expected columns: ``set_id, hook_index, condition, soak_minutes`` with
    condition codes B (baited), T (target catch), NT (non-target catch),
    E (empty), U (not returned). Soak times must agree within a set.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise DataValidationError("empty file: no header row")
    needed = ["set_id", "hook_index", "condition", "soak_minutes"]
    missing = [c for c in needed if c not in reader.fieldnames]
    if missing:
        raise DataValidationError(f"missing required column(s): {', '.join(missing)}")

    counts: dict[str, dict[str, int]] = {}
    soaks: dict[str, float] = {}
    order: list[str] = []
    for row_no, row in enumerate(reader, start=2):
        set_id = (row.get("set_id") or "").strip()
        cond = (row.get("condition") or "").strip().upper()
        if cond not in HOOK_CONDITIONS:
            raise DataValidationError(f"unknown hook condition {cond!r}", row=row_no)
        soak = _parse_float(row["soak_minutes"], "soak_minutes", row_no)
        if set_id not in counts:
            counts[set_id] = {c: 0 for c in HOOK_CONDITIONS}
            soaks[set_id] = soak
            order.append(set_id)
        elif soaks[set_id] != soak:
            raise DataValidationError(
                "soak_minutes differs between hooks of the same set", set_id=set_id, row=row_no
            )
        counts[set_id][cond] += 1
    if not order:
        raise DataValidationError("file contains a header but no data rows")

    records = []
    for set_id in order:
        c = counts[set_id]
        n_hooks = sum(c.values())
        records.append(
            SetRecord(
                set_id=set_id,
                n_hooks=n_hooks,
                n_baited=c["B"],
                n_target=c["T"],
                n_nontarget=c["NT"],
                n_empty=c["E"],
                n_unknown=c["U"],
                soak_minutes=soaks[set_id],
            )
        )
    return Dataset(tuple(records))


def write_records(dataset: Dataset, sink: TextIO) -> None:
    """Serialize a dataset back to the one-row-per-set CSV format."""
    has_meta = any(r.year is not None or r.area is not None for r in dataset)
    columns = SET_COLUMNS + (OPTIONAL_COLUMNS if has_meta else [])
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(columns)
    for r in dataset:
        row = [
            r.set_id,
            r.n_hooks,
            r.n_baited,
            r.n_target,
            r.n_nontarget,
            r.n_empty,
            r.n_unknown,
            _format_soak(r.soak_minutes),
        ]
        if has_meta:
            row += [r.year if r.year is not None else "", r.area or ""]
        writer.writerow(row)


def _format_soak(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def pool(dataset: Dataset, soak_tolerance: float = DEFAULT_SOAK_TOLERANCE) -> PooledCounts:
    """Sum counts over sets whose soak times agree within a relative tolerance.

    The pooled soak time is the mean of the member soak times. Hooks that
    never returned are dropped from each set's hook count before summing.
    Raises :class:`SoakSpreadError` when the spread exceeds ``soak_tolerance``,
    in which case the caller should fall back to the variable-soak numeric fit.
    """
    if len(dataset) == 0:
        raise DataValidationError("cannot pool an empty dataset")
    soaks = dataset.soak_minutes
    mean_soak = sum(soaks) / len(soaks)
    spread = max(abs(s - mean_soak) for s in soaks) / mean_soak
    if spread > soak_tolerance:
        raise SoakSpreadError(
            f"soak-time spread {spread:.3f} exceeds tolerance {soak_tolerance:.3f}; "
            "use the variable-soak numeric fit"
        )
    return PooledCounts(
        n_hooks_total=sum(r.n_effective for r in dataset),
        n_baited_total=sum(r.n_baited for r in dataset),
        n_target_total=sum(r.n_target for r in dataset),
        n_nontarget_total=sum(r.n_nontarget for r in dataset),
        n_empty_total=sum(r.n_empty for r in dataset),
        soak_minutes=mean_soak,
        n_sets=len(dataset),
    )
