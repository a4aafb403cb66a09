"""Domain types, CSV ingestion, and categorical-to-design encoding.

A competing-risks record is an observed time ``U = min(T, C)``, an event
code (0 censored, 1 event of interest, 2 competing event), and a covariate
vector. Categorical covariates are encoded with reference-cell coding: a
variable with m levels contributes m-1 design columns, and the reference
level maps to all zeros.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np

EVENT_CENSORED = 0
EVENT_INTEREST = 1
EVENT_COMPETING = 2
VALID_EVENT_CODES = (EVENT_CENSORED, EVENT_INTEREST, EVENT_COMPETING)


class SchemaError(ValueError):
    """Covariate schema is invalid or does not match the data."""


class DataError(ValueError):
    """A data row violates the expected format. Carries the 1-based row index."""

    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


@dataclass(frozen=True)
class SchemaEntry:
    """One covariate: numeric, or categorical with ordered levels and a reference."""

    name: str
    kind: str
    levels: tuple[str, ...] = ()
    reference: str | None = None

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaError(f"{self.name}: kind must be 'numeric' or 'categorical'")
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.kind == "categorical":
            if len(self.levels) < 2:
                raise SchemaError(f"{self.name}: categorical entries need >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"{self.name}: duplicate levels")
            if self.reference is None or self.reference not in self.levels:
                raise SchemaError(f"{self.name}: reference level must be one of the levels")
        elif self.levels or self.reference is not None:
            raise SchemaError(f"{self.name}: numeric entries take no levels or reference")

    @property
    def design_columns(self) -> tuple[str, ...]:
        if self.kind == "numeric":
            return (self.name,)
        return tuple(f"{self.name}={lv}" for lv in self.levels if lv != self.reference)

    def encode(self, value) -> list[float]:
        if self.kind == "numeric":
            try:
                out = float(value)
            except (TypeError, ValueError):
                raise SchemaError(f"{self.name}: expected a number, got {value!r}") from None
            if not np.isfinite(out):
                raise SchemaError(f"{self.name}: non-finite value {value!r}")
            return [out]
        level = str(value)
        if level not in self.levels:
            raise SchemaError(
                f"{self.name}: unknown level {level!r} (expected one of {list(self.levels)})"
            )
        return [1.0 if lv == level else 0.0 for lv in self.levels if lv != self.reference]

    def decode(self, block: Sequence[float]):
        """Inverse of encode for one entry's design-column block."""
        if self.kind == "numeric":
            return block[0]
        hot = [i for i, x in enumerate(block) if x != 0.0]
        non_ref = [lv for lv in self.levels if lv != self.reference]
        if not hot:
            return self.reference
        if len(hot) == 1 and block[hot[0]] == 1.0:
            return non_ref[hot[0]]
        raise SchemaError(f"{self.name}: design block {list(block)} is not a valid one-hot code")


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate entries plus the design-column names they induce."""

    entries: tuple[SchemaEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = self.design_names
        if len(set(names)) != len(names):
            raise SchemaError("design column names are not unique")
        entry_names = [e.name for e in self.entries]
        if len(set(entry_names)) != len(entry_names):
            raise SchemaError("entry names are not unique")

    @property
    def design_names(self) -> tuple[str, ...]:
        out: list[str] = []
        for entry in self.entries:
            out.extend(entry.design_columns)
        return tuple(out)

    @property
    def n_design_columns(self) -> int:
        return len(self.design_names)

    def encode(self, values: Mapping[str, object]) -> np.ndarray:
        """Encode named covariate values into a length-p design vector."""
        row: list[float] = []
        for entry in self.entries:
            if entry.name not in values:
                raise SchemaError(f"missing covariate {entry.name!r}")
            row.extend(entry.encode(values[entry.name]))
        return np.asarray(row, dtype=float)

    def decode(self, design_row: Sequence[float]) -> dict[str, object]:
        """Recover named covariate values from a design vector."""
        values: dict[str, object] = {}
        pos = 0
        for entry in self.entries:
            width = len(entry.design_columns)
            values[entry.name] = entry.decode(list(design_row[pos : pos + width]))
            pos += width
        return values

    def to_json_dict(self) -> dict:
        entries = []
        for e in self.entries:
            if e.kind == "numeric":
                entries.append({"name": e.name, "kind": "numeric"})
            else:
                entries.append(
                    {
                        "name": e.name,
                        "kind": "categorical",
                        "levels": list(e.levels),
                        "reference": e.reference,
                    }
                )
        return {"entries": entries}

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "CovariateSchema":
        try:
            raw_entries = doc["entries"]
        except (KeyError, TypeError):
            raise SchemaError("schema document must contain an 'entries' list") from None
        entries = []
        for raw in raw_entries:
            entries.append(
                SchemaEntry(
                    name=raw["name"],
                    kind=raw.get("kind", "numeric"),
                    levels=tuple(raw.get("levels", ())),
                    reference=raw.get("reference"),
                )
            )
        return cls(entries=tuple(entries))

    @classmethod
    def numeric(cls, names: Iterable[str]) -> "CovariateSchema":
        """Schema of purely numeric covariates."""
        return cls(entries=tuple(SchemaEntry(name=n, kind="numeric") for n in names))


def load_schema(source: Union[str, IO]) -> CovariateSchema:
    """Read a covariate schema from a JSON file path or open stream."""
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    return CovariateSchema.from_json_dict(doc)


@dataclass(frozen=True, eq=False)
class SubjectRecord:
    """One subject: observed time, event code, and encoded covariate vector."""

    id: str
    observed_time: float
    event_code: int
    covariates: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.observed_time) or self.observed_time < 0:
            raise DataError(0, f"observed_time must be finite and >= 0, got {self.observed_time}")
        if self.event_code not in VALID_EVENT_CODES:
            raise DataError(0, f"event_code must be in {VALID_EVENT_CODES}, got {self.event_code}")


@dataclass(frozen=True, eq=False)
class CompetingRisksDataset:
    """Columnar competing-risks data: times, event codes, design matrix, schema.

    All arrays are immutable after construction; instances are safe to share
    across threads.
    """

    times: np.ndarray
    events: np.ndarray
    covariates: np.ndarray
    schema: CovariateSchema
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        events = np.ascontiguousarray(self.events, dtype=np.int64)
        cov = np.ascontiguousarray(self.covariates, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a non-empty 1-d array")
        n = times.size
        if events.shape != (n,):
            raise ValueError("events must match times in length")
        if cov.ndim != 2 or cov.shape[0] != n:
            raise ValueError("covariates must be a 2-d array with one row per record")
        if cov.shape[1] != self.schema.n_design_columns:
            raise ValueError(
                f"covariate width {cov.shape[1]} does not match schema "
                f"({self.schema.n_design_columns} design columns)"
            )
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ValueError("times must be finite and >= 0")
        if not np.all(np.isin(events, VALID_EVENT_CODES)):
            raise ValueError(f"event codes must be in {VALID_EVENT_CODES}")
        ids = tuple(self.ids) if self.ids else tuple(str(i + 1) for i in range(n))
        if len(ids) != n:
            raise ValueError("ids must match times in length")
        for arr in (times, events, cov):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "ids", ids)
        if not np.any(events == EVENT_INTEREST):
            warnings.warn(
                "dataset contains no event-of-interest records; "
                "cause-1 summaries will be degenerate",
                UserWarning,
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def record(self, i: int) -> SubjectRecord:
        return SubjectRecord(
            id=self.ids[i],
            observed_time=float(self.times[i]),
            event_code=int(self.events[i]),
            covariates=self.covariates[i],
        )

    @property
    def records(self) -> list[SubjectRecord]:
        return [self.record(i) for i in range(self.n)]


def _open_text(source: Union[str, bytes, IO], mode: str = "r"):
    if isinstance(source, (str,)):
        return open(source, mode, encoding="utf-8", newline=""), True
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    if hasattr(source, "read"):
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    raise TypeError(f"unsupported source type {type(source)!r}")


def load_dataset(source: Union[str, bytes, IO], schema: CovariateSchema) -> CompetingRisksDataset:
    """Parse competing-risks records from CSV.

    The CSV must carry a header with ``time`` and ``status`` columns plus one
    column per schema entry; an optional ``id`` column names the subjects.
    Rows are kept in file order. Errors identify the offending 1-based data
    row.
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = ["time", "status"] + [e.name for e in schema.entries]
        for col in required:
            if col not in header:
                raise SchemaError(f"missing required column {col!r}")
        times: list[float] = []
        events: list[int] = []
        rows: list[np.ndarray] = []
        ids: list[str] = []
        for i, raw in enumerate(reader, start=1):
            try:
                t = float(raw["time"])
            except (TypeError, ValueError):
                raise DataError(i, f"time {raw.get('time')!r} is not a number") from None
            if not np.isfinite(t) or t < 0:
                raise DataError(i, f"time must be finite and >= 0, got {raw['time']!r}")
            try:
                status = int(raw["status"])
            except (TypeError, ValueError):
                raise DataError(i, f"status {raw.get('status')!r} is not an integer") from None
            if status not in VALID_EVENT_CODES:
                raise DataError(i, f"status must be in {VALID_EVENT_CODES}, got {status}")
            try:
                row = schema.encode(raw)
            except SchemaError as exc:
                raise DataError(i, str(exc)) from None
            times.append(t)
            events.append(status)
            rows.append(row)
            ids.append(raw.get("id") or str(i))
        if not times:
            raise SchemaError("CSV contains no data rows")
        return CompetingRisksDataset(
            times=np.asarray(times),
            events=np.asarray(events),
            covariates=np.vstack(rows),
            schema=schema,
            ids=tuple(ids),
        )
    finally:
        if owned:
            fh.close()


def write_dataset(dataset: CompetingRisksDataset, sink: Union[str, IO]) -> None:
    """Write a dataset back to CSV in the load_dataset column layout."""
    fh, owned = (open(sink, "w", encoding="utf-8", newline=""), True) if isinstance(sink, str) else (sink, False)
    try:
        writer = csv.writer(fh)
        writer.writerow(["id", "time", "status"] + [e.name for e in dataset.schema.entries])
        for i in range(dataset.n):
            values = dataset.schema.decode(dataset.covariates[i])
            writer.writerow(
                [dataset.ids[i], repr(float(dataset.times[i])), int(dataset.events[i])]
                + [values[e.name] if e.kind == "categorical" else repr(float(values[e.name])) for e in dataset.schema.entries]
            )
    finally:
        if owned:
            fh.close()
