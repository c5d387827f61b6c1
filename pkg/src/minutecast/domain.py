"""Shared data model: activity catalog, case logs, contexts, and validation.

Everything here is immutable after construction so validated objects can be
shared freely across threads. Activity label ids are 0-based catalog indices;
embedding id 0 is reserved for the PAD token, so embedding ids are
``label_id + 1``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

PAD_ID = 0

# Trailing token every categorical vocabulary must end with.
MISSING = "missing"

STATIC_NUMERIC = ("age", "gcs", "ais", "heart_rate", "systolic_bp")
DYNAMIC_NUMERIC = (
    "heart_rate",
    "respiratory_rate",
    "systolic_bp",
    "diastolic_bp",
    "oxygen_saturation",
)


class CaseValidationError(ValueError):
    """A case log violates an invariant (reports the first violation found)."""


@dataclass(frozen=True)
class ActivityCatalog:
    """Ordered activity names. Ordering is fixed for the life of a model."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise ValueError("catalog must contain at least one activity")
        seen = set()
        for name in self.labels:
            if not name:
                raise ValueError("activity names must be non-empty")
            if name in seen:
                raise ValueError(f"duplicate activity name: {name!r}")
            seen.add(name)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.labels)})

    @property
    def n(self) -> int:
        return len(self.labels)

    def label_index(self, name: str) -> int | None:
        """0-based catalog index of name, or None if unknown."""
        return self._index.get(name)

    def embedding_id(self, name: str) -> int | None:
        idx = self.label_index(name)
        return None if idx is None else idx + 1

    def content_hash(self) -> str:
        payload = json.dumps(list(self.labels), separators=(",", ":")).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class ActivityEvent:
    label_id: int
    start_s: int
    end_s: int


@dataclass(frozen=True)
class StaticContext:
    """Arrival-time patient record. Any field may be missing (None)."""

    age: float | None = None
    gcs: float | None = None
    ais: float | None = None
    heart_rate: float | None = None
    systolic_bp: float | None = None
    injury_type: str | None = None

    def numeric(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class DynamicContextRecord:
    """One intermittent vitals reading, t_s seconds after arrival."""

    t_s: int
    heart_rate: float | None = None
    respiratory_rate: float | None = None
    systolic_bp: float | None = None
    diastolic_bp: float | None = None
    oxygen_saturation: float | None = None
    fio2: str | None = None

    def numeric(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass(frozen=True)
class CaseLog:
    case_id: str
    static: StaticContext
    vitals: tuple[DynamicContextRecord, ...]
    events: tuple[ActivityEvent, ...]
    duration_s: int

    @property
    def n_minutes(self) -> int:
        return math.ceil(self.duration_s / 60)


def validate_case(case: CaseLog, catalog: ActivityCatalog) -> CaseLog:
    """Check all invariants; returns the case with vitals stably sorted by t_s.

    Raises CaseValidationError naming the first violated invariant.
    """
    if case.duration_s <= 0:
        raise CaseValidationError(f"{case.case_id}: duration_s must be > 0")
    for ev in case.events:
        if not 0 <= ev.label_id < catalog.n:
            raise CaseValidationError(
                f"{case.case_id}: unknown label id {ev.label_id}"
            )
        if ev.start_s < 0:
            raise CaseValidationError(f"{case.case_id}: negative event time")
        if ev.end_s < ev.start_s:
            raise CaseValidationError(
                f"{case.case_id}: event interval inverted "
                f"({catalog.labels[ev.label_id]} {ev.start_s}..{ev.end_s})"
            )
        if ev.end_s > case.duration_s:
            raise CaseValidationError(
                f"{case.case_id}: event beyond case duration "
                f"({catalog.labels[ev.label_id]} ends {ev.end_s} > {case.duration_s})"
            )
    for rec in case.vitals:
        if rec.t_s < 0:
            raise CaseValidationError(f"{case.case_id}: negative vitals time")
        for name in DYNAMIC_NUMERIC:
            v = rec.numeric(name)
            if v is not None and not math.isfinite(v):
                raise CaseValidationError(
                    f"{case.case_id}: non-finite vitals value {name}"
                )
    for name in STATIC_NUMERIC:
        v = case.static.numeric(name)
        if v is not None and not math.isfinite(v):
            raise CaseValidationError(f"{case.case_id}: non-finite static value {name}")
    vitals = tuple(sorted(case.vitals, key=lambda r: r.t_s))
    if vitals != case.vitals:
        return replace(case, vitals=vitals)
    return case


@dataclass(frozen=True)
class Manifest:
    """Dataset manifest: catalog plus the declared feature layout.

    Each categorical vocabulary carries an explicit trailing ``missing`` token
    so one-hot layouts are deterministic.
    """

    catalog: ActivityCatalog
    vocabularies: dict[str, tuple[str, ...]] = field(default_factory=dict)
    static_numeric: tuple[str, ...] = STATIC_NUMERIC
    dynamic_numeric: tuple[str, ...] = DYNAMIC_NUMERIC
    static_categorical: tuple[str, ...] = ("injury_type",)
    dynamic_categorical: tuple[str, ...] = ("fio2",)

    def __post_init__(self):
        for name in self.static_categorical + self.dynamic_categorical:
            vocab = self.vocabularies.get(name)
            if not vocab:
                raise ValueError(f"manifest missing vocabulary for {name!r}")
            if vocab[-1] != MISSING:
                raise ValueError(f"vocabulary {name!r} must end with {MISSING!r}")
            if len(set(vocab)) != len(vocab):
                raise ValueError(f"vocabulary {name!r} has duplicate values")

    @property
    def static_width(self) -> int:
        return len(self.static_numeric) + sum(
            len(self.vocabularies[c]) for c in self.static_categorical
        )

    @property
    def dynamic_width(self) -> int:
        return len(self.dynamic_numeric) + sum(
            len(self.vocabularies[c]) for c in self.dynamic_categorical
        )
