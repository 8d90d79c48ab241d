"""Age-group baselines, batch evaluation, trend association and table checking."""

from __future__ import annotations

import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import EVLError, InsufficientData, OutOfRange, OverlappingRanges
from .model import (
    AgeGroupBaseline,
    ElongationMode,
    ModelConfig,
    NearWorkObservation,
    OcularEvaluation,
    evaluate_observation,
)


class BaselineTable:
    """Sorted, non-overlapping age groups.

    Ranges are half-open ``[age_lo, age_hi)`` except the last, which also
    contains its upper end, so shared endpoints such as 10 in "8-10" and
    "10-12" resolve to the older group.
    """

    def __init__(self, rows: Iterable[AgeGroupBaseline]):
        rows = tuple(sorted(rows, key=lambda r: (r.age_lo, r.age_hi)))
        for prev, cur in zip(rows, rows[1:]):
            if cur.age_lo < prev.age_hi:
                raise OverlappingRanges(
                    f"age range {cur.label} overlaps {prev.label}")
        self.rows = rows

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, BaselineTable) and self.rows == other.rows

    def __repr__(self):
        return f"BaselineTable({list(self.rows)!r})"

    def lookup(self, age: float) -> AgeGroupBaseline:
        for i, row in enumerate(self.rows):
            last = i == len(self.rows) - 1
            if row.age_lo <= age < row.age_hi or (last and age == row.age_hi):
                return row
        raise OutOfRange(f"age {age} is not covered by any baseline group")


def builtin_baselines() -> BaselineTable:
    """The four published initialization rows (ages 8 to 16)."""
    return BaselineTable([
        AgeGroupBaseline(8, 10, al0=20.0, p0=6.0, m0=55.0, w0=48.0),
        AgeGroupBaseline(10, 12, al0=20.0, p0=5.0, m0=61.0, w0=52.0),
        AgeGroupBaseline(12, 14, al0=22.0, p0=3.0, m0=68.0, w0=51.0),
        AgeGroupBaseline(14, 16, al0=23.0, p0=5.0, m0=52.0, w0=47.0),
    ])


# --- batch evaluation -------------------------------------------------------

@dataclass(frozen=True)
class CohortRecord:
    subject_id: str
    age: float
    obs: NearWorkObservation


@dataclass(frozen=True)
class RecordError:
    subject_id: str
    index: int
    error: EVLError

    @property
    def kind(self) -> str:
        return type(self.error).__name__


@dataclass
class CohortResult:
    evaluations: list = field(default_factory=list)  # (subject_id, OcularEvaluation)
    errors: list = field(default_factory=list)  # RecordError

    def __iter__(self):
        return iter(self.evaluations)


def _evaluate_one(record: CohortRecord, table: BaselineTable, cfg: ModelConfig):
    try:
        return evaluate_observation(table.lookup(record.age), record.obs, cfg)
    except EVLError as exc:
        return exc


def evaluate_cohort(records: Sequence[CohortRecord], table: BaselineTable,
                    cfg: ModelConfig = ModelConfig(), workers: int = 1) -> CohortResult:
    """Evaluate every record; failures are collected instead of raised.

    Output order follows input order for any ``workers`` value.
    """
    if workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda r: _evaluate_one(r, table, cfg), records))
    else:
        outcomes = [_evaluate_one(r, table, cfg) for r in records]

    result = CohortResult()
    for i, (record, outcome) in enumerate(zip(records, outcomes)):
        if isinstance(outcome, EVLError):
            result.errors.append(RecordError(record.subject_id, i, outcome))
        else:
            result.evaluations.append((record.subject_id, outcome))
    return result


# --- trend association ------------------------------------------------------

def midranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the positions they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation (Pearson correlation of mid-ranks)."""
    if len(x) != len(y):
        raise ValueError("x and y must have the same length")
    if len(x) < 3:
        raise InsufficientData(f"need at least 3 pairs, got {len(x)}")
    rx, ry = midranks(x), midranks(y)
    mx, my = math.fsum(rx) / len(rx), math.fsum(ry) / len(ry)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = math.fsum((a - mx) ** 2 for a in rx)
    syy = math.fsum((b - my) ** 2 for b in ry)
    if sxx == 0 or syy == 0:
        raise InsufficientData("rank correlation undefined for a constant variable")
    rho = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


@dataclass(frozen=True)
class GroupSummary:
    count: int
    mean_o: float
    mean_ser: float
    rho: Optional[float]


@dataclass(frozen=True)
class TrendReport:
    n_pairs: int
    rho: float
    direction: int
    groups: dict

    @property
    def direction_label(self) -> str:
        return {1: "positive", -1: "negative", 0: "none"}[self.direction]


def trend_association(pairs: Sequence[tuple], groups: Optional[Sequence[str]] = None) -> TrendReport:
    """Rank association between the EVL ratio and measured SER.

    ``pairs`` holds ``(o, ser)`` tuples. ``groups`` optionally labels each
    pair (for instance with its age range) to get per-group summaries.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise InsufficientData(f"need at least 3 (O, SER) pairs, got {len(pairs)}")
    os_ = [float(p[0]) for p in pairs]
    sers = [float(p[1]) for p in pairs]
    rho = spearman(os_, sers)
    direction = (rho > 0) - (rho < 0)

    summaries = OrderedDict()
    if groups is not None:
        if len(groups) != len(pairs):
            raise ValueError("groups must label every pair")
        buckets = OrderedDict()
        for label, o, s in zip(groups, os_, sers):
            buckets.setdefault(label, []).append((o, s))
        for label, items in buckets.items():
            go, gs = [i[0] for i in items], [i[1] for i in items]
            try:
                grho = spearman(go, gs)
            except InsufficientData:
                grho = None
            summaries[label] = GroupSummary(len(items), math.fsum(go) / len(go),
                                            math.fsum(gs) / len(gs), grho)
    return TrendReport(n_pairs=len(pairs), rho=rho, direction=direction, groups=dict(summaries))


# --- published-table consistency check --------------------------------------

COLUMNS = ("M", "AR", "VR", "O")
DEFAULT_TOLERANCES = {"M": 0.02, "AR": 0.05, "VR": 0.05, "O": 0.005}
MODES = (ElongationMode.LITERAL, ElongationMode.UNIT)


@dataclass(frozen=True)
class PrintedRow:
    """One transcribed cohort-table row: inputs plus printed computed columns."""

    age_lo: int
    age_hi: int
    obs: NearWorkObservation
    m: float
    ar: float
    vr: float
    o: float

    def printed(self, column: str) -> float:
        return {"M": self.m, "AR": self.ar, "VR": self.vr, "O": self.o}[column]


@dataclass(frozen=True)
class ConsistencyEntry:
    row: int
    mode: ElongationMode
    column: str
    recomputed: float
    printed: float
    deviation: float
    match: bool

    @property
    def flag(self) -> str:
        return "Match" if self.match else "Deviation"


@dataclass
class ConsistencyReport:
    entries: list
    tolerances: dict

    def select(self, row=None, mode=None, column=None, flag=None):
        out = self.entries
        if row is not None:
            out = [e for e in out if e.row == row]
        if mode is not None:
            mode = ElongationMode.parse(mode)
            out = [e for e in out if e.mode is mode]
        if column is not None:
            out = [e for e in out if e.column == column]
        if flag is not None:
            out = [e for e in out if e.flag == flag]
        return out

    def entry(self, row: int, mode, column: str) -> ConsistencyEntry:
        (e,) = self.select(row=row, mode=mode, column=column)
        return e

    @property
    def rows(self) -> list[int]:
        return sorted({e.row for e in self.entries})

    def deviations(self):
        return [e for e in self.entries if not e.match]

    def modes_matching(self, row: int) -> list[ElongationMode]:
        """Modes under which every column of ``row`` matches."""
        return [m for m in MODES
                if all(e.match for e in self.select(row=row, mode=m))]


def recompute_row(row: PrintedRow, table: BaselineTable, cfg: ModelConfig) -> OcularEvaluation:
    return evaluate_observation(table.lookup(row.age_lo), row.obs, cfg)


def check_paper_table(rows: Sequence[PrintedRow], table: Optional[BaselineTable] = None,
                      tolerances: Optional[dict] = None,
                      cfg: ModelConfig = ModelConfig()) -> ConsistencyReport:
    """Recompute M, AR, VR, O for every row under both elongation modes.

    Rows are numbered from 1. Model errors propagate.
    """
    table = table if table is not None else builtin_baselines()
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        unknown = set(tolerances) - set(COLUMNS)
        if unknown:
            raise ValueError(f"unknown tolerance columns: {sorted(unknown)}")
        tol.update(tolerances)

    entries = []
    for idx, row in enumerate(rows, start=1):
        for mode in MODES:
            ev = recompute_row(row, table, ModelConfig(
                theta=cfg.theta, elongation_mode=mode, l0_levels=cfg.l0_levels,
                luminance_gain=cfg.luminance_gain, luminance_offset=cfg.luminance_offset))
            recomputed = {"M": ev.m, "AR": ev.ar, "VR": ev.vr, "O": ev.o}
            for col in COLUMNS:
                printed = row.printed(col)
                dev = abs(recomputed[col] - printed)
                entries.append(ConsistencyEntry(idx, mode, col, recomputed[col],
                                                printed, dev, dev <= tol[col]))
    return ConsistencyReport(entries=entries, tolerances=tol)


def with_recomputed(rows: Sequence[PrintedRow], report: ConsistencyReport,
                    mode) -> list[PrintedRow]:
    """Copy of ``rows`` whose printed columns are replaced by ``mode``'s recomputation."""
    out = []
    for idx, row in enumerate(rows, start=1):
        vals = {c: report.entry(idx, mode, c).recomputed for c in COLUMNS}
        out.append(PrintedRow(row.age_lo, row.age_hi, row.obs,
                              m=vals["M"], ar=vals["AR"], vr=vals["VR"], o=vals["O"]))
    return out
