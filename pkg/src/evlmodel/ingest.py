"""CSV and config-file parsing, near-work type mapping, luminance to lux."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Optional

from .cohort import BaselineTable, CohortRecord, PrintedRow
from .errors import (
    BadNumeric,
    ConfigError,
    ConflictingLightingSource,
    EmptyImage,
    EVLError,
    InvalidNearWorkType,
    MissingColumn,
    NonpositiveEstimate,
)
from .model import AgeGroupBaseline, ModelConfig, NearWorkObservation
from .pnm import GrayscaleImage, read_pnm

NEAR_WORK_TYPES = {"reading": 1.0, "writing": 1.5, "phone": 2.0}
NEAR_WORK_NAMES = {v: k for k, v in NEAR_WORK_TYPES.items()}

OBSERVATION_COLUMNS = ("subject_id", "age", "near_work_type", "t_min", "lux", "image_path",
                       "pupil_mm", "distance_m", "aberrations", "ser")
BASELINE_COLUMNS = ("age_lo", "age_hi", "al0", "p0", "m0", "w0")
TABLE_COLUMNS = ("age_lo", "age_hi", "n", "t", "lux", "pupil_mm", "distance_m",
                 "aberrations", "m", "ar", "vr", "o", "ser")


def near_work_coefficient(value) -> float:
    """Map ``reading``/``writing``/``phone`` (or a positive number) to ``n``."""
    if isinstance(value, (int, float)):
        n = float(value)
    else:
        key = str(value).strip().lower()
        if key in NEAR_WORK_TYPES:
            return NEAR_WORK_TYPES[key]
        try:
            n = float(key)
        except ValueError:
            raise InvalidNearWorkType(None, value) from None
    if not (math.isfinite(n) and n > 0):
        raise InvalidNearWorkType(None, value)
    return n


def fmt_number(x: float) -> str:
    """Shortest text that parses back to exactly ``x``."""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class ObservationFileRow:
    subject_id: str
    age: float
    n: float
    t: float
    l: Optional[float]
    image_path: Optional[str]
    p: float
    d: float
    w: float
    ser: Optional[float] = None
    near_work_label: Optional[str] = None
    line: int = 0

    def to_observation(self, lux: Optional[float] = None) -> NearWorkObservation:
        l = self.l if lux is None else lux
        if l is None:
            raise ConflictingLightingSource(self.line, "no lighting value resolved")
        return NearWorkObservation(n=self.n, t=self.t, l=l, p=self.p, d=self.d,
                                   w=self.w, ser=self.ser)


def _reader(text: str, required, what: str):
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames
    if header is None:
        raise MissingColumn(f"{what}: empty input, expected header {','.join(required)}")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingColumn(f"{what}: missing column(s) {', '.join(missing)}")
    return reader


def _num(rec, column, line, optional=False):
    raw = (rec.get(column) or "").strip()
    if raw == "":
        if optional:
            return None
        raise BadNumeric(line, column, raw)
    try:
        value = float(raw)
    except ValueError:
        raise BadNumeric(line, column, raw) from None
    if not math.isfinite(value):
        raise BadNumeric(line, column, raw)
    return value


def _parse_observation(rec, line) -> ObservationFileRow:
    if None in rec:
        raise BadNumeric(line, "<extra>", ",".join(rec[None]))
    token = (rec.get("near_work_type") or "").strip()
    try:
        n = near_work_coefficient(token)
    except InvalidNearWorkType:
        raise InvalidNearWorkType(line, token) from None
    label = token.lower() if token.lower() in NEAR_WORK_TYPES else None

    lux = _num(rec, "lux", line, optional=True)
    image = (rec.get("image_path") or "").strip() or None
    if lux is not None and image is not None:
        raise ConflictingLightingSource(line, "both lux and image_path given")
    if lux is None and image is None:
        raise ConflictingLightingSource(line, "neither lux nor image_path given")

    return ObservationFileRow(
        subject_id=(rec.get("subject_id") or "").strip(),
        age=_num(rec, "age", line),
        n=n,
        t=_num(rec, "t_min", line),
        l=lux,
        image_path=image,
        p=_num(rec, "pupil_mm", line),
        d=_num(rec, "distance_m", line),
        w=_num(rec, "aberrations", line),
        ser=_num(rec, "ser", line, optional=True),
        near_work_label=label,
        line=line,
    )


def parse_observations(text: str, collect_errors: bool = False):
    """Parse an observation CSV.

    Raises the first row error, tagged with its line number. With
    ``collect_errors=True`` returns ``(rows, errors)`` instead so bad rows can
    be quarantined while the rest go through.
    """
    reader = _reader(text, OBSERVATION_COLUMNS, "observations")
    rows, errors = [], []
    for rec in reader:
        line = reader.line_num
        if not any((v or "").strip() for k, v in rec.items() if k is not None):
            continue
        try:
            rows.append(_parse_observation(rec, line))
        except EVLError as exc:
            if not collect_errors:
                raise
            errors.append((line, exc))
    return (rows, errors) if collect_errors else rows


def serialize_observations(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(OBSERVATION_COLUMNS)
    for r in rows:
        writer.writerow([
            r.subject_id,
            fmt_number(r.age),
            r.near_work_label or fmt_number(r.n),
            fmt_number(r.t),
            "" if r.l is None else fmt_number(r.l),
            r.image_path or "",
            fmt_number(r.p),
            fmt_number(r.d),
            fmt_number(r.w),
            "" if r.ser is None else fmt_number(r.ser),
        ])
    return buf.getvalue()


def parse_baselines(text: str) -> BaselineTable:
    reader = _reader(text, BASELINE_COLUMNS, "baselines")
    rows = []
    for rec in reader:
        line = reader.line_num
        vals = {c: _num(rec, c, line) for c in BASELINE_COLUMNS}
        for c in ("age_lo", "age_hi"):
            if vals[c] != int(vals[c]):
                raise BadNumeric(line, c, rec[c])
        rows.append(AgeGroupBaseline(int(vals["age_lo"]), int(vals["age_hi"]),
                                     vals["al0"], vals["p0"], vals["m0"], vals["w0"]))
    return BaselineTable(rows)


def serialize_baselines(table: BaselineTable) -> str:
    lines = [",".join(BASELINE_COLUMNS)]
    for r in table:
        lines.append(",".join(fmt_number(x) for x in (r.age_lo, r.age_hi, r.al0, r.p0, r.m0, r.w0)))
    return "\n".join(lines) + "\n"


def parse_printed_table(text: str) -> list[PrintedRow]:
    """Parse a transcription of the published cohort table (inputs + printed outputs)."""
    reader = _reader(text, TABLE_COLUMNS, "table")
    rows = []
    for rec in reader:
        line = reader.line_num
        v = {c: _num(rec, c, line, optional=(c == "ser")) for c in TABLE_COLUMNS}
        obs = NearWorkObservation(n=v["n"], t=v["t"], l=v["lux"], p=v["pupil_mm"],
                                  d=v["distance_m"], w=v["aberrations"], ser=v["ser"])
        rows.append(PrintedRow(int(v["age_lo"]), int(v["age_hi"]), obs,
                               m=v["m"], ar=v["ar"], vr=v["vr"], o=v["o"]))
    return rows


def serialize_printed_table(rows) -> str:
    lines = [",".join(TABLE_COLUMNS)]
    for r in rows:
        o = r.obs
        vals = [r.age_lo, r.age_hi, o.n, o.t, o.l, o.p, o.d, o.w, r.m, r.ar, r.vr, r.o]
        lines.append(",".join(fmt_number(x) for x in vals)
                     + "," + ("" if o.ser is None else fmt_number(o.ser)))
    return "\n".join(lines) + "\n"


def load_bundled_table() -> list[PrintedRow]:
    """The eight published cohort rows shipped with the package."""
    from importlib import resources
    text = resources.files("evlmodel").joinpath("data/table3.csv").read_text()
    return parse_printed_table(text)


def bundled_table_path() -> str:
    from importlib import resources
    return str(resources.files("evlmodel").joinpath("data/table3.csv"))


# --- configuration ----------------------------------------------------------

_CONFIG_KEYS = {"theta", "elongation_mode", "luminance_gain", "luminance_offset", "l0_levels"}


def parse_config(text: str, base: ModelConfig = ModelConfig()) -> ModelConfig:
    """Parse flat ``key=value`` lines on top of ``base``. ``#`` starts a comment."""
    fields = {
        "theta": base.theta,
        "elongation_mode": base.elongation_mode,
        "luminance_gain": base.luminance_gain,
        "luminance_offset": base.luminance_offset,
        "l0_levels": base.l0_levels,
    }
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        try:
            if key == "elongation_mode":
                fields[key] = value
            elif key == "l0_levels":
                fields[key] = tuple(float(x) for x in value.split(",") if x.strip())
            else:
                fields[key] = float(value)
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value for {key}: {value!r}") from None
    try:
        return ModelConfig(**fields)
    except (EVLError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# --- lighting from images ---------------------------------------------------

def estimate_lux(img: GrayscaleImage, cfg: ModelConfig = ModelConfig()) -> float:
    """Affine luminance calibration: ``gain * mean(samples) + offset``."""
    if img.samples.size == 0:
        raise EmptyImage("image has no pixels")
    if not cfg.luminance_gain > 0:
        raise ConfigError(f"luminance_gain must be > 0, got {cfg.luminance_gain}")
    lux = cfg.luminance_gain * img.mean + cfg.luminance_offset
    if not lux > 0:
        raise NonpositiveEstimate(f"estimated lighting {lux} lux is not positive")
    return lux


def resolve_lux(row: ObservationFileRow, cfg: ModelConfig, base_dir: str = ".") -> float:
    if row.l is not None:
        return row.l
    path = row.image_path
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    return estimate_lux(read_pnm(path), cfg)


def to_cohort_records(rows, cfg: ModelConfig = ModelConfig(), base_dir: str = "."):
    """Resolve lighting and build cohort records.

    Returns ``(records, failures)``; rows whose image cannot be read or
    calibrated land in ``failures`` as ``(row, error)``.
    """
    records, failures = [], []
    for row in rows:
        try:
            lux = resolve_lux(row, cfg, base_dir)
        except (EVLError, OSError) as exc:
            failures.append((row, exc))
            continue
        records.append(CohortRecord(row.subject_id, row.age, row.to_observation(lux)))
    return records, failures
