"""Outpatient medical record ingestion and discretization.

Raw longitudinal patient data goes through three stages: reduction (only the
four clinical features below are kept), cleansing (incomplete, erroneous, or
inconsistent rows are dropped) and generalization (numeric readings are mapped
to three severity levels each).
"""

import csv
import logging
from dataclasses import dataclass

from .errors import DataError

log = logging.getLogger(__name__)

CSV_COLUMNS = ["patient_id", "day", "sysbp", "diabp", "totchol", "cigpday", "stroke"]
RECORD_COLUMNS = ["patient_id", "day", "f1", "f2", "f3", "f4", "stroke"]

# f1 = systolic BP, f2 = diastolic BP, f3 = total cholesterol, f4 = cigs/day
FEATURES = ("f1", "f2", "f3", "f4")

# Severity tables: (exclusive upper bound, level name); the last entry is
# open-ended.  Printed ranges are closed on both printed endpoints, "<x" is
# strictly less and "x+" means >= x.  0 cigarettes/day falls into Light.
LEVEL_TABLES = {
    "f1": ((120.0, "Normal"), (140.0, "Pre-hypertension"), (None, "High-Hypertension")),
    "f2": ((80.0, "Normal"), (90.0, "Pre-hypertension"), (None, "High-Hypertension")),
    "f3": ((200.0, "Optimal"), (240.0, "Normal"), (None, "High")),
    "f4": ((11.0, "Light"), (20.0, "Moderate"), (None, "Heavy")),
}

LEVEL_NAMES = {f: tuple(name for _, name in tbl) for f, tbl in LEVEL_TABLES.items()}

DEFAULT_OBSERVATION_DAYS = 30


@dataclass
class RawRecordRow:
    patient_id: str
    day: int | None
    sysbp: float | None
    diabp: float | None
    totchol: float | None
    cigpday: float | None
    stroke: int | None


@dataclass
class DayEntry:
    day: int
    levels: dict  # feature name -> level token
    stroke: bool


@dataclass
class MedicalRecord:
    patient_id: str
    days: list  # of DayEntry, ascending by day


def level_of(feature, value):
    """Map a numeric reading to its severity level token."""
    if feature not in LEVEL_TABLES:
        raise ValueError(f"unknown feature {feature!r}")
    if value < 0:
        raise ValueError(f"negative reading {value} for {feature}")
    for bound, name in LEVEL_TABLES[feature]:
        if bound is None or value < bound:
            return name
    raise AssertionError("level table not total")


def _parse_cell(text, line_no, column, cast):
    text = text.strip()
    if text == "":
        return None
    try:
        return cast(text)
    except ValueError:
        raise DataError(
            f"line {line_no}: non-numeric value {text!r} in column {column!r}"
        ) from None


def load_raw_records(path):
    """Read the raw CSV (one row per patient-day); empty cells stay missing."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        rows = []
        for line_no, cells in enumerate(reader, start=2):
            if not cells or all(c.strip() == "" for c in cells):
                continue
            if len(cells) < len(header):
                raise DataError(f"line {line_no}: expected {len(header)} cells")
            rows.append(
                RawRecordRow(
                    patient_id=cells[idx["patient_id"]].strip(),
                    day=_parse_cell(cells[idx["day"]], line_no, "day", lambda s: int(float(s))),
                    sysbp=_parse_cell(cells[idx["sysbp"]], line_no, "sysbp", float),
                    diabp=_parse_cell(cells[idx["diabp"]], line_no, "diabp", float),
                    totchol=_parse_cell(cells[idx["totchol"]], line_no, "totchol", float),
                    cigpday=_parse_cell(cells[idx["cigpday"]], line_no, "cigpday", float),
                    stroke=_parse_cell(cells[idx["stroke"]], line_no, "stroke", lambda s: int(float(s))),
                )
            )
    return rows


def _is_complete(row):
    clinical = (row.sysbp, row.diabp, row.totchol, row.cigpday, row.stroke)
    if row.day is None or row.day < 1:
        return False
    if any(v is None for v in clinical):
        return False
    if any(v < 0 for v in (row.sysbp, row.diabp, row.totchol, row.cigpday)):
        return False
    if row.stroke not in (0, 1):
        return False
    return True


def cleanse(rows):
    """Drop incomplete, erroneous and inconsistent rows; order is preserved.

    A row survives only if all five clinical fields are present, numeric and
    non-negative, the stroke flag is 0/1, and its (patient, day) pair has not
    been seen before.
    """
    kept = []
    seen = set()
    for row in rows:
        if not _is_complete(row):
            continue
        key = (row.patient_id, row.day)
        if key in seen:
            continue
        seen.add(key)
        kept.append(row)
    dropped = len(rows) - len(kept)
    if dropped:
        log.info("cleanse: dropped %d of %d rows", dropped, len(rows))
    return kept


def generalize(row):
    """Discretize one cleansed row into a DayEntry of severity levels."""
    levels = {
        "f1": level_of("f1", row.sysbp),
        "f2": level_of("f2", row.diabp),
        "f3": level_of("f3", row.totchol),
        "f4": level_of("f4", row.cigpday),
    }
    return DayEntry(day=row.day, levels=levels, stroke=bool(row.stroke))


def segment(rows, window=DEFAULT_OBSERVATION_DAYS, all_patient_ids=None):
    """Group cleansed rows into per-patient records of at most `window` days.

    Days are sorted ascending and the record keeps the first `window` of them.
    `all_patient_ids` may list patients seen before cleansing, so that patients
    who lost every day can be warned about.
    """
    by_patient = {}
    for row in rows:
        by_patient.setdefault(row.patient_id, []).append(row)
    if all_patient_ids is not None:
        for pid in all_patient_ids:
            if pid not in by_patient:
                log.warning("patient %s has no valid days and was excluded", pid)
    records = []
    for pid, patient_rows in by_patient.items():
        patient_rows.sort(key=lambda r: r.day)
        if window is not None:
            patient_rows = patient_rows[:window]
        records.append(MedicalRecord(patient_id=pid, days=[generalize(r) for r in patient_rows]))
    return records


def write_records_csv(records, path):
    """Write discretized records with level names as tokens."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for rec in records:
            for entry in rec.days:
                writer.writerow(
                    [rec.patient_id, entry.day]
                    + [entry.levels[f] for f in FEATURES]
                    + [1 if entry.stroke else 0]
                )


def read_records_csv(path):
    """Read discretized records written by write_records_csv."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RECORD_COLUMNS:
            raise DataError(f"{path}: expected header {','.join(RECORD_COLUMNS)}")
        by_patient = {}
        for line_no, cells in enumerate(reader, start=2):
            if not cells:
                continue
            pid, day, f1, f2, f3, f4, stroke = [c.strip() for c in cells]
            for feat, token in zip(FEATURES, (f1, f2, f3, f4)):
                if token not in LEVEL_NAMES[feat]:
                    raise DataError(f"line {line_no}: unknown level {token!r} for {feat}")
            entry = DayEntry(
                day=int(day),
                levels={"f1": f1, "f2": f2, "f3": f3, "f4": f4},
                stroke=stroke == "1",
            )
            by_patient.setdefault(pid, []).append(entry)
    records = []
    for pid, entries in by_patient.items():
        entries.sort(key=lambda e: e.day)
        records.append(MedicalRecord(patient_id=pid, days=entries))
    return records


def synthesize_raw_records(num_patients, days, rng, stroke_rate=0.1):
    """Generate synthetic raw rows in the ingestion schema (for demos/tests)."""
    rows = []
    for p in range(1, num_patients + 1):
        pid = f"p{p}"
        for d in range(1, days + 1):
            rows.append(
                RawRecordRow(
                    patient_id=pid,
                    day=d,
                    sysbp=float(rng.uniform(95, 180)),
                    diabp=float(rng.uniform(60, 110)),
                    totchol=float(rng.uniform(150, 300)),
                    cigpday=float(rng.integers(0, 40)),
                    stroke=int(rng.random() < stroke_rate),
                )
            )
    return rows
