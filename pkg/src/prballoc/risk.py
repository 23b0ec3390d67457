"""Naive Bayes stroke posterior and priority weight per outpatient.

The posterior is prior (stroke-day frequency) times the product of the four
per-feature conditional likelihoods on stroke days, evaluated at the user's
current state.  An outpatient's weight is 1 + alpha * posterior; normal users
always weigh 1.
"""

import csv
import logging
from dataclasses import dataclass

from .errors import DataError
from .medrecords import FEATURES, LEVEL_NAMES

log = logging.getLogger(__name__)

NUM_LEVELS = 3  # every feature has exactly three severity levels


@dataclass
class RiskConfig:
    alpha: float
    smoothing: str = "off"  # "off" | "laplace"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.smoothing not in ("off", "laplace"):
            raise ValueError(f"unknown smoothing mode {self.smoothing!r}")


@dataclass
class CurrentState:
    """The four feature levels describing a user's present readings."""

    f1: str
    f2: str
    f3: str
    f4: str

    def __post_init__(self):
        for feat in FEATURES:
            token = getattr(self, feat)
            if token not in LEVEL_NAMES[feat]:
                raise ValueError(f"unknown level {token!r} for {feat}")

    def level(self, feature):
        return getattr(self, feature)


@dataclass
class RiskProfile:
    user_id: int
    is_outpatient: bool
    ps: float
    up: float


def prior_stroke(record):
    """Fraction of days in the record on which a stroke occurred."""
    if not record.days:
        raise DataError(f"patient {record.patient_id}: empty record")
    stroke_days = sum(1 for e in record.days if e.stroke)
    return stroke_days / len(record.days)


def conditional_probability(record, feature, level, stroke=True, smoothing="off"):
    """P(feature = level | class = stroke/no-stroke) by counting days."""
    if feature not in FEATURES:
        raise ValueError(f"unknown feature {feature!r}")
    class_count = sum(1 for e in record.days if e.stroke == stroke)
    joint = sum(1 for e in record.days if e.stroke == stroke and e.levels[feature] == level)
    if smoothing == "laplace":
        return (joint + 1) / (class_count + NUM_LEVELS)
    if class_count == 0:
        raise DataError(
            f"patient {record.patient_id}: undefined conditional, "
            f"no days with stroke={stroke}"
        )
    return joint / class_count


def posterior_stroke(record, state, smoothing="off"):
    """Stroke posterior PS for the given current state, in [0, 1]."""
    prior = prior_stroke(record)
    if prior == 0.0 and smoothing == "off":
        # A healthy history degrades the outpatient to normal priority.
        log.warning(
            "patient %s has no stroke days; posterior forced to 0", record.patient_id
        )
        return 0.0
    ps = prior
    for feature in FEATURES:
        ps *= conditional_probability(
            record, feature, state.level(feature), stroke=True, smoothing=smoothing
        )
    return ps


def priority(ps, config, is_outpatient):
    """User weight: 1 for normal users, 1 + alpha * PS for outpatients."""
    if not 0.0 <= ps <= 1.0:
        raise ValueError(f"posterior {ps} outside [0, 1]")
    if not is_outpatient:
        return 1.0
    return 1.0 + config.alpha * ps


def write_risk_csv(profiles, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "is_op", "ps", "up"])
        for p in profiles:
            writer.writerow([p.user_id, int(p.is_outpatient), repr(p.ps), repr(p.up)])


def read_risk_csv(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "is_op", "ps", "up"]:
            raise DataError(f"{path}: bad risk CSV header")
        return [
            RiskProfile(
                user_id=int(uid), is_outpatient=bool(int(op)), ps=float(ps), up=float(up)
            )
            for uid, op, ps, up in reader
        ]
