"""Pedestrian-counter data: loading, temporal filtering and the observed
summary for the Centre Place network."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .summaries import SummaryVector

__all__ = [
    "CountRecord",
    "CountParseError",
    "MissingCounterError",
    "ObservedSummary",
    "HEADER",
    "COUNTER_LOCATIONS",
    "NODE1_MOCK_COUNT",
    "load_counts",
    "write_counts",
    "filter_counts",
    "counter_means",
    "synthesize_mock_counters",
    "write_observed",
    "read_observed",
    "bundled_counts",
]

HEADER = ("Count", "Location.Direction", "Day", "Time")

# counter code -> location/direction string in the counter export
COUNTER_LOCATIONS = OrderedDict([
    ("AW", "Anglesea Ward SW"),
    ("TR", "Ward St NE"),
    ("CC", "Crate Clothing Ward St NE"),
    ("TA", "Worley Pl SE"),
])

# best-guess count for the uninstalled counter at node 1
NODE1_MOCK_COUNT = 380.0


class CountParseError(ValueError):
    def __init__(self, line, message):
        super().__init__("line %d: %s" % (line, message))
        self.line = line


class MissingCounterError(KeyError):
    pass


@dataclass(frozen=True)
class CountRecord:
    count: int
    location_direction: str
    day: dt.date
    time: dt.time

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be nonnegative")


def _parse_row(row, line):
    if len(row) != 4:
        raise CountParseError(line, "expected 4 fields, got %d" % len(row))
    raw_count, loc, day, time = (x.strip() for x in row)
    try:
        count = int(raw_count)
    except ValueError:
        raise CountParseError(line, "count %r is not an integer" % raw_count) from None
    if count < 0:
        raise CountParseError(line, "negative count %d" % count)
    if not loc:
        raise CountParseError(line, "empty location")
    try:
        d = dt.date.fromisoformat(day)
    except ValueError:
        raise CountParseError(line, "bad date %r" % day) from None
    try:
        t = dt.datetime.strptime(time, "%H:%M:%S").time()
    except ValueError:
        raise CountParseError(line, "bad time %r" % time) from None
    return CountRecord(count, loc, d, t)


def load_counts(path):
    """Read a counter export (``Count,Location.Direction,Day,Time``).

    Row order is preserved.  Malformed rows raise :class:`CountParseError`
    carrying the 1-based line number.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CountParseError(1, "missing header") from None
        if tuple(h.strip() for h in header) != HEADER:
            raise CountParseError(1, "header must be %s" % ",".join(HEADER))
        for row in reader:
            if not row or not "".join(row).strip():
                continue
            records.append(_parse_row(row, reader.line_num))
    return records


def write_counts(records, path):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in records:
            w.writerow([r.count, r.location_direction, r.day.isoformat(),
                        r.time.strftime("%H:%M:%S")])
    return Path(path)


def filter_counts(records, weekdays_only=True, hour=12):
    """Keep records in ``[hour:00, hour+1:00)``, optionally Mon-Fri only."""
    if not 0 <= hour <= 23:
        raise ValueError("hour must lie in 0..23")
    return [r for r in records
            if r.time.hour == hour and (not weekdays_only or r.day.weekday() < 5)]


def counter_means(records, locations=None):
    """Mean count per counter code over the given records.

    Days without a record simply do not contribute (no imputation).
    """
    locations = COUNTER_LOCATIONS if locations is None else locations
    out = OrderedDict()
    for code, loc in locations.items():
        vals = [r.count for r in records if r.location_direction == loc]
        if vals:
            out[code] = sum(vals) / len(vals)
    return out


def _half_up(x):
    return float(math.floor(x + 0.5))


@dataclass
class ObservedSummary:
    """Observed counter summary with a note on how it was derived."""

    values: OrderedDict
    provenance: str = ""
    base: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.values.values()):
            raise ValueError("observed counts must be nonnegative")

    def vector(self, names=("AW", "TR", "TA", "CPS")):
        return SummaryVector([self.values[n] for n in names], names)


def synthesize_mock_counters(base, node1=NODE1_MOCK_COUNT, provenance=""):
    """Observed counts for the four network exits from counter means.

    node 5 (AW) = C_AW * 2.2, node 2 (TR) = C_TR + C_CC, node 0 (TA) =
    C_TA * 1.8 and node 1 (CPS) = ``node1``; each rounded half-up.
    """
    missing = [c for c in ("AW", "TR", "CC", "TA") if c not in base]
    if missing:
        raise MissingCounterError("missing base counter(s): %s"
                                  % ", ".join("C_" + c for c in missing))
    values = OrderedDict([
        ("AW", _half_up(base["AW"] * 2.2)),
        ("TR", _half_up(base["TR"] + base["CC"])),
        ("TA", _half_up(base["TA"] * 1.8)),
        ("CPS", _half_up(node1)),
    ])
    return ObservedSummary(values, provenance, {k: float(v) for k, v in base.items()})


def write_observed(obs, path):
    doc = {"summary": dict(obs.values), "provenance": obs.provenance,
           "base_means": obs.base}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n",
                          encoding="ascii")
    return Path(path)


def read_observed(path):
    doc = json.loads(Path(path).read_text())
    return ObservedSummary(OrderedDict((k, float(v)) for k, v in doc["summary"].items()),
                           doc.get("provenance", ""), doc.get("base_means", {}))


def bundled_counts():
    """Path of the bundled hourly export (1 Aug - 30 Sep 2018)."""
    return Path(str(resources.files("pedabc") / "data" / "hamilton_counts_2018.csv"))
