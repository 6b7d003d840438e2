"""Regenerate the bundled hourly counter export.

The series are synthetic.  Hourly counts follow a lunchtime-peaked daily
profile with lower weekend traffic; weekday-noon totals are then pinned so
the weekday-noon means give the observed summary (321, 222, 202, 380).

    python tools/make_counts.py src/pedabc/data/hamilton_counts_2018.csv
"""

import datetime as dt
import sys

import numpy as np

from pedabc.data_ingest import CountRecord, write_counts

START, END = dt.date(2018, 8, 1), dt.date(2018, 9, 30)
# location -> (weekday noon level, weekday-noon total to pin or None)
SERIES = {
    "Anglesea Ward SW": (146, 6270),
    "Anglesea Ward NE": (120, None),
    "Ward St NE": (130, 5600),
    "Crate Clothing Ward St NE": (92, 3946),
    "Worley Pl SE": (112, 4825),
}
# relative hourly profile, peak at 12:00
PROFILE = np.array([0.03, 0.02, 0.01, 0.01, 0.01, 0.03, 0.08, 0.2, 0.4, 0.5, 0.6, 0.8,
                    1.0, 0.85, 0.6, 0.55, 0.55, 0.5, 0.4, 0.3, 0.25, 0.15, 0.08, 0.05])


def main(path):
    rng = np.random.default_rng(20180801)
    days = [START + dt.timedelta(days=i) for i in range((END - START).days + 1)]
    weekdays = [d for d in days if d.weekday() < 5]
    counts = {}
    for loc, (level, total) in SERIES.items():
        for d in days:
            scale = 1.0 if d.weekday() < 5 else (0.55 if d.weekday() == 5 else 0.4)
            counts[loc, d] = rng.poisson(level * scale * PROFILE)
        if total is not None:
            noon = np.array([counts[loc, d][12] for d in weekdays])
            diff = total - int(noon.sum())
            # spread the correction one unit at a time over the days
            step = 1 if diff > 0 else -1
            k = 0
            while diff:
                d = weekdays[k % len(weekdays)]
                if counts[loc, d][12] + step >= 0:
                    counts[loc, d][12] += step
                    diff -= step
                k += 1
    records = [CountRecord(int(counts[loc, d][h]), loc, d, dt.time(h))
               for d in days for h in range(24) for loc in SERIES]
    write_counts(records, path)


if __name__ == "__main__":
    main(sys.argv[1])
