#!/usr/bin/env python3
"""Regenerate the bundled synthetic survey dataset.

Produces src/hookrate/data/synthetic_survey.csv: a deterministic fake
inshore longline survey with 225 circle hooks per set, two-hour soaks,
two adjacent areas (12 and 13) surveyed in 2003, 2004 and 2007, and a
target-species crash in area 13 in 2007 (sparse catch, which is what
makes the numeric Gaussian fit unstable there).
"""

from dataclasses import replace
from pathlib import Path

from hookrate.records import Dataset, write_records
from hookrate.simulate import Scenario, simulate_dataset

OUT = Path(__file__).resolve().parents[1] / "src" / "hookrate" / "data" / "synthetic_survey.csv"

# (year, area) -> (lambda_target, lambda_nontarget, seed)
CELLS = {
    (2003, "13"): (8.0e-4, 4.0e-3, 1303),
    (2004, "13"): (6.0e-4, 4.2e-3, 1304),
    (2007, "13"): (2.0e-5, 4.4e-3, 1307),
    (2003, "12"): (7.0e-4, 3.8e-3, 1203),
    (2004, "12"): (6.5e-4, 4.1e-3, 1204),
    (2007, "12"): (4.0e-4, 4.3e-3, 1207),
}
P_TARGET = 0.05
P_NONTARGET = 0.25
SETS_PER_CELL = 14


def build() -> Dataset:
    records = []
    for (year, area), (lt, lnt, seed) in sorted(CELLS.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        scenario = Scenario(
            lambda_target=lt,
            lambda_nontarget=lnt,
            p_target=P_TARGET,
            p_nontarget=P_NONTARGET,
            n_hooks=225,
            n_sets=SETS_PER_CELL,
            soak_minutes=120.0,
            seed=seed,
        )
        ds, _ = simulate_dataset(scenario, 0)
        for k, rec in enumerate(ds):
            records.append(
                replace(rec, set_id=f"{area}-{year}-s{k:02d}", year=year, area=area)
            )
    return Dataset(tuple(records))


if __name__ == "__main__":
    ds = build()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as fh:
        write_records(ds, fh)
    print(f"wrote {OUT} ({len(ds)} sets)")
