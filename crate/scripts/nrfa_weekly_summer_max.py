#!/usr/bin/env python3
"""Weekly summer maxima of daily river flow from NRFA gauged daily flow files.

Each input is a gauged daily flow CSV downloaded from the UK National River
Flow Archive. Metadata lines at the top are skipped; data lines start with an
ISO date followed by the flow in m3/s. For every year, June to August is cut
into 7-day blocks starting on 1 June (the last partial block is dropped) and
the maximum flow of each block is taken. Blocks are joined across stations and
kept only when every station has all 7 days.

The three Wye stations used in the examples are

    erwood     55007  Wye at Erwood
    redbrook   55023  Wye at Redbrook
    ddol_farm  55026  Wye at Ddol Farm

Check the station numbers on the NRFA website before downloading; the
Ddol Farm number in particular should be confirmed.

Usage:

    nrfa_weekly_summer_max.py erwood=55007.csv redbrook=55023.csv \\
        ddol_farm=55026.csv -o wye_weekly.csv
"""

import argparse
import csv
import datetime as dt
import sys

BLOCK_DAYS = 7
FIRST_MONTH, LAST_MONTH = 6, 8


def read_daily(path):
    flows = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2:
                continue
            try:
                day = dt.date.fromisoformat(row[0].strip())
                value = float(row[1])
            except ValueError:
                continue
            flows[day] = value
    if not flows:
        sys.exit(f"{path}: no dated flow records found")
    return flows


def weekly_maxima(flows):
    out = {}
    for year in sorted({d.year for d in flows}):
        start = dt.date(year, FIRST_MONTH, 1)
        end = dt.date(year, LAST_MONTH + 1, 1)
        block = 0
        while start + dt.timedelta(days=BLOCK_DAYS) <= end:
            days = [start + dt.timedelta(days=i) for i in range(BLOCK_DAYS)]
            if all(d in flows for d in days):
                out[(year, block)] = max(flows[d] for d in days)
            start += dt.timedelta(days=BLOCK_DAYS)
            block += 1
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("inputs", nargs="+", metavar="NAME=FILE")
    ap.add_argument("-o", "--output", default="-")
    args = ap.parse_args()

    names, series = [], []
    for item in args.inputs:
        name, sep, path = item.partition("=")
        if not sep:
            ap.error(f"expected NAME=FILE, got {item!r}")
        names.append(name)
        series.append(weekly_maxima(read_daily(path)))

    keys = sorted(set.intersection(*(set(s) for s in series)))
    fh = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    writer = csv.writer(fh)
    writer.writerow(["year", "week"] + names)
    for year, block in keys:
        writer.writerow([year, block + 1] + [repr(s[(year, block)]) for s in series])
    if fh is not sys.stdout:
        fh.close()
    print(f"{len(keys)} weekly maxima written", file=sys.stderr)


if __name__ == "__main__":
    main()
