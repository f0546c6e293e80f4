"""Summarize a results CSV: per (C, B, precoder, metric) statistics.

Per-block metrics get mean, median and the 10th/90th percentiles (a coarse
view of the CDF); EE aggregate rows are printed as they are.

    python3 scripts/summarize.py results/maxmin_small.csv [--metric min_rate]
"""

import argparse
import csv
from collections import defaultdict

import numpy as np


def load(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows, metric=None):
    groups = defaultdict(list)
    aggregates = []
    for r in rows:
        if metric and r["metric"] != metric:
            continue
        if r["drop"] == "-1":
            aggregates.append(r)
            continue
        groups[(r["C"], r["B"], r["precoder"], r["metric"])].append(float(r["value"]))
    lines = [f"{'C':>5} {'B':>4} {'prec':>5} {'metric':>16} {'n':>5} {'mean':>11} {'median':>11} {'p10':>11} {'p90':>11}"]
    for (C, B, prec, m), vals in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        v = np.asarray(vals)
        v = v[np.isfinite(v)]
        stats = (v.mean(), np.median(v), *np.percentile(v, [10, 90])) if v.size else (np.nan,) * 4
        lines.append(f"{C:>5} {B:>4} {prec:>5} {m:>16} {v.size:>5} " + " ".join(f"{s:11.4g}" for s in stats))
    for r in aggregates:
        lines.append(f"{r['C']:>5} {r['B']:>4} {r['precoder']:>5} {r['metric']:>16} {'agg':>5} {float(r['value']):11.4g}")
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv")
    ap.add_argument("--metric")
    args = ap.parse_args()
    rows = load(args.csv)
    bad = sum(r["status"] not in ("ok", "converged", "max_rounds") for r in rows)
    print(summarize(rows, args.metric))
    if bad:
        print(f"\n{bad} rows carry a failure status")


if __name__ == "__main__":
    main()
