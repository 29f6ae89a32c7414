#!/usr/bin/env python3
"""Weekday-vs-weekend comparison of daily phone-call networks.

The underlying data is the MIT Reality Mining study (Eagle & Pentland,
2009): call logs of 106 subjects from July 2004 to June 2005.  The raw
dataset requires registration and cannot be redistributed here, so this
script expects a pre-built observation CSV and documents its format:

    nodes=106
    1,<11236 comma-separated 0/1 cells>     # one weekday network per row
    ...
    2,<11236 comma-separated 0/1 cells>     # one weekend network per row

Each row flattens a directed adjacency matrix (row-major): cell [i, j]
is 1 when subject i called subject j at least once that day.  Label 1
marks weekdays (236 rows), label 2 weekends (94 rows).  Point
EDGECOUNT_PHONE_DATA (or --input) at that file.

The analysis: deduplicate the 330 networks into distinct values, measure
squared-entry-difference distances, build the 3-round nearest neighbor
link graph, and run both summaries of the edge-count tests.
"""

from __future__ import annotations

import argparse
import os
import sys

from edgecount.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input", default=os.environ.get("EDGECOUNT_PHONE_DATA"))
    parser.add_argument("--permutations", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", help="also write the JSON report here")
    args = parser.parse_args()

    if not args.input:
        print(__doc__)
        print("error: no input; set EDGECOUNT_PHONE_DATA or pass --input",
              file=sys.stderr)
        return 2

    argv = [
        "test", "--input", args.input, "--kind", "network",
        "--metric", "frobenius", "--graph", "nnl", "3",
        "--perm", str(args.permutations), "--seed", str(args.seed),
    ]
    if args.output:
        argv += ["--output", args.output]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
