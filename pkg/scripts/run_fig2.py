#!/usr/bin/env python3
"""Architecture comparison (BD vs D) over the RIS size at M=24, K=4.

Writes results/fig2.csv; render it with
`plot --in results/fig2.csv --axis N --out results/fig2.png`.
"""

import sys

from bdris.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep", "--preset", "fig2", "--out", "results/fig2.csv", *sys.argv[1:]]))
