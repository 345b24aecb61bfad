#!/usr/bin/env python3
"""BD-RIS vs conventional transmission over the user count at M=32, N=128.

Writes results/fig3b.csv; render it with
`plot --in results/fig3b.csv --axis K --out results/fig3b.png`.
"""

import sys

from bdris.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep", "--preset", "fig3b", "--out", "results/fig3b.csv", *sys.argv[1:]]))
