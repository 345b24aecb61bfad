#!/usr/bin/env python3
"""BD-RIS vs conventional transmission over the RIS size, matched apertures.

Writes results/fig3a.csv; render it with
`plot --in results/fig3a.csv --axis N --out results/fig3a.png`.
"""

import sys

from bdris.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep", "--preset", "fig3a", "--out", "results/fig3a.csv", *sys.argv[1:]]))
