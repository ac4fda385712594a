#!/usr/bin/env python3
"""Per-cell ELBO-difference boxplots from two grid summary.csv files.

Usage: python plots/diff.py --a <summary.csv> --b <summary.csv> --out fig_diff.svg
"""

import sys

from dsmcs.plots import diff_main

if __name__ == "__main__":
    sys.exit(diff_main())
