#!/usr/bin/env python3
"""ESS-vs-step curves from harness run directories.

Usage: python plots/ess.py --runs <dir> [<dir> ...] --epochs 100,500 --out fig_ess.svg
"""

import sys

from dsmcs.plots import ess_main

if __name__ == "__main__":
    sys.exit(ess_main())
