"""Seeded corridor stress trials; exits non-zero if any trial fails.

    python3 scripts/corridor_stress.py --trials 50
"""

import sys

from pecman.cli import main

if __name__ == "__main__":
    sys.exit(main(["stress", *sys.argv[1:]]))
