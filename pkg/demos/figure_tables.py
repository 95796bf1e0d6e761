"""Produce the heat-kernel tables through the command-line entry point.

Writes fig2a.csv (spatial profiles at several times), fig2b.csv (time traces
at fixed locations) and hankel_spectrum.csv into ./figure_output.
"""

import sys

from ltsi_relax.cli import main

sys.exit(main(["figures", "--out", "figure_output", "--seed", "0"]))
