#!/usr/bin/env python3
"""Standalone renderer for the two-column series in this directory.

Each .dat file holds `x value` pairs; running this script writes one PNG
per file next to the data.  Rendered copies also ship in ../figures.
"""
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).resolve().parent
for dat in sorted(here.glob("*.dat")):
    xy = np.loadtxt(dat)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(xy[:, 0], xy[:, 1], lw=1.5)
    ax.set_xlabel("t")
    ax.set_ylabel(dat.stem)
    ax.set_title(dat.stem)
    fig.tight_layout()
    fig.savefig(here / (dat.stem + ".png"), dpi=110)
    plt.close(fig)
print("rendered", len(list(here.glob('*.dat'))), "series")
