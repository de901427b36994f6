#!/usr/bin/env python3
"""Plot a fracbubble CSV: every numeric column against the first one.

usage: plot.py data.csv [out.png] [--log]
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def numeric(col):
    out = []
    for v in col:
        try:
            out.append(float(v))
        except ValueError:
            return None
    return out


def main(argv):
    args = [a for a in argv[1:] if not a.startswith("--")]
    header, rows = load(args[0])
    out = args[1] if len(args) > 1 else args[0].rsplit(".", 1)[0] + ".png"
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    x = numeric(cols[0]) or list(range(len(rows)))
    fig, ax = plt.subplots()
    for name, col in zip(header[1:], cols[1:]):
        y = numeric(col)
        if y is not None and y:
            ax.plot(x, [abs(v) for v in y] if "--log" in argv else y, marker="o", label=name)
    if "--log" in argv:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(header[0])
    ax.legend(fontsize="small")
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main(sys.argv)
