#!/usr/bin/env python3
"""Render figures from the CSV files written by `vshp`.

    plot.py trace out/trace.csv [more traces ...] -o trace.png
    plot.py sweep out/sweep.csv -o loci.png
    plot.py efficiency out/efficiency_omega.csv -o eta.png

Lines starting with `#` are metadata and skipped.
"""
import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def read(path):
    return pd.read_csv(path, comment="#")


def meta(path):
    out = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            k, _, v = line[1:].partition(":")
            out[k.strip()] = v.strip()
    return out


def plot_trace(paths, columns):
    fig, axes = plt.subplots(len(columns), 1, sharex=True, figsize=(8, 2.2 * len(columns)))
    for p in paths:
        df = read(p)
        label = meta(p).get("model", p)
        for ax, c in zip(axes, columns):
            ax.plot(df["t"], df[c], label=label)
            ax.set_ylabel(c)
    axes[-1].set_xlabel("t [s]")
    axes[0].legend()
    return fig


def plot_sweep(path):
    df = read(path)
    df = df[df["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(7, 5))
    sc = ax.scatter(df["re"], df["im"], c=df["P_star"] if df["P_star"].nunique() > 1 else df["omega_star"], s=12)
    fig.colorbar(sc, label="P*" if df["P_star"].nunique() > 1 else "omega*")
    ax.axvline(0, color="k", lw=0.5)
    ax.set_xlabel("Re [1/s]")
    ax.set_ylabel("Im [rad/s]")
    ax.set_title(meta(path).get("grid", ""))
    return fig


def plot_efficiency(path):
    df = read(path)
    x = df.columns[0]
    fig, ax = plt.subplots(figsize=(7, 4))
    for c in df.columns[1:]:
        ax.plot(df[x], df[c], label=c)
    ax.set_xlabel(x)
    ax.set_ylabel("efficiency")
    ax.legend()
    return fig


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("kind", choices=["trace", "sweep", "efficiency"])
    ap.add_argument("files", nargs="+")
    ap.add_argument("-o", "--output", required=True)
    ap.add_argument("--columns", default="omega,g,P_m", help="trace columns (comma separated)")
    a = ap.parse_args(argv)
    if a.kind == "trace":
        fig = plot_trace(a.files, a.columns.split(","))
    elif a.kind == "sweep":
        fig = plot_sweep(a.files[0])
    else:
        fig = plot_efficiency(a.files[0])
    fig.tight_layout()
    fig.savefig(a.output, dpi=120)


if __name__ == "__main__":
    main(sys.argv[1:])
