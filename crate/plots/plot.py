#!/usr/bin/env python3
"""Plot the CSV and JSON files written by the pathent CLI.

    plot.py g2 g2.csv [--fit fit.json] -o g2.png
    plot.py fringes scan.csv [--visibility v.json] -o fringes.png
    plot.py populations detected.csv [--corrected corrected.csv] [--oracle oracle.csv] -o pops.png
    plot.py concurrence concurrence.json -o cn.png
    plot.py lifetime decay.csv [--fit fit.json] -o decay.png
"""

import argparse
import csv
import json
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) if k != "regime_warning" else r[k] == "true" for r in rows] for k in rows[0]} if rows else {}


def g2_model(tau, m):
    r2 = m["rho"] ** 2
    t = abs(tau)
    return 1 - r2 * m["beta"] * math.exp(-m["gamma1"] * t) + r2 * (m["beta"] - 1) * math.exp(-m["gamma2"] * t)


def plot_g2(args, ax):
    d = read_csv(args.input)
    ax.plot(d["tau_ns"], d["g2"], ".", ms=3, label="measured")
    if args.fit:
        with open(args.fit) as f:
            m = json.load(f)["model"]
        ax.plot(d["tau_ns"], [g2_model(t, m) for t in d["tau_ns"]], "r--", label="three-level fit")
    ax.set_xlabel("τ (ns)")
    ax.set_ylabel("g²(τ)")


def plot_fringes(args, ax):
    d = read_csv(args.input)
    ax.plot(d["theta_deg"], d["nH"], "o", ms=4, label="D_H")
    ax.plot(d["theta_deg"], d["nV"], "s", ms=4, label="D_V")
    if args.visibility:
        with open(args.visibility) as f:
            v = json.load(f)
        ax.set_title(f"V = {v['visibility']:.4f} ± {v['visibility_err']:.4f}")
    ax.set_xlabel("HWP angle θ (deg)")
    ax.set_ylabel("counts")


def plot_populations(args, fig):
    det = read_csv(args.input)
    cor = read_csv(args.corrected) if args.corrected else None
    ora = read_csv(args.oracle) if args.oracle else None
    axes = fig.subplots(2, 2).ravel()
    for ax, key, label in zip(axes, ["p0", "p1", "p2", "yc"], ["p₀", "p₁", "p₂", "y_c"]):
        src = cor or det
        err = src.get(key + "_err")
        ax.errorbar(src["window_ns"], src[key], yerr=err, fmt=".", ms=3, label="corrected" if cor else "detected")
        if ora and key in ora:
            ax.plot(ora["window_ns"], ora[key], "r--", label="from g²")
        ax.set_xlabel("window δt (ns)")
        ax.set_ylabel(label)
    axes[0].legend()


def plot_concurrence(args, ax):
    with open(args.input) as f:
        rows = json.load(f)
    ax.errorbar([r["window_ns"] for r in rows], [r["c_n"] for r in rows], yerr=[r["c_n_err"] for r in rows], fmt="o", ms=3)
    ax.set_xlabel("window δt (ns)")
    ax.set_ylabel("C_N")


def plot_lifetime(args, ax):
    d = read_csv(args.input)
    ax.semilogy(d["t_ns"], [max(c, 0.5) for c in d["counts"]], ".", ms=2, label="counts")
    if args.fit:
        with open(args.fit) as f:
            fit = json.load(f)
        ax.set_title(f"γ = {fit['recommended_gamma']:.4f} /ns (cutoff {fit['recommended_cutoff_ns']} ns)")
        ax.axvline(fit["recommended_cutoff_ns"], color="k", ls="--")
    ax.set_xlabel("t − t_sync (ns)")
    ax.set_ylabel("counts")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("kind", choices=["g2", "fringes", "populations", "concurrence", "lifetime"])
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--fit")
    p.add_argument("--visibility")
    p.add_argument("--corrected")
    p.add_argument("--oracle")
    args = p.parse_args()

    if args.kind == "populations":
        fig = plt.figure(figsize=(9, 7))
        plot_populations(args, fig)
    else:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        {"g2": plot_g2, "fringes": plot_fringes, "concurrence": plot_concurrence, "lifetime": plot_lifetime}[args.kind](args, ax)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
