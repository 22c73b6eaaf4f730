"""SVG line plots of empirical tails against bound curves."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so reruns give identical files
matplotlib.rcParams["svg.hashsalt"] = "vstat-rff"
_META = {"Date": None, "Creator": "vstat-rff"}


def _metadata(header):
    meta = dict(_META)
    if header:
        meta["Description"] = "; ".join(header)
    return meta


def tail_plot(path, tail, bound=None, title=None, header=()):
    """Empirical survival with Wilson band and, optionally, the bound."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.asarray(tail.x)
    ax.fill_between(x, tail.lo, tail.hi, color="C0", alpha=0.2, linewidth=0)
    ax.plot(x, tail.phat, "o-", color="C0", ms=3, label="empirical")
    if bound is not None:
        ax.plot(x, bound, "-", color="C3", label="bound")
    ax.set_xscale("log" if np.all(x > 0) else "linear")
    ax.set_yscale("log")
    ax.set_xlabel("x")
    ax.set_ylabel("P(T_p >= x)")
    ax.set_title(title or f"n = {tail.n}, p = {tail.p}, R = {tail.R}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_metadata(header))
    plt.close(fig)
    return path


def scaling_plot(path, report, header=()):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(report.n, report.scaled, "o-")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("n")
    ax.set_ylabel(f"n^(p/2) median T_{report.p}")
    ax.set_ylim(bottom=0)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_metadata(header))
    plt.close(fig)
    return path
