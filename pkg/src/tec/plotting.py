"""Figures for the report subcommands. Everything renders to files."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .cryptanalysis import TryCountModel, paper_try_count  # noqa: E402

_STYLE = {
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _figure(width=6.0, height=None):
    height = height or width * (math.sqrt(5) - 1) / 2
    return plt.subplots(figsize=(width, height), dpi=120)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_try_counts(max_n, path, mark=None):
    """log2 of brute-force tries against message length for each model."""
    ns = list(range(0, max_n + 1))
    with plt.rc_context(_STYLE):
        fig, ax = _figure()
        for model, style in ((TryCountModel.PAPER_MIN, "-"), (TryCountModel.PAPER_MAX, "--"),
                             (TryCountModel.EXACT_POSITIONS, ":")):
            ax.plot(ns, [math.log2(paper_try_count(n, model)) for n in ns],
                    style, label=model.value)
        if mark is not None:
            ax.axvline(mark, color="0.5", lw=0.8)
        ax.set_xlabel("message length (bytes)")
        ax.set_ylabel("log2(tries)")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_digit_balance(bits, path, title=None):
    """Running fraction of ones in a keystream prefix."""
    ones = 0
    xs, ys = [], []
    step = max(1, len(bits) // 500)
    for i, c in enumerate(bits, 1):
        ones += c == "1"
        if i % step == 0 or i == len(bits):
            xs.append(i)
            ys.append(ones / i)
    with plt.rc_context(_STYLE):
        fig, ax = _figure()
        ax.plot(xs, ys, lw=1)
        ax.axhline(0.5, color="0.4", lw=0.8, ls="--")
        ax.set_xscale("log")
        ax.set_xlabel("bits read")
        ax.set_ylabel("fraction of ones")
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_candidates(rows, path):
    """Bar chart of enumerated attempts, distinct candidates and plausible ones.

    rows: iterable of (label, enumerated, total, valid).
    """
    rows = list(rows)
    labels = [r[0] for r in rows]
    with plt.rc_context(_STYLE):
        fig, ax = _figure(width=max(4.0, 1.2 * len(rows) + 2))
        width = 0.27
        for j, (name, col) in enumerate((("attempts", 1), ("distinct", 2), ("plausible", 3))):
            ax.bar([i + (j - 1) * width for i in range(len(rows))], [r[col] for r in rows], width, label=name)
        ax.set_yscale("log")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels)
        ax.set_ylabel("count")
        ax.legend(frameon=False)
        _save(fig, path)
