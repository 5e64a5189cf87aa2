"""Figures written next to the tabular outputs.

Figures are drawn on explicit ``Figure`` objects with the Agg canvas so no
global pyplot state or display is involved.
"""
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig, path):
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    return path


def plot_singular_values(values, path, reference=None):
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    idx = np.arange(1, len(values) + 1)
    ax.semilogy(idx, values, "o-", ms=3, label="blockwise")
    if reference is not None:
        ref = np.asarray(reference)[: len(values)]
        ax.semilogy(idx[: ref.size], ref, "x", ms=4, label="reference")
        ax.legend()
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_iterations(records, path):
    fig = Figure(figsize=(6, 6))
    top, bottom = fig.subplots(2, 1, sharex=True)
    it = [r.iteration for r in records]
    top.plot(it, [r.trace11 for r in records], "o-", ms=3, label="trace 11")
    top.plot(it, [r.trace22 for r in records], "s-", ms=3, label="trace 22")
    top.set_ylabel("trace")
    top.legend()
    nd = np.array([r.nondiag for r in records])
    bottom.semilogy(it, np.where(nd > 0, nd, np.nan), "o-", ms=3)
    damped = [r.iteration for r in records if r.damped]
    for i in damped:
        bottom.axvline(i, color="0.7", lw=0.8, ls="--")
    bottom.set_ylabel("nondiagonality")
    bottom.set_xlabel("iteration")
    for ax in (top, bottom):
        ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_column_norms(sq_norms_sorted, cut, path):
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    sq = np.asarray(sq_norms_sorted, dtype=np.float64)
    total = sq.sum()
    share = np.cumsum(sq) / total if total else np.zeros_like(sq)
    ax.plot(np.arange(1, sq.size + 1), share)
    ax.axvline(cut, color="C3", ls="--", label=f"cut = {cut}")
    ax.set_xlabel("columns (sorted by norm)")
    ax.set_ylabel("cumulative share of square norm")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
