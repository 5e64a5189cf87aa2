"""Seeded term-document style test matrices."""
import numpy as np

from .matrix import SparseTriplets


def gen_synthetic(rows, cols, density, zipf_exponent=1.1, seed=0):
    """Sparse count matrix whose column popularity follows ``j^(-zipf_exponent)``.

    ``round(density·rows·cols)`` nonzeros are shared among columns in
    proportion to popularity (largest remainders get the leftovers, each
    column capped at ``rows``). Rows are drawn without replacement, values are
    geometric counts ``1, 2, ...`` and columns are shuffled at the end so the
    input does not arrive pre-sorted.
    """
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    rng = np.random.default_rng(seed)
    weight = np.arange(1, cols + 1, dtype=np.float64) ** -float(zipf_exponent)
    share = weight / weight.sum() * round(density * rows * cols)
    counts = np.minimum(np.floor(share).astype(np.int64), rows)
    left = int(round(density * rows * cols)) - int(counts.sum())
    for j in np.argsort(-(share - np.floor(share)), kind="stable"):
        if left <= 0:
            break
        if counts[j] < rows:
            counts[j] += 1
            left -= 1
    # spill whatever the caps refused onto columns that still have room
    j = 0
    while left > 0 and j < cols:
        room = min(rows - int(counts[j]), left)
        counts[j] += room
        left -= room
        j += 1

    r = np.concatenate([rng.choice(rows, size=int(k), replace=False) for k in counts])
    c = np.repeat(np.arange(cols), counts)
    vals = rng.geometric(0.5, size=r.size).astype(np.float64)
    shuffle = rng.permutation(cols)
    return SparseTriplets.from_entries(rows, cols, r, shuffle[c], vals)
