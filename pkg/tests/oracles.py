"""Independent reference implementations used to check the library.

Each oracle computes its quantity the slow, obvious way and shares no
code with ``medalforest``.
"""

import math
from fractions import Fraction

import numpy as np


def best_split_oracle(X, y, rtol=1e-10):
    """Exhaustive best axis split by weighted child variance.

    Returns ``(feature, threshold, gain)`` or ``None``.  Gain is the drop
    from ``var(parent)`` to the size-weighted child variances; ties within
    ``rtol`` of the best go to the lowest feature, then lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    parent = float(np.var(y))
    cands = []
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values, values[1:]):
            thr = (a + b) / 2
            if thr >= b:
                thr = a
            mask = X[:, f] <= thr
            yl, yr = y[mask], y[~mask]
            child = (len(yl) * np.var(yl) + len(yr) * np.var(yr)) / n
            cands.append((parent - child, f, thr))
    if not cands:
        return None
    best = max(c[0] for c in cands)
    if not best > 1e-13 * parent:
        return None
    ties = [c for c in cands if c[0] >= best - rtol * abs(best)]
    gain, f, thr = min(ties, key=lambda c: (c[1], c[2]))
    return f, thr, gain


def normal_equations_trend(years, values, target):
    """Least-squares line through (years, values) pinned at the endpoint nearest ``target``.

    Solves the 2x2 normal equations directly for the slope.
    """
    x = [float(v) for v in years]
    yv = [float(v) for v in values]
    n = len(x)
    sx, sy = sum(x), sum(yv)
    sxx = sum(a * a for a in x)
    sxy = sum(a * b for a, b in zip(x, yv))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    anchor = min(range(n), key=lambda i: abs(x[i] - target))
    return yv[anchor] + slope * (target - x[anchor])


def nearest_rank(values, pct):
    """The ceil(pct/100 * n)-th smallest value, with exact rational arithmetic."""
    v = sorted(values)
    rank = math.ceil(Fraction(pct, 100) * len(v))
    return v[max(rank, 1) - 1]


def quintile_oracle(value, training_values):
    thresholds = [nearest_rank(training_values, p) for p in (20, 40, 60, 80)]
    b = 1
    for t in thresholds:
        if value >= t:
            b += 1
    return min(b, 5)


def grouped_ci_oracle(outputs, scale, group_size=10, n_drop=5):
    """Literal reading of the interval rule.

    Cut the tree outputs into consecutive groups, turn each into a medal
    value, drop the values farthest from their mean and report the range
    of the rest.
    """
    outputs = list(outputs)
    groups = [outputs[i:i + group_size] for i in range(0, len(outputs), group_size)]
    values = [scale * math.exp(math.fsum(g) / len(g)) for g in groups]
    mean = math.fsum(values) / len(values)
    order = sorted(range(len(values)), key=lambda i: (-abs(values[i] - mean), i))
    dropped = set(order[:n_drop])
    kept = [v for i, v in enumerate(values) if i not in dropped]
    return min(kept), max(kept)


def exact_fit_fixture(rng, n_rows, n_features):
    """Regression data with pairwise distinct rows and continuous targets."""
    X = rng.integers(0, 5, size=(n_rows, n_features)).astype(float)
    X[:, 0] = rng.permutation(n_rows)  # distinct rows
    y = rng.normal(size=n_rows)
    return X, y
