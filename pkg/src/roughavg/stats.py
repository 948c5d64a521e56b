"""Small statistics helpers shared by the diagnostics."""

from __future__ import annotations

import numpy as np
from scipy import stats


def mean_stderr(samples, axis=0):
    s = np.asarray(samples, dtype=float)
    n = s.shape[axis]
    mean = s.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, s.std(axis=axis, ddof=1) / np.sqrt(n)


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("degenerate regression: need at least two positive points")
    if np.ptp(np.log(x)) == 0:
        raise ValueError("degenerate regression: all x equal")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.intercept), float(res.stderr)


def fit_envelope(fit_ratios, holdout_ratios, factor: float = 1.5):
    """Fit ``C = max(fit_ratios)`` and check the holdout against ``factor * C``.

    Returns ``(C, passed, worst_holdout_ratio / C)``.
    """
    c = float(np.max(fit_ratios))
    worst = float(np.max(holdout_ratios))
    rel = worst / c if c > 0 else (0.0 if worst == 0 else np.inf)
    return c, bool(worst <= factor * c), rel


def batch_means(series, n_batches: int = 20):
    """Mean of a correlated series and a batch-means standard error."""
    s = np.asarray(series, dtype=float)
    m = s.size // n_batches
    if m < 1:
        raise ValueError("series shorter than the number of batches")
    b = s[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(s.mean()), float(b.std(ddof=1) / np.sqrt(n_batches))
