"""Pearson chi-square tests, a sample-size adequacy filter, and Benjamini-Hochberg."""

from __future__ import annotations

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateTable

KOEHLER_MIN_PER_CELL = 5.0
KOEHLER_MIN_EXPECTED = 1.0


def _trim(table) -> np.ndarray:
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise ValueError("contingency table must be 2-D")
    if np.any(t < 0):
        raise ValueError("counts must be non-negative")
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    if t.shape[0] < 2 or t.shape[1] < 2:
        raise DegenerateTable(f"table reduces to shape {t.shape} after dropping empty margins")
    return t


def expected_counts(table) -> np.ndarray:
    t = _trim(table)
    return np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()


def chi2_statistic(table) -> tuple[float, int]:
    """Pearson statistic and degrees of freedom after dropping empty rows/columns."""
    t = _trim(table)
    e = np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()
    stat = float(np.sum((t - e) ** 2 / e))
    return stat, (t.shape[0] - 1) * (t.shape[1] - 1)


def chi2_independence(table) -> float:
    stat, df = chi2_statistic(table)
    return float(chi2.sf(stat, df))


def chi2_gof(observed, expected) -> float:
    """Goodness of fit of counts against a reference law (rescaled to the same total)."""
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or o.ndim != 1:
        raise ValueError("observed and expected must be 1-D and of equal length")
    if np.any(o < 0) or np.any(e < 0):
        raise ValueError("counts must be non-negative")
    if o.sum() == 0 or e.sum() == 0:
        raise DegenerateTable("empty sample")
    e = e * (o.sum() / e.sum())
    if np.any((e == 0) & (o > 0)):
        return 0.0
    keep = e > 0
    if keep.sum() < 2:
        raise DegenerateTable("fewer than two cells with positive expectation")
    stat = float(np.sum((o[keep] - e[keep]) ** 2 / e[keep]))
    return float(chi2.sf(stat, keep.sum() - 1))


def koehler_ok(table, min_per_cell: float = KOEHLER_MIN_PER_CELL, min_expected: float = KOEHLER_MIN_EXPECTED) -> bool:
    """Surrogate adequacy rule: ``n >= 5 * cells`` and every expected count ``>= 1``.

    Raises :class:`DegenerateTable` when a margin leaves fewer than two
    rows or columns.
    """
    t = _trim(table)
    e = np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()
    return bool(t.sum() >= min_per_cell * t.size and np.all(e >= min_expected))


def bh_correct(pvalues, alpha: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up rejections at FDR level ``alpha``."""
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    order = np.argsort(p, kind="stable")
    below = p[order] <= alpha * np.arange(1, m + 1) / m
    reject = np.zeros(m, dtype=bool)
    if below.any():
        k = int(np.max(np.flatnonzero(below)))
        reject[order[: k + 1]] = True
    return reject
