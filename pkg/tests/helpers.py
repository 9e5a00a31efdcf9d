"""Independent oracles used to freeze expected values.

Entropies are evaluated with 50-digit mpmath arithmetic, the symmetric-kernel
entropy rate additionally by brute-force row entropy, and chi-squared
goodness-of-fit p-values through the regularized incomplete gamma function.
None of these paths share code with the library under test.
"""

from __future__ import annotations

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def oracle_binary_entropy(p) -> float:
    p = mp.mpf(p)
    return float(-p * mp.log(p) - (1 - p) * mp.log(1 - p))


def oracle_entropy_rate(p, q) -> float:
    p, q = mp.mpf(p), mp.mpf(q)
    hp = -p * mp.log(p) - (1 - p) * mp.log(1 - p)
    hq = -q * mp.log(q) - (1 - q) * mp.log(1 - q)
    return float((q * hp + p * hq) / (p + q))


def oracle_marginal_entropy(p, q) -> float:
    pi1 = mp.mpf(p) / (mp.mpf(p) + mp.mpf(q))
    return float(-pi1 * mp.log(pi1) - (1 - pi1) * mp.log(1 - pi1))


def oracle_symmetric_rate(p, n_states: int) -> float:
    """Brute force: -sum_j P_ij ln P_ij of one row (all rows identical up to
    permutation, stationary law uniform)."""
    p = mp.mpf(p)
    row = [1 - p] + [p / (n_states - 1)] * (n_states - 1)
    return float(-sum(x * mp.log(x) for x in row))


def chi2_pvalue(statistic: float, dof: int) -> float:
    """Upper-tail p-value of the chi-squared distribution."""
    return float(mp.gammainc(mp.mpf(dof) / 2, mp.mpf(statistic) / 2, mp.inf, regularized=True))


def chi2_gof(counts: np.ndarray, expected: np.ndarray) -> float:
    """Goodness-of-fit p-value for observed counts against expected counts."""
    statistic = float(((counts - expected) ** 2 / expected).sum())
    return chi2_pvalue(statistic, len(counts) - 1)
