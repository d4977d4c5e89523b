"""Statistical tests used by the benchmark harness.

Levene's variance test, Welch's one-tailed t-test, Bonferroni correction,
and an exact one-sided sign test. The F and t distribution functions are
computed here from the regularized incomplete beta function (continued
fraction evaluation) so the harness carries its own reference
implementation; tests cross-check it against an independent one.
"""

import math

import numpy as np

from .errors import DegenerateGroups

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-16
_BETACF_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0.0:
        return 0.0
    return regularized_incomplete_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


def t_cdf(x: float, df: float) -> float:
    """CDF of Student's t distribution with df degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + x * x))
    return 1.0 - tail if x >= 0.0 else tail


def levene_test(groups) -> tuple:
    """Levene's W over absolute deviations from each group's mean.

    Returns (W, p) with p from F(k-1, N-k). Raises `DegenerateGroups` when
    every observation sits exactly on its group mean, which leaves the
    statistic undefined.
    """
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2 or any(a.size < 2 for a in arrays):
        raise ValueError("need at least two groups of two observations")
    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    devs = [np.abs(a - a.mean()) for a in arrays]
    group_means = np.array([d.mean() for d in devs])
    grand = sum(d.sum() for d in devs) / n_total
    numer = sum(d.size * (m - grand) ** 2 for d, m in zip(devs, group_means))
    denom = sum(((d - m) ** 2).sum() for d, m in zip(devs, group_means))
    if denom == 0.0:
        if numer == 0.0:
            raise DegenerateGroups("no variation in absolute deviations")
        return math.inf, 0.0
    w = (n_total - k) / (k - 1) * numer / denom
    return float(w), 1.0 - f_cdf(w, k - 1, n_total - k)


def welch_t_one_tailed(a, b, alternative: str = "greater") -> tuple:
    """Welch's unequal-variance t-test with a one-sided p-value.

    alternative "greater" tests mean(a) > mean(b); "less" the reverse.
    """
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise DegenerateGroups("both samples have zero variance")
    sa, sb = va / a.size, vb / b.size
    se = math.sqrt(sa + sb)
    t = (a.mean() - b.mean()) / se
    df = (sa + sb) ** 2 / (sa ** 2 / (a.size - 1) + sb ** 2 / (b.size - 1))
    p_greater = 1.0 - t_cdf(t, df)
    p = p_greater if alternative == "greater" else 1.0 - p_greater
    return float(t), float(p)


def bonferroni(p_values) -> list:
    """min(1, p·m) for each of the m p-values."""
    ps = [float(p) for p in p_values]
    if any(p < 0.0 or p > 1.0 for p in ps):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(ps)
    return [min(1.0, p * m) for p in ps]


def sign_test_one_sided(differences) -> tuple:
    """Exact binomial sign test for median(differences) > 0.

    Zero differences are dropped. Returns (wins, n_nonzero, p) where p is
    the probability of at least `wins` positives under a fair coin.
    """
    diffs = np.asarray(differences, dtype=np.float64)
    nonzero = diffs[diffs != 0.0]
    n = int(nonzero.size)
    if n == 0:
        return 0, 0, 1.0
    wins = int((nonzero > 0.0).sum())
    p = sum(math.comb(n, j) for j in range(wins, n + 1)) / 2.0 ** n
    return wins, n, float(p)
