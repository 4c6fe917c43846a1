"""Exact binomial oracles and the estimators the experiments are scored with."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConventionError, EnsembleToolkitError

ORACLE_MAX_N = 10_000


@dataclass(frozen=True)
class Histogram:
    bins: dict
    total: int

    def __post_init__(self):
        if any(c < 0 for c in self.bins.values()):
            raise EnsembleToolkitError("histogram counts must be non-negative")
        if sum(self.bins.values()) != self.total:
            raise EnsembleToolkitError("histogram total does not match its counts")

    @classmethod
    def from_samples(cls, samples) -> "Histogram":
        counts = Counter(int(s) for s in np.asarray(samples).ravel())
        return cls(dict(counts), sum(counts.values()))

    def probabilities(self) -> dict:
        return {k: v / self.total for k, v in self.bins.items()}


@dataclass(frozen=True)
class ScalingFitResult:
    exponent: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class JointCounts:
    """Contingency table, rows indexed by Bob's bit, columns by Alice's statistic."""

    counts: np.ndarray

    def __post_init__(self):
        table = np.array(self.counts, dtype=np.int64)
        if table.ndim != 2:
            raise EnsembleToolkitError("joint counts must be a 2-D table")
        if np.any(table < 0):
            raise EnsembleToolkitError("joint counts must be non-negative")
        if not np.any(table > 0):
            raise EnsembleToolkitError("joint counts table is all zero")
        object.__setattr__(self, "counts", table)

    @classmethod
    def from_pairs(cls, rows, cols, n_rows: int | None = None, col_values=None) -> "JointCounts":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols)
        col_values = sorted(set(cols.tolist())) if col_values is None else list(col_values)
        col_index = {v: i for i, v in enumerate(col_values)}
        n_rows = int(rows.max()) + 1 if n_rows is None else n_rows
        table = np.zeros((n_rows, len(col_values)), dtype=np.int64)
        np.add.at(table, (rows, np.array([col_index[v] for v in cols.tolist()], dtype=np.int64)), 1)
        return cls(table)


def _check_oracle_n(n):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= ORACLE_MAX_N:
        raise EnsembleToolkitError(f"exact oracle needs 1 <= n <= {ORACLE_MAX_N}, got {n!r}")


@lru_cache(maxsize=64)
def binomial_exact(n: int) -> dict[int, Fraction]:
    """Exact law of the sum of ``n`` iid fair +-1 variables: {s: P(sum = s)}."""
    _check_oracle_n(n)
    denom = 1 << n
    out = {}
    c = 1
    for k in range(n + 1):
        # k = number of +1 outcomes
        out[2 * k - n] = Fraction(c, denom)
        c = c * (n - k) // (k + 1)
    return out


def binomial_logspace(n: int) -> dict[int, float]:
    """Floating-point version of :func:`binomial_exact` for any ``n >= 1``.

    Evaluated through ``lgamma``; relative error stays below about 1e-10 for
    the probabilities that are not negligibly small.
    """
    if n < 1:
        raise EnsembleToolkitError(f"n must be >= 1, got {n}")
    log_norm = math.lgamma(n + 1) - n * math.log(2.0)
    return {
        2 * k - n: math.exp(log_norm - math.lgamma(k + 1) - math.lgamma(n - k + 1))
        for k in range(n + 1)
    }


def prob_sum_zero(n: int) -> Fraction:
    """P(sum of ``n`` fair +-1 variables is 0) = C(n, n/2) / 2^n; 0 for odd n."""
    if n % 2:
        return Fraction(0)
    return Fraction(math.comb(n, n // 2), 1 << n)


def expected_abs_imbalance(n: int) -> Fraction:
    """E|N_up - n/2| for N_up ~ Binomial(n, 1/2), exactly."""
    if n % 2:
        raise ConventionError(f"expected imbalance is defined for even n only, got {n}")
    law = binomial_exact(n)
    # imbalance = sum / 2
    return sum((Fraction(abs(s), 2) * p for s, p in law.items()), Fraction(0))


def tv_distance(a, b) -> float:
    """Total-variation distance between two histograms (or probability dicts)."""
    pa, pb = _normalized(a), _normalized(b)
    support = set(pa) | set(pb)
    return 0.5 * math.fsum(abs(pa.get(s, 0.0) - pb.get(s, 0.0)) for s in support)


def _normalized(h) -> dict:
    if isinstance(h, Histogram):
        if h.total < 1:
            raise EnsembleToolkitError("histogram is empty")
        return h.probabilities()
    probs = {k: float(v) for k, v in dict(h).items()}
    if not probs or math.fsum(probs.values()) <= 0:
        raise EnsembleToolkitError("distribution is empty")
    return probs


def mutual_information_bits(j) -> float:
    """Plug-in mutual information (bits) of a contingency table, no bias correction."""
    table = j.counts if isinstance(j, JointCounts) else JointCounts(j).counts
    p = table / table.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def scaling_fit(points) -> ScalingFitResult:
    """Least-squares line through (log n, log value)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise EnsembleToolkitError(f"scaling fit needs at least 3 points, got {len(pts)}")
    if any(n <= 0 or v <= 0 for n, v in pts):
        raise EnsembleToolkitError("scaling fit needs positive n and values")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ScalingFitResult(float(slope), float(intercept), min(1.0, max(0.0, r2)))


def variance_estimate(samples) -> float:
    """Unbiased sample variance."""
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        raise EnsembleToolkitError("variance needs at least 2 samples")
    return float(np.var(arr, ddof=1))


def sign_class(values) -> np.ndarray:
    """Discretize sums to -1, 0, +1."""
    return np.sign(np.asarray(values)).astype(np.int64)


def chi_square_pvalue(observed: Histogram, law: dict, min_expected: float = 5.0) -> float:
    """Goodness-of-fit p-value of a histogram against an exact law.

    Support points are pooled from the tails inward until every pooled cell
    expects at least ``min_expected`` counts.
    """
    from scipy import stats as sps

    support = sorted(law)
    expected = np.array([float(law[s]) * observed.total for s in support])
    counts = np.array([observed.bins.get(s, 0) for s in support], dtype=float)
    stray = observed.total - counts.sum()
    if stray:
        raise EnsembleToolkitError(f"{int(stray)} observations fall outside the law's support")
    cells_e, cells_o = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(expected, counts):
        acc_e += e
        acc_o += o
        if acc_e >= min_expected:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e or acc_o:
        cells_e[-1] += acc_e
        cells_o[-1] += acc_o
    # the left-to-right pooling can leave a small last-but-one cell; merge it too
    while len(cells_e) > 1 and cells_e[-1] < min_expected:
        cells_e[-2] += cells_e.pop()
        cells_o[-2] += cells_o.pop()
    return float(sps.chisquare(cells_o, cells_e).pvalue)
