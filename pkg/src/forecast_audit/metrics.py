"""Scoring kernels: pinball/CRPS family, per-class F1, rank test, summaries."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .errors import ParameterError, UndefinedScaleError
from .series import QuantileForecast

REASONABLE = "reasonable"
UNREASONABLE = "unreasonable"
CLASSES = (REASONABLE, UNREASONABLE)

# The discrete quantile grid the CRPS approximation averages over.
QUANTILE_GRID = tuple(k / 10 for k in range(1, 10))

_LEVEL_TOL = 1e-9


def quantile_loss(y: float, y_hat: float, q: float) -> float:
    """Pinball loss: q*(y - y_hat)+ + (1 - q)*(y_hat - y)+."""
    if not 0 < q < 1:
        raise ParameterError(f"quantile level must be in (0, 1), got {q}")
    return q * max(y - y_hat, 0.0) + (1.0 - q) * max(y_hat - y, 0.0)


def crps(y: float, quantile_preds: Mapping[float, float]) -> float:
    """Twice the mean pinball loss over the nine levels 0.1..0.9.

    `quantile_preds` must carry exactly those nine levels (matched within
    1e-9). A point-mass forecast (all levels equal) collapses to |y - y_hat|.
    """
    if len(quantile_preds) != 9:
        raise ParameterError(
            f"need exactly the nine levels 0.1..0.9, got {len(quantile_preds)} entries"
        )
    keys = list(quantile_preds.keys())
    losses = []
    for q in QUANTILE_GRID:
        match = [k for k in keys if abs(float(k) - q) <= _LEVEL_TOL]
        if not match:
            raise ParameterError(f"missing quantile level {q}")
        losses.append(quantile_loss(y, float(quantile_preds[match[0]]), q))
    return 2.0 * math.fsum(losses) / 9.0


def scrps(actuals, forecast: QuantileForecast) -> float:
    """CRPS summed over the horizon, normalized by the sum of |actuals|."""
    a = np.asarray(actuals, dtype=float)
    if a.ndim != 1 or a.size != forecast.horizon:
        raise ParameterError(
            f"actuals must have horizon length {forecast.horizon}, got {a.shape}"
        )
    scale = float(np.sum(np.abs(a)))
    if scale == 0.0:
        raise UndefinedScaleError("sum of |actuals| is zero; sCRPS has no scale")
    paths = {q: forecast.path_at(q) for q in QUANTILE_GRID}
    total = math.fsum(
        crps(float(a[t]), {q: float(paths[q][t]) for q in QUANTILE_GRID})
        for t in range(a.size)
    )
    return total / scale


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int
    support: int


@dataclass(frozen=True)
class Confusion:
    """Per-class tp/fp/fn counts over the two verdict classes."""

    per_class: dict

    def __post_init__(self):
        for cls, c in self.per_class.items():
            if min(c.tp, c.fp, c.fn, c.support) < 0:
                raise ParameterError(f"negative count for class {cls!r}")

    @property
    def total(self) -> int:
        return sum(c.support for c in self.per_class.values())

    @classmethod
    def from_labels(cls, labels, predictions, classes=CLASSES) -> "Confusion":
        labels = list(labels)
        predictions = list(predictions)
        if len(labels) != len(predictions) or not labels:
            raise ParameterError("labels and predictions must be equal, non-empty")
        known = set(classes)
        for v in labels + predictions:
            if v not in known:
                raise ParameterError(f"unknown class label {v!r}")
        per = {}
        for c in classes:
            tp = sum(1 for y, p in zip(labels, predictions) if y == c and p == c)
            fp = sum(1 for y, p in zip(labels, predictions) if y != c and p == c)
            fn = sum(1 for y, p in zip(labels, predictions) if y == c and p != c)
            per[c] = ClassCounts(tp=tp, fp=fp, fn=fn, support=labels.count(c))
        return cls(per)


def f1_per_class(confusion: Confusion) -> dict:
    """F1 per class; 0 when tp=0 with any fp/fn, 1 when tp=fp=fn=0."""
    out = {}
    for cls, c in confusion.per_class.items():
        if c.tp == 0:
            out[cls] = 1.0 if c.fp == 0 and c.fn == 0 else 0.0
            continue
        precision = c.tp / (c.tp + c.fp)
        recall = c.tp / (c.tp + c.fn)
        out[cls] = 2.0 * precision * recall / (precision + recall)
    return out


def weighted_f1(labels, predictions) -> float:
    """Support-weighted mean of per-class F1 over the two verdict classes."""
    confusion = Confusion.from_labels(labels, predictions)
    f1s = f1_per_class(confusion)
    total = confusion.total
    return math.fsum(
        (c.support / total) * f1s[cls] for cls, c in confusion.per_class.items()
    )


@dataclass(frozen=True)
class RankTestResult:
    u_stat: float
    p_value: float
    n1: int
    n2: int


def mann_whitney_u(a, b) -> RankTestResult:
    """Rank-sum U for sample `a` with a two-sided normal-approximation p.

    U is computed from midranks (U_a = R_a - n1(n1+1)/2, so U_a + U_b =
    n1*n2). The p-value uses the tie-corrected variance and a 0.5 continuity
    correction; if every pooled value is identical (zero variance) p is 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.size < 1 or b.size < 1:
        raise ParameterError("both samples must be non-empty vectors")
    n1, n2 = a.size, b.size
    n = n1 + n2
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u = float(np.sum(ranks[:n1]) - n1 * (n1 + 1) / 2.0)
    mu = n1 * n2 / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        p = 1.0
    else:
        z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return RankTestResult(u_stat=u, p_value=p, n1=n1, n2=n2)


def summary_stats(values, ddof: int = 1) -> dict:
    """{median, mean, std}; median is the midpoint of the two central values
    for even n, std uses ddof=1 (sample) unless configured otherwise."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ParameterError("need a non-empty vector")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # std of n<=ddof is nan
        std = float(np.std(v, ddof=ddof))
    return {"median": float(np.median(v)), "mean": float(np.mean(v)), "std": std}


def pct_diff(a: float, b: float) -> float:
    """100 * (a - b) / b."""
    if b == 0:
        raise ParameterError("reference value is zero; percent difference undefined")
    return 100.0 * (a - b) / b
