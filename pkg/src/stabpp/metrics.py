"""Selection accuracy metrics and the feature-selection stability statistic."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SelectionOutcome:
    selected: np.ndarray
    truth: np.ndarray
    error: str | None = None

    def __post_init__(self):
        s = np.asarray(self.selected, dtype=bool).ravel()
        t = np.asarray(self.truth, dtype=bool).ravel()
        if s.shape != t.shape:
            raise ValueError("selected and truth must have equal length")
        object.__setattr__(self, "selected", s)
        object.__setattr__(self, "truth", t)

    @classmethod
    def from_support(cls, support, truth_support, p: int, error=None) -> "SelectionOutcome":
        s = np.zeros(p, dtype=bool)
        t = np.zeros(p, dtype=bool)
        s[np.asarray(support, dtype=int)] = True
        t[np.asarray(truth_support, dtype=int)] = True
        return cls(s, t, error)


@dataclass(frozen=True)
class MetricsReport:
    tpr: float
    fpr: float
    ppv: float
    f1: float
    phi_s: float
    empirical_pfer: float
    reps: int
    failures: int = 0


def _rep_metrics(o: SelectionOutcome):
    s, t = o.selected, o.truth
    tp = np.sum(s & t)
    fp = np.sum(s & ~t)
    n_pos, n_neg = t.sum(), (~t).sum()
    tpr = tp / n_pos if n_pos else np.nan
    fpr = fp / n_neg if n_neg else np.nan
    if s.any():
        ppv = tp / s.sum()
    else:
        ppv = 0.0 if n_pos else np.nan
    if np.isnan(tpr) or np.isnan(ppv):
        f1 = np.nan
    elif tpr + ppv == 0:
        f1 = 0.0
    else:
        f1 = 2 * tpr * ppv / (tpr + ppv)
    return tpr, fpr, ppv, f1, float(fp)


def confusion_metrics(outcomes) -> tuple[float, float, float, float, float]:
    """Mean ``(tpr, fpr, ppv, f1, empirical_pfer)`` over repetitions.

    An empty selection has PPV 0 when the truth is nonempty, and F1 is 0
    when TPR and PPV are both 0. Undefined per-rep values are skipped.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("need at least one outcome")
    rows = np.array([_rep_metrics(o) for o in outcomes], dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan columns
        means = np.nanmean(rows, axis=0)
    return tuple(float(v) for v in means)


def phi_s(outcomes) -> float:
    """Stability ``1 - mean_f s_f^2 / ((k/p)(1 - k/p))``; ``nan`` when ``k`` is 0 or ``p``."""
    sel = np.array([o.selected for o in outcomes], dtype=float)
    M, p = sel.shape
    if M < 2:
        raise ValueError("stability needs at least two repetitions")
    k_bar = sel.sum(axis=1).mean()
    if k_bar <= 0 or k_bar >= p:
        return float("nan")
    pf = sel.mean(axis=0)
    s2 = M / (M - 1) * pf * (1 - pf)
    return float(1 - s2.mean() / ((k_bar / p) * (1 - k_bar / p)))


def report(outcomes) -> MetricsReport:
    outcomes = list(outcomes)
    tpr, fpr, ppv, f1, pfer = confusion_metrics(outcomes)
    ph = phi_s(outcomes) if len(outcomes) >= 2 else float("nan")
    return MetricsReport(tpr, fpr, ppv, f1, ph, pfer, len(outcomes),
                         sum(o.error is not None for o in outcomes))
