"""Allele-score summaries (unweighted and weighted) and the raw association."""
import numpy as np
from scipy.special import expit

from .effect import run_replicates, wald_on
from .logistic import ConstantCovariate, fit_multivariate, logistic_fit


def uas_summary(W):
    """Min-max normalised row sum of the candidates; a constant score maps to 0.5."""
    s = np.asarray(W, dtype=np.float64).sum(axis=1)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full(s.shape, 0.5)
    return (s - lo) / (hi - lo)


def was_summary(dataset, train_rows, rows=None):
    """Fitted P(x=+1 | w) from a multiple logistic regression trained on ``train_rows``.

    Probabilities are evaluated on ``rows`` (all rows by default).
    """
    train_rows = np.asarray(train_rows)
    if train_rows.size < dataset.m + 2:
        raise ValueError(f"need at least m + 2 = {dataset.m + 2} training rows")
    W = dataset.W
    y01 = (dataset.x[train_rows] > 0).astype(np.float64)
    b0, b = fit_multivariate(y01, W[train_rows].astype(np.float64))
    Wr = W if rows is None else W[rows]
    return expit(b0 + Wr.astype(np.float64) @ b)


def uas_effect(dataset, replicates=1000, seed=0, n_jobs=1):
    def one(r, A, B):
        est, sep = wald_on(dataset, B, uas_summary(dataset.W[B]), seed, r)
        return est, ["separation in a logistic fit"] if sep else []

    return run_replicates(dataset, one, replicates, seed, "uas", n_jobs)


def was_effect(dataset, replicates=1000, seed=0, n_jobs=1):
    def one(r, A, B):
        est, sep = wald_on(dataset, B, was_summary(dataset, A, B), seed, r)
        return est, ["separation in a logistic fit"] if sep else []

    return run_replicates(dataset, one, replicates, seed, "was", n_jobs)


def association(dataset, replicates=1000, seed=0, n_jobs=1):
    """Slope of y on x, one random half per replicate."""
    if dataset.n < 4:
        raise ValueError("need at least 4 samples")
    if np.all(dataset.x == dataset.x[0]):
        raise ConstantCovariate("x takes a single value")

    def one(r, A, B):
        fit = logistic_fit(dataset.y[B], dataset.x[B])
        return fit.slope, ["separation in a logistic fit"] if fit.separated else []

    return run_replicates(dataset, one, replicates, seed, "association", n_jobs)
