"""Logistic regression by iteratively reweighted least squares."""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _kernels
from .core import IvyError

SLOPE_CAP = 30.0


class ConstantCovariate(IvyError, ValueError):
    pass


@dataclass
class LogisticFit:
    intercept: float
    slope: float
    converged: bool
    iterations: int
    separated: bool


def fit_counts(counts, tol=1e-10, max_iter=100):
    """Univariate logistic MLE from a (possibly weighted) 2x2 table.

    ``counts`` is (t+c+, t+c-, t-c+, t-c-) with target t and covariate c, both
    coded ±1. The likelihood is the same as the row-level one, so this is the
    row-level IRLS fit with the data aggregated into its two covariate cells.
    """
    n_pp, n_pm, n_mp, n_mm = (float(v) for v in counts)
    succ = np.array([n_pp, n_pm])
    tot = np.array([n_pp + n_mp, n_pm + n_mm])
    if tot[0] <= 0 or tot[1] <= 0:
        raise ConstantCovariate("covariate takes a single value")
    X = np.array([[1.0, 1.0], [1.0, -1.0]])
    beta = np.zeros(2)
    separated = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        w = tot * p * (1.0 - p)
        grad = X.T @ (succ - tot * p)
        H = X.T @ (w[:, None] * X)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            separated = True
            break
        beta = beta + step
        if np.any(np.abs(beta) > SLOPE_CAP):
            separated = True
            break
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    if separated:
        beta = np.clip(beta, -SLOPE_CAP, SLOPE_CAP)
    return LogisticFit(float(beta[0]), float(beta[1]), converged, it, separated)


def logistic_fit(target, covariate, tol=1e-10, max_iter=100):
    """Fit P(target=+1) = sigmoid(intercept + slope * covariate) for ±1 vectors."""
    target = np.asarray(target)
    covariate = np.asarray(covariate)
    if target.shape != covariate.shape:
        raise ValueError("target and covariate lengths differ")
    if target.shape[0] < 4:
        raise ValueError("need at least 4 samples")
    counts = _kernels.counts_2x2(target.astype(np.int8), covariate.astype(np.int8))
    return fit_counts(counts, tol=tol, max_iter=max_iter)


def loglik_gradient(fit, target, covariate):
    """Gradient of the log-likelihood at ``fit``; zero at the MLE."""
    t = (np.asarray(target) > 0).astype(np.float64)
    c = np.asarray(covariate, dtype=np.float64)
    r = t - expit(fit.intercept + fit.slope * c)
    return np.array([r.sum(), (r * c).sum()])


def fit_multivariate(y01, X, ridge=1e-6, tol=1e-10, max_iter=100, cap=SLOPE_CAP):
    """Multiple logistic regression with intercept; returns (intercept, coefs).

    ``y01`` is 0/1, ``X`` the n x k design without intercept column. A small
    ridge term keeps the normal equations well conditioned; coefficients are
    clipped to ``[-cap, cap]`` under (quasi-)separation.
    """
    X = np.asarray(X, dtype=np.float64)
    n, k = X.shape
    Xa = np.hstack([np.ones((n, 1)), X])
    y01 = np.asarray(y01, dtype=np.float64)
    beta = np.zeros(k + 1)
    reg = ridge * np.eye(k + 1)
    reg[0, 0] = 0.0
    for _ in range(max_iter):
        p = expit(Xa @ beta)
        w = p * (1.0 - p)
        grad = Xa.T @ (y01 - p) - reg @ beta
        H = (Xa * w[:, None]).T @ Xa + reg
        step = np.linalg.solve(H, grad)
        beta = beta + step
        if np.any(np.abs(beta) > cap):
            beta = np.clip(beta, -cap, cap)
            break
        if np.max(np.abs(step)) < tol:
            break
    return float(beta[0]), beta[1:]
