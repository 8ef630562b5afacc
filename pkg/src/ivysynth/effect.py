"""Wald-ratio effect estimation with the half-split replicate protocol, and power."""
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .core import EffectReport, IvyError, NumericalFailure
from .logistic import ConstantCovariate, logistic_fit
from .paramlearn import param_learn
from .posterior import posterior

BETA_MIN = 1e-3


class WeakDenominator(IvyError, ArithmeticError):
    pass


class AllReplicatesFailed(NumericalFailure):
    pass


def wald_ratio(fit_y, fit_x, beta_min=BETA_MIN):
    """β_zy / β_zx; raises WeakDenominator when |β_zx| < ``beta_min``."""
    if abs(fit_x.slope) < beta_min:
        raise WeakDenominator(f"|beta_zx| = {abs(fit_x.slope):.3g} < {beta_min:g}")
    return fit_y.slope / fit_x.slope


def sample_summary(p, seed, stream=()):
    """Draw ±1 with P(+1) = p_i; entry i depends only on (seed, stream, i)."""
    p = np.asarray(p, dtype=np.float64)
    u = _kernels.uniforms(_kernels.stream_key(seed, *stream), 0, p.size)
    return np.where(u < p, 1, -1).astype(np.int8)


def half_split(n, seed, r):
    """Disjoint halves (A, B) of range(n) for replicate ``r``; B gets the odd row."""
    perm = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(r)]))).permutation(n)
    half = n // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def wald_on(dataset, rows, p, seed, r):
    """Sample ẑ from ``p`` and return the Wald ratio of y and x on ẑ over ``rows``."""
    z_hat = sample_summary(p, seed, (r, 1))
    fit_x = logistic_fit(dataset.x[rows], z_hat)
    fit_y = logistic_fit(dataset.y[rows], z_hat)
    return wald_ratio(fit_y, fit_x), fit_x.separated or fit_y.separated


def run_replicates(dataset, one, replicates, seed, method, n_jobs=1):
    """Apply ``one(r, A, B) -> (estimate, notes)`` to each half split and summarise.

    Failed replicates (numerical failures, weak denominators, constant
    covariates) are recorded as NaN. Results are ordered by replicate index so
    the report does not depend on ``n_jobs``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")

    def task(r):
        A, B = half_split(dataset.n, seed, r)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                est, notes = one(r, A, B)
            except (NumericalFailure, WeakDenominator, ConstantCovariate, IvyError) as exc:
                est, notes = float("nan"), [f"{type(exc).__name__}: {exc}"]
        notes = list(notes) + [f"{w.category.__name__}: {w.message}" for w in caught]
        return est, notes

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(task, range(replicates)))
    else:
        results = [task(r) for r in range(replicates)]
    est = np.array([e for e, _ in results], dtype=np.float64)
    counts = {}
    for _, notes in results:
        for note in notes:
            counts[note] = counts.get(note, 0) + 1
    diagnostics = [f"{msg} (x{c})" if c > 1 else msg for msg, c in sorted(counts.items())]
    failed = int(np.count_nonzero(~np.isfinite(est)))
    if failed:
        diagnostics.insert(0, f"{failed} of {replicates} replicates missing")
    if failed == replicates:
        raise AllReplicatesFailed(f"{method}: every replicate failed; " + "; ".join(diagnostics[:3]))
    return EffectReport.from_replicates(method, est, dataset.n, diagnostics)


def estimate_effect(dataset, graph, replicates=1000, seed=0, prior_z=0.5, n_jobs=1,
                    relearn_structure=False, structure_kwargs=None, unary=True, unbiased=False):
    """Ivy effect estimate: parameters on half A, ẑ and Wald ratio on half B.

    The structure ``graph`` is fixed across replicates unless
    ``relearn_structure`` is set, in which case it is re-selected on each A.
    """
    from .structlearn import learn_structure

    def one(r, A, B):
        g = graph
        if relearn_structure:
            g = learn_structure(dataset.W[A], **(structure_kwargs or {})).graph
        model = param_learn(dataset.W[A], g, prior_z=prior_z, unbiased=unbiased)
        p = posterior(model, dataset.W[B], g, unary=unary)
        est, sep = wald_on(dataset, B, p, seed, r)
        notes = ["separation in a logistic fit"] if sep else []
        if model.sign_violations:
            notes.append(f"{model.sign_violations} sign-recovery violations")
        return est, notes

    return run_replicates(dataset, one, replicates, seed, "ivy", n_jobs)


def power(n, p1, p0, alpha_xy, beta_zx, level=0.05):
    """Power of the Wald test: 1 - Φ(ζ_{level/2} - √(n p1 p0) |α| |β|)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if abs(p0 + p1 - 1.0) > 1e-12:
        raise ValueError("p0 + p1 must equal 1")
    shift = float(np.sqrt(n * p1 * p0) * abs(alpha_xy) * abs(beta_zx))
    if shift == 0.0:
        return level / 2.0  # Φ(-ζ_δ) = δ by definition of ζ
    return float(ndtr(shift + ndtri(level / 2.0)))
