"""Posterior P(z = +1 | w) over the valid candidates.

Conditionally independent candidates use the closed-form symmetric channel.
Dependent cliques are fitted by moment matching an Ising model over
(w_C, z) with exact enumeration, then combined as a sum of per-clique
log-likelihood ratios.
"""
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import expit, logit, logsumexp

from . import _kernels
from .datagen import CLIQUE_CAP, CliqueTooLarge

TOL_MM = 1e-8
MAX_NEWTON = 200
STALL_RESIDUAL = 1e-4


class InfeasibleMoments(UserWarning):
    pass


@dataclass
class CliqueConditional:
    members: tuple  # column indices of W
    theta: np.ndarray
    table_pos: np.ndarray  # P(w_C | z=+1), little-endian bit states
    table_neg: np.ndarray  # P(w_C | z=-1)
    residual: float = 0.0
    iterations: int = 0
    shrink: float = 1.0

    def to_dict(self):
        return {
            "members": list(self.members),
            "theta": self.theta.tolist(),
            "table_pos": self.table_pos.tolist(),
            "table_neg": self.table_neg.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "shrink": self.shrink,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["members"]), np.asarray(d["theta"]), np.asarray(d["table_pos"]),
                   np.asarray(d["table_neg"]), d.get("residual", 0.0), d.get("iterations", 0),
                   d.get("shrink", 1.0))


def ci_posterior(W, mu, prior_z=0.5):
    """σ(Σ_j w_j logit((1+μ_j)/2) + logit(prior_z)) for each row of ``W``.

    Accepts a single ±1 row or an n x k matrix.
    """
    W = np.asarray(W, dtype=np.float64)
    weights = logit((1.0 + np.asarray(mu, dtype=np.float64)) / 2.0)
    return expit(W @ weights + logit(prior_z))


def _states(k):
    s = np.arange(2 ** k)
    return 2 * ((s[:, None] >> np.arange(k)) & 1) - 1


def _features(k, unary):
    """Sufficient statistics over joint states (w_C, z); z is the last bit.

    Columns: z, w_j z (k), w_i w_j (pairs), then w_j (k) when ``unary``.
    """
    states = _states(k + 1)
    w, z = states[:, :k], states[:, k]
    cols = [z[:, None], w * z[:, None]]
    pairs = list(combinations(range(k), 2))
    if pairs:
        cols.append(np.stack([w[:, i] * w[:, j] for i, j in pairs], axis=1))
    if unary:
        cols.append(w)
    return np.hstack(cols).astype(np.float64), pairs


def _targets(mu_C, O_C, prior_z, first_C, pairs):
    t = [2.0 * prior_z - 1.0, *mu_C]
    t += [O_C[i, j] for i, j in pairs]
    if first_C is not None:
        t += list(first_C)
    return np.asarray(t, dtype=np.float64)


def _newton_step(F, p, mean, g):
    Fc = F - mean
    H = (Fc * p[:, None]).T @ Fc
    return np.linalg.lstsq(H, g, rcond=None)[0]


def _polish(F, t, theta, p, res, evaluate, steps=3):
    """Extra full Newton steps past the tolerance, kept only while the residual drops."""
    for _ in range(steps):
        mean = p @ F
        cand = theta - _newton_step(F, p, mean, mean - t)
        _, p_new = evaluate(cand)
        res_new = np.max(np.abs(p_new @ F - t))
        if not res_new < res:
            break
        theta, p, res = cand, p_new, res_new
    return theta, res


def _newton(F, t, tol=TOL_MM, max_iter=MAX_NEWTON):
    """Minimise log Z(θ) - θ·t by damped Newton; returns (θ, max residual, iterations)."""
    theta = np.zeros(F.shape[1])

    def evaluate(th):
        lw = F @ th
        lz = logsumexp(lw)
        return lz - th @ t, np.exp(lw - lz)

    f, p = evaluate(theta)
    it = 0
    for it in range(1, max_iter + 1):
        mean = p @ F
        g = mean - t
        res = np.max(np.abs(g))
        if res <= tol:
            return _polish(F, t, theta, p, res, evaluate) + (it - 1,)
        step = _newton_step(F, p, mean, g)
        a = 1.0
        while True:
            cand = theta - a * step
            f_new, p_new = evaluate(cand)
            if f_new <= f or a < 1e-10:
                break
            a *= 0.5
        if f_new > f:
            break
        theta, f, p = cand, f_new, p_new
    res = np.max(np.abs(p @ F - t))
    return theta, res, it


def _conditionals(F, theta, k):
    lw = F @ theta
    half = 2 ** k
    # z is the top bit: states [0, half) have z = -1, [half, 2 half) have z = +1
    neg = np.exp(lw[:half] - logsumexp(lw[:half]))
    pos = np.exp(lw[half:] - logsumexp(lw[half:]))
    return pos, neg


def moment_match_clique(mu_C, O_C, prior_z=0.5, first_moment=None, members=None,
                        tol=TOL_MM, max_iter=MAX_NEWTON):
    """Fit an Ising model over (w_C, z) whose moments equal the targets.

    Matched statistics are E[z] = 2 prior_z - 1, E[w_j z] = mu_C, E[w_i w_j] =
    O_C off-diagonal and, when ``first_moment`` is given, E[w_j]. If the
    targets are not realizable the off-diagonal (and first-moment) targets are
    shrunk toward their conditionally independent values by the smallest
    amount that lets Newton converge, with an ``InfeasibleMoments`` warning.
    """
    mu_C = np.asarray(mu_C, dtype=np.float64)
    k = mu_C.size
    if k > CLIQUE_CAP:
        raise CliqueTooLarge(f"clique of size {k} exceeds cap {CLIQUE_CAP}")
    O_C = np.asarray(O_C, dtype=np.float64).reshape(k, k)
    first = None if first_moment is None else np.asarray(first_moment, dtype=np.float64)
    F, pairs = _features(k, first is not None)
    ci_O = np.outer(mu_C, mu_C)
    ci_first = None if first is None else mu_C * (2.0 * prior_z - 1.0)
    members = tuple(range(k)) if members is None else tuple(members)

    def attempt(s):
        O_s = ci_O + s * (O_C - ci_O)
        f_s = None if first is None else ci_first + s * (first - ci_first)
        t = _targets(mu_C, O_s, prior_z, f_s, pairs)
        return _newton(F, t, tol, max_iter)

    theta, res, it = attempt(1.0)
    shrink = 1.0
    if res > STALL_RESIDUAL:
        lo, hi = 0.0, 1.0
        best = attempt(0.0)
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            out = attempt(mid)
            if out[1] <= STALL_RESIDUAL:
                lo, best = mid, out
            else:
                hi = mid
        theta, res, it = best
        shrink = lo
        warnings.warn(f"clique {members}: moment targets not realizable; "
                      f"dependence shrunk by factor {shrink:.4g}", InfeasibleMoments, stacklevel=2)
    pos, neg = _conditionals(F, theta, k)
    return CliqueConditional(members, theta, pos, neg, float(res), it, shrink)


def singleton_conditional(member, mu_j):
    """Symmetric channel P(w_j = z) = (1 + mu_j) / 2 as a one-member table."""
    a = (1.0 + mu_j) / 2.0
    return CliqueConditional((member,), np.array([0.0, float(np.arctanh(mu_j))]),
                             np.array([1.0 - a, a]), np.array([a, 1.0 - a]))


def fit_cliques(model, graph, unary=True):
    """Per-clique conditionals for ``model``; singletons use the symmetric channel.

    ``unary`` adds per-candidate unary terms (matched to the model's first
    moments) for cliques of size two or more.
    """
    pos = {v: k for k, v in enumerate(model.valid)}
    out = []
    for clique in graph.cliques:
        idx = [pos[v] for v in clique]
        if len(idx) == 1:
            out.append(singleton_conditional(clique[0], model.mu[idx[0]]))
            continue
        first = None
        if unary and model.first_moment is not None:
            first = np.asarray(model.first_moment)[idx]
        O_C = np.asarray(model.second_moment)[np.ix_(idx, idx)]
        out.append(moment_match_clique(model.mu[idx], O_C, model.prior_z, first, members=clique))
    return out


def clique_posterior(W, cliques, prior_z=0.5):
    """P(z=+1 | w) from per-clique conditionals, computed in log space.

    ``W`` holds full candidate rows (columns indexed by ``members``).
    """
    W = np.asarray(W)
    single = W.ndim == 1
    W = np.atleast_2d(W).astype(np.int8)
    members, offsets, lp, ln, toff = [], [0], [], [], []
    base = 0
    for cc in cliques:
        members.extend(cc.members)
        offsets.append(len(members))
        toff.append(base)
        lp.append(np.log(cc.table_pos))
        ln.append(np.log(cc.table_neg))
        base += cc.table_pos.size
    if not cliques:
        llr = np.zeros(W.shape[0])
    else:
        llr = _kernels.clique_loglik(W, members, offsets, np.concatenate(lp), np.concatenate(ln), toff)
    p = expit(llr + logit(prior_z))
    return p[0] if single else p


def posterior(model, W, graph=None, unary=True):
    """Posterior for every row of the full candidate matrix ``W``.

    With no dependent cliques this is :func:`ci_posterior` on the valid
    columns; otherwise per-clique conditionals are fitted (and cached on
    ``model.clique_params``) and combined.
    """
    W = np.asarray(W)
    if graph is None or all(len(c) == 1 for c in graph.cliques):
        return ci_posterior(W[:, list(model.valid)], model.mu, model.prior_z)
    if not model.clique_params:
        model.clique_params = fit_cliques(model, graph, unary=unary)
    return clique_posterior(W, model.clique_params, model.prior_z)
