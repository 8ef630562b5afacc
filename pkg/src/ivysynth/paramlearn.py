"""Recover candidate accuracies E[w_j z] from observed second moments.

For candidates i, j that are conditionally independent given z,
E[w_i w_j] = E[w_i z] E[w_j z], so log E²[w_i z] + log E²[w_j z] = log Ô_ij².
Stacking one such row per pair gives an overdetermined linear system in the
log-squared accuracies; signs follow from the signs of Ô_ij.
"""
import warnings
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import IvyError, IvyModel, TooFewValid

EPS_CLIP = 1e-3


class RankDeficient(IvyError, ValueError):
    pass


class DroppedPairs(UserWarning):
    pass


class DisconnectedSignGraph(UserWarning):
    pass


@dataclass
class MomentSystem:
    pairs: list
    M: np.ndarray
    q: np.ndarray
    dropped_pairs: list = field(default_factory=list)

    @property
    def r_min(self):
        return float(np.exp(self.q.min() / 2)) if self.q.size else 0.0


def cond_indep_pairs(graph):
    """Pairs of valid candidates (as positions in ``graph.valid``) in different cliques."""
    pos = {v: k for k, v in enumerate(graph.valid)}
    label = {}
    for c_id, clique in enumerate(graph.cliques):
        for v in clique:
            label[v] = c_id
    return [
        (pos[i], pos[j])
        for i, j in combinations(graph.valid, 2)
        if label[i] != label[j]
    ]


def o_floor(n=None):
    return max(1.0 / n, 1e-8) if n else 1e-8


def build_system(O_hat, pairs, eps_o=1e-8):
    """Rows of the log-moment system for usable pairs; checks full column rank."""
    O_hat = np.asarray(O_hat, dtype=np.float64)
    k = O_hat.shape[0]
    used, dropped = [], []
    for i, j in pairs:
        (used if abs(O_hat[i, j]) >= eps_o else dropped).append((i, j))
    if dropped:
        warnings.warn(f"{len(dropped)} pairs dropped for |Ô_ij| < {eps_o:g}", DroppedPairs, stacklevel=2)
    M = np.zeros((len(used), k))
    q = np.empty(len(used))
    for r, (i, j) in enumerate(used):
        M[r, i] = M[r, j] = 1.0
        q[r] = np.log(O_hat[i, j] ** 2)
    if len(used) < k or np.linalg.matrix_rank(M) < k:
        partners = np.zeros(k, dtype=int)
        for i, j in used:
            partners[i] += 1
            partners[j] += 1
        weak = np.flatnonzero(partners < 2).tolist()
        raise RankDeficient(f"moment system is rank deficient (candidates with < 2 partners: {weak})")
    return MomentSystem(used, M, q, dropped)


def solve_log_accuracies(system):
    """Least-squares ℓ̂ = argmin ‖Mℓ - q‖ via QR."""
    Q, R = np.linalg.qr(system.M)
    return np.linalg.solve(R, Q.T @ system.q)


def solve_magnitudes(system, eps_clip=EPS_CLIP, clip=True):
    ell = solve_log_accuracies(system)
    mag = np.exp(ell / 2.0)
    return np.clip(mag, 0.0, 1.0 - eps_clip) if clip else mag


def recover_signs(abs_mu, O_hat, pairs, eps_o=1e-8):
    """Signs from s_i s_j = sign(Ô_ij) by BFS; returns (mu, violations).

    Each connected component of the pair graph is flipped so its
    magnitude-weighted sign sum is positive (valid candidates agree with z
    more often than not).
    """
    abs_mu = np.asarray(abs_mu, dtype=np.float64)
    k = abs_mu.size
    adj = [[] for _ in range(k)]
    for i, j in pairs:
        if abs(O_hat[i, j]) >= eps_o:
            s = 1 if O_hat[i, j] > 0 else -1
            adj[i].append((j, s))
            adj[j].append((i, s))
    signs = np.zeros(k, dtype=int)
    violations = 0
    components = 0
    for root in range(k):
        if signs[root]:
            continue
        components += 1
        signs[root] = 1
        members = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, s in adj[u]:
                if not signs[v]:
                    signs[v] = signs[u] * s
                    members.append(v)
                    queue.append(v)
        for u in members:
            for v, s in adj[u]:
                if u < v and signs[u] * signs[v] != s:
                    violations += 1
        if np.dot(signs[members], abs_mu[members]) < 0:
            signs[members] *= -1
    if components > 1:
        warnings.warn(f"sign graph has {components} components; each flipped independently",
                      DisconnectedSignGraph, stacklevel=2)
    return signs * abs_mu, violations


def second_moment(W_valid, unbiased=False):
    W = np.asarray(W_valid, dtype=np.float64)
    n = W.shape[0]
    return W.T @ W / (n - 1 if unbiased else n)


def param_learn(W, graph, prior_z=0.5, pairs=None, unbiased=False, eps_clip=EPS_CLIP, eps_o=None):
    """Mean parameters (μ̂, Ô) over ``graph.valid``; ``pairs`` overrides Ω̂."""
    if len(graph.valid) < 3:
        raise TooFewValid(f"need at least 3 valid candidates, got {len(graph.valid)}")
    W = np.asarray(W)
    Wv = W[:, list(graph.valid)]
    n = Wv.shape[0]
    eps_o = o_floor(n) if eps_o is None else eps_o
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        O_hat = second_moment(Wv, unbiased)
        pairs = cond_indep_pairs(graph) if pairs is None else list(pairs)
        system = build_system(O_hat, pairs, eps_o)
        mag = solve_magnitudes(system, eps_clip)
        mu, violations = recover_signs(mag, O_hat, system.pairs, eps_o)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return IvyModel(
        valid=tuple(graph.valid),
        mu=mu,
        second_moment=O_hat,
        prior_z=prior_z,
        first_moment=Wv.mean(axis=0),
        sign_violations=violations,
        dropped_pairs=[(graph.valid[i], graph.valid[j]) for i, j in system.dropped_pairs],
        warnings=[str(w.message) for w in caught],
    )


def param_learn_moments(O, graph, prior_z=0.5, first_moment=None, eps_clip=EPS_CLIP, clip=True, pairs=None):
    """Same as :func:`param_learn` but from a population second-moment matrix."""
    O = np.asarray(O, dtype=np.float64)
    pairs = cond_indep_pairs(graph) if pairs is None else list(pairs)
    system = build_system(O, pairs)
    mag = solve_magnitudes(system, eps_clip, clip=clip)
    mu, violations = recover_signs(mag, O, system.pairs)
    return IvyModel(tuple(graph.valid), mu, O, prior_z, first_moment, sign_violations=violations)
