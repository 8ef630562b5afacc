"""Valid-candidate and dependency learning via sparse + rank-one decomposition.

The inverse covariance of the observed candidates is the sparse precision block
of (w, z) minus a rank-one term carried by the latent z. We split
``A = S - L`` by minimising

    ½ tr(A Σ̂ A) - tr(A) + λ (γ ‖S‖₁ + tr L),   L ⪰ 0,  S - L ⪰ ε I,

read validity off ``|Σ̂ ℓ|`` where ``ℓℓᵀ`` is the best rank-one fit of ``L``,
and dependencies off the large off-diagonal entries of ``S``.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import CandidateGraph, IvyError, TooFewValid


class NotConverged(UserWarning):
    pass


class DegenerateColumn(UserWarning):
    pass


class NoQualifyingModel(UserWarning):
    pass


class NonFiniteObjective(IvyError, FloatingPointError):
    pass


EPS_PD = 1e-6
TOL_OPT = 1e-6
MAX_ITER = 5000
RATIO_FLOOR = 1e-12
NOISE_WIDTH = 3.0


@dataclass
class DecompositionResult:
    S: np.ndarray
    L: np.ndarray
    ell: np.ndarray
    objective_trace: list
    converged: bool
    iterations: int = 0
    feasibility_trace: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class Hyperparams:
    lam: float
    gamma: float
    t1: float
    t2: float = math.inf

    def __post_init__(self):
        if not (self.lam > 0 and self.gamma > 0):
            raise ValueError("lambda and gamma must be positive")
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("thresholds must be non-negative")


@dataclass
class StructureResult:
    graph: CandidateGraph
    hyper: Hyperparams
    scores: np.ndarray
    decomposition: DecompositionResult
    sigma: np.ndarray
    kept: np.ndarray


def sample_covariance(W):
    """Σ̂ = (1/n) Σ wwᵀ - w̄w̄ᵀ; warns on constant columns."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = W.mean(axis=0)
    sigma = W.T @ W / n - np.outer(mean, mean)
    sigma = 0.5 * (sigma + sigma.T)
    const = np.flatnonzero(np.diag(sigma) <= 1e-12)
    if const.size:
        warnings.warn(f"constant candidate columns {const.tolist()}", DegenerateColumn, stacklevel=2)
    return sigma


def soft_threshold(X, thresh):
    return np.sign(X) * np.maximum(np.abs(X) - thresh, 0.0)


def psd_soft_threshold(X, thresh):
    """Prox of thresh·tr(·) over the PSD cone: shrink eigenvalues, clamp at zero."""
    vals, vecs = np.linalg.eigh(0.5 * (X + X.T))
    vals = np.maximum(vals - thresh, 0.0)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _smooth(A, sigma):
    return 0.5 * np.einsum("ij,jk,ki->", A, sigma, A) - np.trace(A)


def _grad(A, sigma):
    G = 0.5 * (sigma @ A + A @ sigma)
    G[np.diag_indices_from(G)] -= 1.0
    return G


def _objective(S, L, sigma, lam, gamma):
    return _smooth(S - L, sigma) + lam * (gamma * np.abs(S).sum() + np.trace(L))


def _min_eig(X):
    return float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])


def decompose(sigma, lam, gamma, eps_pd=EPS_PD, tol=TOL_OPT, max_iter=MAX_ITER, backtrack=0.5):
    """Alternating proximal gradient on (S, L) with feasibility backtracking."""
    sigma = np.asarray(sigma, dtype=np.float64)
    m = sigma.shape[0]
    if m < 3:
        raise ValueError("need at least 3 candidates")
    step0 = 1.0 / np.linalg.norm(sigma, 2)
    vals, vecs = np.linalg.eigh(sigma)
    # start at the loss minimiser Σ̂⁻¹, eigenvalues capped so it stays feasible
    inv_vals = 1.0 / np.maximum(vals, 1e-8)
    S = (vecs * np.maximum(inv_vals, 2 * eps_pd)) @ vecs.T
    S = 0.5 * (S + S.T)
    L = np.zeros_like(S)
    obj = _objective(S, L, sigma, lam, gamma)
    trace = [obj]
    feas = [_min_eig(S - L)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for block in ("S", "L"):
            A = S - L
            G = _grad(A, sigma)
            f0 = _smooth(A, sigma)
            t = step0
            for _ in range(60):
                if block == "S":
                    S_new = soft_threshold(S - t * G, t * lam * gamma)
                    S_new = 0.5 * (S_new + S_new.T)
                    D = S_new - S
                    A_new = S_new - L
                else:
                    L_new = psd_soft_threshold(L + t * G, t * lam)
                    D = L_new - L
                    A_new = S - L_new
                    D = -D  # change of A
                f1 = _smooth(A_new, sigma)
                ok = f1 <= f0 + np.sum(G * D) + np.sum(D * D) / (2 * t) + 1e-12 * max(1.0, abs(f0))
                if ok and _min_eig(A_new) >= eps_pd:
                    break
                t *= backtrack
            else:
                S_new, L_new = S, L  # no admissible step; stay put
                A_new = S - L
            if block == "S":
                S = S_new
            else:
                L = L_new
        new_obj = _objective(S, L, sigma, lam, gamma)
        if not np.isfinite(new_obj):
            raise NonFiniteObjective("objective became non-finite")
        trace.append(new_obj)
        feas.append(_min_eig(S - L))
        if abs(obj - new_obj) <= tol * max(1.0, abs(obj)):
            converged = True
            obj = new_obj
            break
        obj = new_obj
    if not converged:
        warnings.warn(f"decomposition stopped after {max_iter} iterations", NotConverged, stacklevel=2)
    return DecompositionResult(S, L, rank_one_factor(L), trace, converged, it, feas)


def rank_one_factor(L):
    """ℓ = sqrt(max(λ₁, 0)) v₁, sign fixed so the largest-magnitude entry is positive."""
    L = np.asarray(L, dtype=np.float64)
    vals, vecs = np.linalg.eigh(0.5 * (L + L.T))
    ell = math.sqrt(max(vals[-1], 0.0)) * vecs[:, -1]
    if ell.size and ell[np.argmax(np.abs(ell))] < 0:
        ell = -ell
    return ell


def validity_scores(sigma, ell):
    return np.abs(sigma @ ell)


def tukey_fence(values):
    """Smallest value above Q3 + 1.5·IQR, or +inf when nothing is an outlier."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.inf
    q1, q3 = np.percentile(v, [25.0, 75.0])
    fence = q3 + 1.5 * (q3 - q1)
    out = v[v > fence]
    return float(out.min()) if out.size else math.inf


def _offdiag_upper(S, idx):
    sub = S[np.ix_(idx, idx)]
    iu = np.triu_indices(len(idx), k=1)
    return np.abs(sub[iu])


def _graph_from(S, scores, kept, t1, t2):
    valid_local = np.flatnonzero(scores >= t1)
    valid = [int(kept[j]) for j in valid_local]
    edges = set()
    for a in range(len(valid_local)):
        for b in range(a + 1, len(valid_local)):
            i, j = valid_local[a], valid_local[b]
            if abs(S[i, j]) >= t2:
                edges.add((valid[a], valid[b]))
    return CandidateGraph(tuple(valid), frozenset(edges))


def _prepare(W):
    W = np.asarray(W)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateColumn)
        sigma_full = sample_covariance(W)
    kept = np.flatnonzero(np.diag(sigma_full) > 1e-12)
    if kept.size < W.shape[1]:
        dropped = sorted(set(range(W.shape[1])) - set(kept.tolist()))
        warnings.warn(f"constant candidate columns {dropped} marked invalid", DegenerateColumn, stacklevel=3)
    return sigma_full[np.ix_(kept, kept)], kept


def structure_learn(W, hyper, details=False):
    """Valid set and dependency edges for fixed hyperparameters."""
    sigma, kept = _prepare(W)
    if kept.size < 3:
        raise TooFewValid(f"only {kept.size} non-constant candidates")
    dec = decompose(sigma, hyper.lam, hyper.gamma)
    scores = validity_scores(sigma, dec.ell)
    graph = _graph_from(dec.S, scores, kept, hyper.t1, hyper.t2)
    if len(graph.valid) < 3:
        raise TooFewValid(f"{len(graph.valid)} candidates pass the validity threshold {hyper.t1:g}")
    full_scores = np.zeros(np.asarray(W).shape[1])
    full_scores[kept] = scores
    res = StructureResult(graph, hyper, full_scores, dec, sigma, kept)
    return res if details else graph


def score_noise_floor(sigma, ell, n, width=NOISE_WIDTH):
    """Sampling noise level of a validity score whose population value is zero."""
    return width * math.sqrt(max(float(ell @ sigma @ ell), 0.0) / n)


def gap_statistics(scores, floor=RATIO_FLOOR, floor_gap=False):
    """(τ, t): largest consecutive ratio of ascending scores and the count below it.

    Denominators are floored at ``floor`` so ratios between scores that are
    both indistinguishable from zero cannot produce a spurious gap. With
    ``floor_gap`` the floor also acts as a virtual lowest score, so when even
    the smallest score stands far above the noise level the largest gap can be
    the one below every candidate (t = 0, all candidates valid).
    """
    s = np.sort(np.asarray(scores, dtype=np.float64))
    floor = max(floor, RATIO_FLOOR)
    if floor_gap:
        s = np.concatenate([[floor], s])
    if s.size < 2:
        return 1.0, 0
    ratios = s[1:] / np.maximum(s[:-1], floor)
    k = int(np.argmax(ratios))
    return float(ratios[k]), k if floor_gap else k + 1


def selection_score(tau, t, m):
    if tau <= 10.0:
        return 0.0
    return math.log(tau) * math.exp(m - t)


def threshold_from_gap(scores, t, xi):
    """T1 taken ξ·(m - t) places from the top, clamped to the block above the gap."""
    s = np.sort(np.asarray(scores, dtype=np.float64))
    m = s.size
    above = m - t
    pos = int(min(max(math.ceil(xi * above), 1), above))
    return float(s[m - pos])


def default_grid(m, n):
    scale = math.sqrt(m / n)
    return [c * scale for c in (0.01, 0.05, 0.1, 0.5)], [0.5, 1.0, 2.0, 4.0]


def select_model(W, lambda_grid=None, gamma_grid=None, xi=2, details=False):
    """Score-based choice of (λ, γ, T1, T2) over a grid."""
    W = np.asarray(W)
    sigma, kept = _prepare(W)
    if kept.size < 3:
        raise TooFewValid(f"only {kept.size} non-constant candidates")
    dl, dg = default_grid(kept.size, W.shape[0])
    lambda_grid = list(lambda_grid) if lambda_grid is not None else dl
    gamma_grid = list(gamma_grid) if gamma_grid is not None else dg
    if not lambda_grid or not gamma_grid:
        raise ValueError("hyperparameter grids must be non-empty")
    m = kept.size
    best = None
    for lam in lambda_grid:
        for gamma in gamma_grid:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NotConverged)
                dec = decompose(sigma, lam, gamma)
            scores = validity_scores(sigma, dec.ell)
            tau, t = gap_statistics(scores, score_noise_floor(sigma, dec.ell, W.shape[0]), floor_gap=True)
            cand = (selection_score(tau, t, m), tau, lam, gamma, dec, scores, t)
            if best is None or cand[:2] > best[:2]:
                best = cand
    score, tau, lam, gamma, dec, scores, t = best
    if score == 0.0:
        warnings.warn("no grid point has a ratio gap above 10; using the largest gap",
                      NoQualifyingModel, stacklevel=2)
    t1 = threshold_from_gap(scores, t, xi)
    valid_local = np.flatnonzero(scores >= t1)
    t2 = tukey_fence(_offdiag_upper(dec.S, valid_local)) if valid_local.size >= 2 else math.inf
    hyper = Hyperparams(lam, gamma, t1, t2)
    if not details:
        return hyper
    graph = _graph_from(dec.S, scores, kept, t1, t2)
    full_scores = np.zeros(W.shape[1])
    full_scores[kept] = scores
    return StructureResult(graph, hyper, full_scores, dec, sigma, kept)


def learn_structure(W, lambda_grid=None, gamma_grid=None, xi=2):
    """Model selection followed by structure learning; returns a StructureResult."""
    res = select_model(W, lambda_grid, gamma_grid, xi, details=True)
    if len(res.graph.valid) < 3:
        raise TooFewValid(f"model selection kept {len(res.graph.valid)} candidates")
    return res
