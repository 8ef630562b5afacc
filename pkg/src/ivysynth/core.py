"""Shared domain types, input validation and candidate orientation."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class IvyError(Exception):
    """Base class for all library errors."""


class NonBinaryValue(IvyError, ValueError):
    def __init__(self, row, col, value=None):
        self.row, self.col = row, col
        super().__init__(f"entry at row {row}, column {col!r} is {value!r}; expected -1 or +1")


class ShapeMismatch(IvyError, ValueError):
    pass


class NumericalFailure(IvyError):
    """Raised for failures the CLI maps to exit code 3."""


class TooFewValid(NumericalFailure):
    pass


def as_pm1(a):
    return np.asarray(a, dtype=np.int8)


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    x: np.ndarray
    W: np.ndarray
    candidate_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "y", as_pm1(self.y))
        object.__setattr__(self, "x", as_pm1(self.x))
        W = as_pm1(self.W)
        if W.ndim == 1:
            W = W[:, None]
        object.__setattr__(self, "W", W)
        if not self.candidate_names:
            names = tuple(f"w{j + 1}" for j in range(W.shape[1]))
            object.__setattr__(self, "candidate_names", names)
        else:
            object.__setattr__(self, "candidate_names", tuple(self.candidate_names))
        for arr in (self.y, self.x, self.W):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def m(self):
        return self.W.shape[1]

    def subset(self, rows):
        return Dataset(self.y[rows], self.x[rows], self.W[rows], self.candidate_names)


def validate(dataset):
    """Raise unless every Dataset invariant holds."""
    W = np.asarray(dataset.W)
    if W.ndim != 2:
        raise ShapeMismatch(f"W must be 2-d, got shape {W.shape}")
    n, m = W.shape
    if n < 1 or m < 1:
        raise ShapeMismatch(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    for name, v in (("y", dataset.y), ("x", dataset.x)):
        if np.ndim(v) != 1 or len(v) != n:
            raise ShapeMismatch(f"{name} has shape {np.shape(v)}, expected ({n},)")
    if len(dataset.candidate_names) != m:
        raise ShapeMismatch(f"{len(dataset.candidate_names)} candidate names for {m} columns")
    for name, v in (("y", dataset.y), ("x", dataset.x)):
        bad = np.flatnonzero(np.abs(np.asarray(v)) != 1)
        if bad.size:
            raise NonBinaryValue(int(bad[0]), name, np.asarray(v)[bad[0]].item())
    bad = np.argwhere(np.abs(W) != 1)
    if bad.size:
        r, c = bad[0]
        raise NonBinaryValue(int(r), dataset.candidate_names[c], W[r, c].item())


def orient_candidates(dataset):
    """Negate every candidate whose sample correlation with ``x`` is negative.

    Zero-correlation (and constant) columns keep their sign. Returns the new
    dataset and the boolean flip mask.
    """
    W = dataset.W.astype(np.float64)
    x = dataset.x.astype(np.float64)
    cov = (W - W.mean(axis=0)).T @ (x - x.mean()) / dataset.n
    flip = cov < 0
    signs = np.where(flip, -1, 1).astype(np.int8)
    return Dataset(dataset.y, dataset.x, dataset.W * signs, dataset.candidate_names), flip


def connected_components(nodes, edges):
    """Connected components of (nodes, edges), each sorted, ordered by first node."""
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for v in sorted(nodes):
        groups.setdefault(find(v), []).append(v)
    return [tuple(g) for g in sorted(groups.values())]


@dataclass(frozen=True)
class CandidateGraph:
    valid: tuple
    edges: frozenset = frozenset()
    cliques: tuple = ()

    def __post_init__(self):
        valid = tuple(sorted(int(v) for v in self.valid))
        edges = frozenset(tuple(sorted((int(i), int(j)))) for i, j in self.edges)
        vs = set(valid)
        for i, j in edges:
            if i not in vs or j not in vs:
                raise ValueError(f"edge {(i, j)} has an endpoint outside the valid set")
            if i == j:
                raise ValueError(f"self-loop on {i}")
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "cliques", tuple(connected_components(valid, edges)))

    @classmethod
    def independent(cls, valid):
        return cls(tuple(valid))

    @classmethod
    def from_cliques(cls, cliques):
        valid, edges = [], set()
        for c in cliques:
            c = sorted(c)
            valid.extend(c)
            edges.update((c[a], c[b]) for a in range(len(c)) for b in range(a + 1, len(c)))
        return cls(tuple(valid), frozenset(edges))

    @property
    def max_degree(self):
        return max((len(c) for c in self.cliques), default=1) - 1


@dataclass
class IvyModel:
    """Mean parameters over the valid candidates plus what inference needs."""

    valid: tuple
    mu: np.ndarray
    second_moment: np.ndarray
    prior_z: float = 0.5
    first_moment: Optional[np.ndarray] = None
    clique_params: list = field(default_factory=list)
    sign_violations: int = 0
    dropped_pairs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass
class EffectReport:
    method: str
    median: float
    ci_low: float
    ci_high: float
    replicates: np.ndarray
    n_used: int
    diagnostics: list = field(default_factory=list)

    @classmethod
    def from_replicates(cls, method, estimates, n_used, diagnostics=()):
        est = np.asarray(estimates, dtype=np.float64)
        ok = est[np.isfinite(est)]
        if ok.size == 0:
            nan = float("nan")
            return cls(method, nan, nan, nan, est, n_used, list(diagnostics))
        lo, med, hi = np.percentile(ok, [2.5, 50.0, 97.5])
        return cls(method, float(med), float(lo), float(hi), est, n_used, list(diagnostics))

    def covers(self, value=0.0):
        return self.ci_low <= value <= self.ci_high
