"""Synthetic data-generating processes, exact enumeration and named presets.

Variables are ±1. The latent IV ``z`` and confounder ``c`` are drawn first
(``c`` independent of ``z`` unless ``c_z_agreement`` is set); valid candidates
depend on ``z`` only, invalid candidates are noisy copies of ``c``, noise
candidates are fair coins; then ``x ~ P(x | z, c)`` and ``y ~ P(y | x, c)``.
Column order of ``W`` is: valid groups in order, invalid, noise.
"""
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from . import _kernels
from .core import CandidateGraph, Dataset, IvyError
from .logistic import fit_counts

ENUMERATION_CAP = 22
CLIQUE_CAP = 15


class CliqueTooLarge(IvyError, ValueError):
    pass


class TooManyVariables(IvyError, ValueError):
    pass


class UnknownPreset(IvyError, KeyError):
    pass


def _ix(v):
    """Table index of a ±1 value: +1 -> 0, -1 -> 1."""
    return (1 - np.asarray(v)) // 2


def table_from_logits(intercept, first, second):
    """2x2 table P(=1 | a, b) for sigmoid(intercept + first*a + second*b)."""
    return tuple(
        tuple(float(expit(intercept + first * a + second * b)) for b in (1, -1)) for a in (1, -1)
    )


@dataclass(frozen=True)
class IndependentGroup:
    """Candidates that are conditionally independent given z; P(w_j = z) = accuracy."""

    accuracies: tuple

    @property
    def size(self):
        return len(self.accuracies)


@dataclass(frozen=True)
class DependentGroup:
    """A clique with P(w_C | z) ∝ exp(Σ θ_j w_j z + Σ θ_jk w_j w_k + Σ η_j w_j)."""

    coupling: tuple
    pairwise: tuple = ()  # ((i, j, theta), ...) in local indices
    unary: tuple = ()

    @property
    def size(self):
        return len(self.coupling)

    def conditional_tables(self):
        """(P(w_C | z=+1), P(w_C | z=-1)) over little-endian bit states."""
        k = self.size
        if k > CLIQUE_CAP:
            raise CliqueTooLarge(f"clique of size {k} exceeds cap {CLIQUE_CAP}")
        states = np.arange(2 ** k)
        w = 2 * ((states[:, None] >> np.arange(k)) & 1) - 1
        theta = np.asarray(self.coupling, dtype=np.float64)
        base = np.zeros(2 ** k)
        for i, j, t in self.pairwise:
            base += t * w[:, i] * w[:, j]
        if self.unary:
            base += w @ np.asarray(self.unary, dtype=np.float64)
        out = []
        for z in (1, -1):
            lw = base + z * (w @ theta)
            p = np.exp(lw - lw.max())
            out.append(p / p.sum())
        return out[0], out[1]


@dataclass(frozen=True)
class SyntheticSpec:
    prior_z: float
    prior_c: float
    valid_groups: tuple
    invalid_accuracies: tuple
    noise_count: int
    x_table: tuple  # x_table[ix(z)][ix(c)] = P(x=1 | z, c)
    y_table: tuple  # y_table[ix(x)][ix(c)] = P(y=1 | x, c)
    c_z_agreement: Optional[float] = None  # P(c = z); None means c independent of z
    name: str = ""
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        probs = [self.prior_z, self.prior_c, *self.invalid_accuracies]
        probs += [p for row in (*self.x_table, *self.y_table) for p in row]
        if self.c_z_agreement is not None:
            probs.append(self.c_z_agreement)
        for g in self.valid_groups:
            if isinstance(g, IndependentGroup):
                probs.extend(g.accuracies)
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ValueError("all probabilities must lie in [0, 1]")

    @property
    def n_valid(self):
        return sum(g.size for g in self.valid_groups)

    @property
    def m(self):
        return self.n_valid + len(self.invalid_accuracies) + self.noise_count

    def validity(self):
        mask = np.zeros(self.m, dtype=bool)
        mask[: self.n_valid] = True
        return mask

    def group_slices(self):
        out, start = [], 0
        for g in self.valid_groups:
            out.append((g, start, start + g.size))
            start += g.size
        return out

    def true_graph(self):
        cliques = []
        for g, lo, hi in self.group_slices():
            if isinstance(g, DependentGroup):
                cliques.append(tuple(range(lo, hi)))
            else:
                cliques.extend((j,) for j in range(lo, hi))
        return CandidateGraph.from_cliques(cliques)

    def mean_valid_accuracy(self):
        mu, _ = valid_moments(self)
        return float(np.mean((1.0 + mu) / 2.0))

    def with_prior_z(self, prior_z):
        return _replace(self, prior_z=prior_z)


def _replace(spec, **kw):
    from dataclasses import replace

    return replace(spec, **kw)


@dataclass
class GroundTruth:
    z: np.ndarray
    c: np.ndarray
    valid: np.ndarray


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _slots(spec):
    """Uniform slots per row: z, c, one per valid unit, invalid, noise, x, y."""
    units = sum(g.size if isinstance(g, IndependentGroup) else 1 for g in spec.valid_groups)
    return 2 + units + len(spec.invalid_accuracies) + spec.noise_count + 2


def _sample_rows(spec, key, start, count, tables):
    width = _slots(spec)
    U = _kernels.uniforms(key, start * width, count * width).reshape(count, width)
    z = np.where(U[:, 0] < spec.prior_z, 1, -1).astype(np.int8)
    if spec.c_z_agreement is None:
        c = np.where(U[:, 1] < spec.prior_c, 1, -1).astype(np.int8)
    else:
        c = np.where(U[:, 1] < spec.c_z_agreement, z, -z).astype(np.int8)
    W = np.empty((count, spec.m), dtype=np.int8)
    slot, col = 2, 0
    for g, tab in zip(spec.valid_groups, tables):
        if isinstance(g, IndependentGroup):
            for a in g.accuracies:
                W[:, col] = np.where(U[:, slot] < a, z, -z)
                slot += 1
                col += 1
        else:
            cdf_pos, cdf_neg = tab
            u = U[:, slot]
            state = np.where(
                z > 0,
                np.searchsorted(cdf_pos, u, side="right"),
                np.searchsorted(cdf_neg, u, side="right"),
            )
            state = np.minimum(state, cdf_pos.shape[0] - 1)
            for b in range(g.size):
                W[:, col + b] = 2 * ((state >> b) & 1) - 1
            slot += 1
            col += g.size
    for a in spec.invalid_accuracies:
        W[:, col] = np.where(U[:, slot] < a, c, -c)
        slot += 1
        col += 1
    for _ in range(spec.noise_count):
        W[:, col] = np.where(U[:, slot] < 0.5, 1, -1)
        slot += 1
        col += 1
    xt = np.asarray(spec.x_table)
    px = xt[_ix(z), _ix(c)]
    x = np.where(U[:, slot] < px, 1, -1).astype(np.int8)
    yt = np.asarray(spec.y_table)
    py = yt[_ix(x), _ix(c)]
    y = np.where(U[:, slot + 1] < py, 1, -1).astype(np.int8)
    return y, x, W, z, c


def sample(spec, n, seed, chunk=65536):
    """Draw ``n`` rows; returns (Dataset, GroundTruth). Row i depends only on (seed, i)."""
    if n < 1:
        raise ValueError("n must be positive")
    tables = []
    for g in spec.valid_groups:
        if isinstance(g, DependentGroup):
            pos, neg = g.conditional_tables()
            tables.append((np.cumsum(pos), np.cumsum(neg)))
        else:
            tables.append(None)
    key = _kernels.stream_key(seed, 0)
    parts = [_sample_rows(spec, key, s, min(chunk, n - s), tables) for s in range(0, n, chunk)]
    y, x, W, z, c = (np.concatenate(p) for p in zip(*parts))
    return Dataset(y, x, W), GroundTruth(z, c, spec.validity())


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

@dataclass
class ExactDistribution:
    """Joint probabilities over little-endian bit states of ``variables``."""

    variables: tuple
    probs: np.ndarray

    def values(self, name):
        v = self.variables.index(name)
        states = np.arange(self.probs.shape[0], dtype=np.int64)
        return (2 * ((states >> v) & 1) - 1).astype(np.int8)

    def expect(self, *names):
        acc = np.ones_like(self.probs)
        for nm in names:
            acc = acc * self.values(nm)
        return float(acc @ self.probs)


def enumerate_joint(spec):
    """Exact joint table over (z, c, w_1..w_m, x, y)."""
    m = spec.m
    nvar = m + 4
    if nvar > ENUMERATION_CAP:
        raise TooManyVariables(f"{nvar} variables exceed the enumeration cap {ENUMERATION_CAP}")
    names = ("z", "c") + tuple(f"w{j + 1}" for j in range(m)) + ("x", "y")
    states = np.arange(2 ** nvar, dtype=np.int64)

    def val(v):
        return (2 * ((states >> v) & 1) - 1).astype(np.int8)

    z, c = val(0), val(1)
    p = np.where(z > 0, spec.prior_z, 1.0 - spec.prior_z)
    if spec.c_z_agreement is None:
        p = p * np.where(c > 0, spec.prior_c, 1.0 - spec.prior_c)
    else:
        p = p * np.where(c == z, spec.c_z_agreement, 1.0 - spec.c_z_agreement)
    col = 0
    for g in spec.valid_groups:
        if isinstance(g, IndependentGroup):
            for a in g.accuracies:
                p = p * np.where(val(2 + col) == z, a, 1.0 - a)
                col += 1
        else:
            pos, neg = g.conditional_tables()
            local = np.zeros_like(states)
            for b in range(g.size):
                local |= ((states >> (2 + col + b)) & 1) << b
            p = p * np.where(z > 0, pos[local], neg[local])
            col += g.size
    for a in spec.invalid_accuracies:
        p = p * np.where(val(2 + col) == c, a, 1.0 - a)
        col += 1
    p = p * 0.5 ** spec.noise_count
    x, y = val(nvar - 2), val(nvar - 1)
    xt, yt = np.asarray(spec.x_table), np.asarray(spec.y_table)
    px = xt[_ix(z), _ix(c)]
    p = p * np.where(x > 0, px, 1.0 - px)
    py = yt[_ix(x), _ix(c)]
    p = p * np.where(y > 0, py, 1.0 - py)
    return ExactDistribution(names, p)


def _weighted_counts(dist, target, covariate):
    t, cv = dist.values(target), dist.values(covariate)
    return [
        dist.probs[(t > 0) & (cv > 0)].sum(),
        dist.probs[(t > 0) & (cv < 0)].sum(),
        dist.probs[(t < 0) & (cv > 0)].sum(),
        dist.probs[(t < 0) & (cv < 0)].sum(),
    ]


def exact_moments(dist):
    """(mu_star, O_star, (beta_zx, beta_zy)) from an exact joint table."""
    wn = [v for v in dist.variables if v.startswith("w")]
    z = dist.values("z").astype(np.float64)
    Wv = np.stack([dist.values(v) for v in wn], axis=1).astype(np.float64) if wn else np.zeros((len(z), 0))
    pw = Wv * dist.probs[:, None]
    mu = pw.T @ z
    O = pw.T @ Wv
    bzx = fit_counts(_weighted_counts(dist, "x", "z")).slope
    bzy = fit_counts(_weighted_counts(dist, "y", "z")).slope
    return mu, O, (bzx, bzy)


def structural_joint(spec):
    """Exact joint over (z, c, x, y) only; candidates marginalised out."""
    return enumerate_joint(_replace(spec, valid_groups=(), invalid_accuracies=(), noise_count=0))


def population_wald(spec):
    """Population Wald ratio β*_zy / β*_zx with the true latent z."""
    _, _, (bzx, bzy) = exact_moments(structural_joint(spec))
    return bzy / bzx


def population_association(spec):
    """Population logistic slope of y on x (the confounded association)."""
    return fit_counts(_weighted_counts(structural_joint(spec), "y", "x")).slope


def _group_conditionals(g):
    """E[w | z=±1] (k,) each and E[w wᵀ | z=±1] (k, k) each for one valid group."""
    if isinstance(g, IndependentGroup):
        a = 2.0 * np.asarray(g.accuracies) - 1.0
        means = (a, -a)
        seconds = []
        for m_ in means:
            S = np.outer(m_, m_)
            np.fill_diagonal(S, 1.0)
            seconds.append(S)
        return means, tuple(seconds)
    pos, neg = g.conditional_tables()
    k = g.size
    states = np.arange(2 ** k)
    w = (2 * ((states[:, None] >> np.arange(k)) & 1) - 1).astype(np.float64)
    means = (pos @ w, neg @ w)
    seconds = ((w * pos[:, None]).T @ w, (w * neg[:, None]).T @ w)
    return means, seconds


def valid_moments(spec):
    """Exact (mu*, O*) over the valid candidates, by factorising over z.

    Independent of :func:`enumerate_joint`, so it scales to any number of
    candidates and doubles as a cross-check of the brute-force table.
    """
    pz = np.array([spec.prior_z, 1.0 - spec.prior_z])
    zs = np.array([1.0, -1.0])
    k = spec.n_valid
    cond_mean = np.zeros((2, k))
    O = np.zeros((k, k))
    blocks = []
    for g, lo, hi in spec.group_slices():
        means, seconds = _group_conditionals(g)
        for s in range(2):
            cond_mean[s, lo:hi] = means[s]
            O[lo:hi, lo:hi] += pz[s] * seconds[s]
        blocks.append((lo, hi))
    mu = (pz * zs) @ cond_mean
    for (lo1, hi1), (lo2, hi2) in combinations(blocks, 2):
        cross = sum(pz[s] * np.outer(cond_mean[s, lo1:hi1], cond_mean[s, lo2:hi2]) for s in range(2))
        O[lo1:hi1, lo2:hi2] = cross
        O[lo2:hi2, lo1:hi1] = cross.T
    return mu, O


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def clique_group(size, coupling, pairwise):
    """Fully connected clique with shared coupling to z and shared pairwise weight."""
    pairs = tuple((i, j, pairwise) for i in range(size) for j in range(i + 1, size))
    return DependentGroup(tuple([coupling] * size), pairs)


# Frozen constants for the 20-candidate pipeline presets. The y-coefficient for
# the effect preset is the value at which the population Wald ratio with the
# true z equals 0.150 (see tests/test_datagen.py).
TWENTY = dict(
    ci_accuracy=0.70,
    clique4=(0.45, 0.35),  # (coupling to z, pairwise weight)
    clique2=(0.55, 0.45),
    invalid_accuracy=0.60,
    x_logits=(0.0, 0.45, 0.75),  # intercept, z, c
    y_logits=(0.0, 0.0, 0.80),  # intercept, x, c
)
TWENTY_EFFECT_X = 0.3571656538708005


def _twenty_candidates(effect_x):
    k = TWENTY
    groups = (
        clique_group(4, *k["clique4"]),
        clique_group(2, *k["clique2"]),
        IndependentGroup(tuple([k["ci_accuracy"]] * 4)),
    )
    b0, bx, bc = k["y_logits"]
    return groups, table_from_logits(*k["x_logits"]), table_from_logits(b0, bx + effect_x, bc)


def _invalid_z(acc, xz=0.9):
    """Eight valid candidates plus w9 = c, with c agreeing with z w.p. ``acc``."""
    # P(x | z, c) = sigmoid(a_c + xz * z); a_c solved so the marginals P(x | c) match.
    def marginal(a, c):
        pz_given_c = acc  # P(z = c | c) with a symmetric prior on z
        return pz_given_c * expit(a + xz * c) + (1 - pz_given_c) * expit(a - xz * c)

    a_pos = brentq(lambda a: marginal(a, 1) - 0.764, -20, 20, xtol=1e-14)
    a_neg = brentq(lambda a: marginal(a, -1) - (1 - 0.776), -20, 20, xtol=1e-14)
    x_table = tuple(
        tuple(float(expit((a_pos if c > 0 else a_neg) + xz * z)) for c in (1, -1)) for z in (1, -1)
    )
    y_table = ((0.55, 0.45), (0.55, 0.45))
    return SyntheticSpec(
        prior_z=0.5,
        prior_c=0.5,
        valid_groups=(IndependentGroup(tuple([0.73] * 8)),),
        invalid_accuracies=(1.0,),
        noise_count=0,
        x_table=x_table,
        y_table=y_table,
        c_z_agreement=acc,
        name=f"invalid_z({acc:g})",
    )


INVALID_Z_ACCURACIES = (0.5, 0.525, 0.55, 0.575, 0.6)
# Confounder-to-outcome logits solved so the population observational slope
# of y on x equals 0.432 (varying_accuracy) and 0.379 (dependency_clique).
VARYING_Y_C = 1.1793982000486547
DEPENDENCY_Y_C = 1.1520669965562413


def preset(name):
    """Named synthetic experiments; ``invalid_z(acc)`` takes the w9 accuracy."""
    name = name.strip()
    if name in ("null_fig5a", "effect_fig5b"):
        effect = 0.0 if name == "null_fig5a" else TWENTY_EFFECT_X
        groups, xt, yt = _twenty_candidates(effect)
        return SyntheticSpec(
            prior_z=0.5,
            prior_c=0.5,
            valid_groups=groups,
            invalid_accuracies=tuple([TWENTY["invalid_accuracy"]] * 10),
            noise_count=0,
            x_table=xt,
            y_table=yt,
            name=name,
            notes={"n": 100_000, "target_effect": 0.0 if name == "null_fig5a" else 0.150},
        )
    if name.startswith("invalid_z"):
        inner = name[len("invalid_z"):].strip("() ")
        acc = float(inner) if inner else 0.55
        return _invalid_z(acc)
    if name == "varying_accuracy":
        accs = tuple(float(a) for a in np.linspace(0.56, 0.64, 10))
        return SyntheticSpec(
            prior_z=0.6,
            prior_c=0.5,
            valid_groups=(IndependentGroup(accs),),
            invalid_accuracies=(),
            noise_count=50,
            x_table=table_from_logits(0.0, 0.5, 0.9),
            y_table=table_from_logits(0.0, 0.0, VARYING_Y_C),
            name=name,
            notes={"n": 5_000},
        )
    if name == "dependency_clique":
        return SyntheticSpec(
            prior_z=0.5,
            prior_c=0.5,
            valid_groups=(
                IndependentGroup(tuple([0.8] * 4)),
                clique_group(4, 0.13132464268331087, 0.47261629520134946),
            ),
            invalid_accuracies=(),
            noise_count=0,
            x_table=table_from_logits(0.0, 0.5, 0.8),
            y_table=table_from_logits(0.0, 0.0, DEPENDENCY_Y_C),
            name=name,
            notes={"n": 50_000},
        )
    if name == "calibration_null":
        return SyntheticSpec(
            prior_z=0.5,
            prior_c=0.5,
            valid_groups=(IndependentGroup(tuple([0.8] * 10)),),
            invalid_accuracies=(),
            noise_count=0,
            x_table=table_from_logits(0.0, 0.5, 0.8),
            y_table=table_from_logits(0.0, 0.0, 0.8),
            name=name,
            notes={"n": 10_000},
        )
    raise UnknownPreset(name)


PRESETS = ("null_fig5a", "effect_fig5b", "invalid_z(acc)", "varying_accuracy",
           "dependency_clique", "calibration_null")
