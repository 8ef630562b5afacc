"""Evaluation protocols: validity AUC, CI calibration, error scaling, robustness sweeps."""
import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ._kernels import stream_key
from .core import CandidateGraph, IvyError
from .datagen import INVALID_Z_ACCURACIES, preset, sample, valid_moments
from .paramlearn import param_learn, param_learn_moments
from .pipeline import estimate
from .structlearn import select_model, structure_learn


class SingleClass(IvyError, ValueError):
    pass


@dataclass
class SweepResult:
    axis: str
    values: list
    rows: list = field(default_factory=list)  # one dict per (axis value, seed[, method])
    seeds: list = field(default_factory=list)

    def column(self, key, **match):
        return [r[key] for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def mean_by_value(self, key, **match):
        return {v: float(np.mean(self.column(key, **{self.axis: v}, **match))) for v in self.values}

    def to_csv(self):
        if not self.rows:
            return ""
        fields = list(self.rows[0])
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def auc(scores, labels):
    """Probability a random positive outscores a random negative; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("both classes must be present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def dataset_seed(seed, index):
    return stream_key(seed, index) & 0x7FFFFFFFFFFFFFFF


def validity_auc(spec, n, hyper=None, seed=0):
    """AUC of the validity scores against the spec's ground-truth validity mask."""
    ds, _ = sample(spec, n, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if hyper is None:
            res = select_model(ds.W, details=True)
        else:
            res = structure_learn(ds.W, hyper, details=True)
    return auc(res.scores, spec.validity())


def calibration(spec, datasets=200, n=10_000, replicates=100, seed=0, true_structure=False,
                n_jobs=1, details=False):
    """Fraction of datasets whose Ivy 95% CI covers 0 (``spec`` has no effect).

    Each dataset runs the full pipeline unless ``true_structure`` is set, in
    which case the spec's own graph is used.
    """
    covered, rows = [], []
    for d in range(datasets):
        s = dataset_seed(seed, d)
        ds, _ = sample(spec, n, s)
        graph = spec.true_graph() if true_structure else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                (rep,) = estimate(ds, ("ivy",), replicates, s, spec.prior_z, graph, n_jobs=n_jobs)
                hit = rep.covers(0.0)
                rows.append({"dataset": d, "median": rep.median, "ci_low": rep.ci_low,
                             "ci_high": rep.ci_high, "covers": hit})
            except IvyError as exc:
                hit = False
                rows.append({"dataset": d, "median": float("nan"), "ci_low": float("nan"),
                             "ci_high": float("nan"), "covers": False, "error": str(exc)})
        covered.append(hit)
    coverage = float(np.mean(covered))
    return (coverage, rows) if details else coverage


def scaling_curve(spec, n_list, seeds, misspecified=False):
    """‖μ̂ - μ*‖ per (n, seed), with the true structure or a forced CI assumption."""
    mu_star, _ = valid_moments(spec)
    graph = spec.true_graph()
    if misspecified:
        graph = CandidateGraph.independent(graph.valid)
    out = SweepResult("n", list(n_list), seeds=list(seeds))
    for n in n_list:
        for seed in seeds:
            ds, _ = sample(spec, n, dataset_seed(seed, n))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                mu = param_learn(ds.W, graph, spec.prior_z).mu
            out.rows.append({"n": n, "seed": seed, "error": float(np.linalg.norm(mu - mu_star))})
    return out


def population_error(spec, misspecified=False):
    """‖μ̂ - μ*‖ when parameter learning sees the exact second moments."""
    mu_star, O = valid_moments(spec)
    graph = spec.true_graph()
    if misspecified:
        graph = CandidateGraph.independent(graph.valid)
    local = CandidateGraph.from_cliques(
        [[graph.valid.index(v) for v in c] for c in graph.cliques])
    mu = param_learn_moments(O, local, spec.prior_z, clip=False).mu
    return float(np.linalg.norm(mu - mu_star))


def robustness_sweep(accuracies=INVALID_Z_ACCURACIES, n=50_000, replicates=100, seed=0,
                     methods=("ivy", "uas", "was"), n_jobs=1):
    """Effect reports on invalid_z(acc) for each accuracy and method."""
    out = SweepResult("accuracy", list(accuracies), seeds=[seed])
    for acc in accuracies:
        if not 0.5 <= acc < 1.0:
            raise ValueError("accuracies must lie in [0.5, 1)")
        spec = preset(f"invalid_z({acc!r})")
        ds, _ = sample(spec, n, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            reports = estimate(ds, methods, replicates, seed, spec.prior_z, n_jobs=n_jobs)
        for rep in reports:
            out.rows.append({"accuracy": acc, "seed": seed, "method": rep.method,
                             "median": rep.median, "ci_low": rep.ci_low,
                             "ci_high": rep.ci_high, "covers_zero": rep.covers(0.0)})
    return out


__all__ = ["SweepResult", "SingleClass", "auc", "validity_auc", "calibration", "scaling_curve",
           "population_error", "robustness_sweep"]
