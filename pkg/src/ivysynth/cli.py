"""Command-line interface: generate | fit | estimate | pipeline | evaluate | power.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""
import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import CandidateGraph, Dataset, IvyError, IvyModel, NumericalFailure
from .datagen import UnknownPreset, preset, sample
from .effect import power
from .posterior import CliqueConditional

FORMAT_VERSION = 1


class ParseError(IvyError, ValueError):
    def __init__(self, path, line, column, message):
        self.line, self.column = line, column
        super().__init__(f"{path}:{line}:{column}: {message}")


class ConfigError(IvyError, ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    replicates: int = 1000
    prior_z: float = 0.5
    xi: int = 2
    methods: list = field(default_factory=lambda: ["ivy", "uas", "was", "association"])
    preset: str = "null_fig5a"
    n: int = 100_000
    data: str = None
    model: str = None
    out: str = None
    lambda_grid: list = None
    gamma_grid: list = None
    hyper: dict = None
    jobs: int = 1
    zero_one_encoding: bool = False
    reuse_structure: bool = False
    unbiased_moment: bool = False
    harness: str = "auc"
    datasets: int = 200
    seeds: int = 20
    n_list: list = field(default_factory=lambda: [2500, 10000])
    accuracies: list = None
    p1: float = 0.5
    alpha: float = 0.0
    beta: float = 0.0
    level: float = 0.05

    @classmethod
    def from_sources(cls, config_path, overrides):
        values = {}
        if config_path:
            try:
                values = json.loads(Path(config_path).read_text())
            except json.JSONDecodeError as exc:
                raise ParseError(config_path, exc.lineno, exc.colno, exc.msg) from exc
            if not isinstance(values, dict):
                raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None and k in known})
        return cls(**values)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _finite(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return _finite(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return _finite(obj)


def dump_json(obj, path=None):
    text = json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def write_dataset(dataset, path, zero_one=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "x", *dataset.candidate_names])
        block = np.column_stack([dataset.y, dataset.x, dataset.W]).astype(np.int64)
        if zero_one:
            block = (block + 1) // 2
        w.writerows(block.tolist())


def write_truth(truth, m_valid_mask, path):
    """Sidecar with per-row z, c; ``valid_mask`` row i holds candidate i's validity."""
    mask = np.asarray(m_valid_mask, dtype=int)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "c", "valid_mask"])
        for i in range(truth.z.size):
            w.writerow([int(truth.z[i]), int(truth.c[i]), int(mask[i]) if i < mask.size else ""])


def truth_path(path):
    p = Path(path)
    return p.with_name(p.stem + ".truth" + p.suffix)


def read_dataset(path, zero_one=False):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, 1, "empty file") from None
        if len(header) < 3 or header[0].strip() != "y" or header[1].strip() != "x":
            raise ParseError(path, 1, 1, "header must start with y,x followed by candidate names")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, line_no, len(row) + 1,
                                 f"expected {len(header)} fields, got {len(row)}")
            vals = []
            for col, tok in enumerate(row, start=1):
                try:
                    vals.append(int(tok))
                except ValueError:
                    raise ParseError(path, line_no, col, f"not an integer: {tok!r}") from None
            rows.append(vals)
    if not rows:
        raise ParseError(path, 2, 1, "no data rows")
    block = np.asarray(rows, dtype=np.int64)
    if zero_one:
        bad = np.argwhere((block != 0) & (block != 1))
        if bad.size:
            r, c = bad[0]
            raise ParseError(path, int(r) + 2, int(c) + 1, f"expected 0 or 1, got {block[r, c]}")
        block = 2 * block - 1
    else:
        bad = np.argwhere(np.abs(block) != 1)
        if bad.size:
            r, c = bad[0]
            raise ParseError(path, int(r) + 2, int(c) + 1, f"expected -1 or +1, got {block[r, c]}")
    names = tuple(h.strip() for h in header[2:])
    return Dataset(block[:, 0], block[:, 1], block[:, 2:], names)


def model_to_dict(fit_result, names):
    model, graph = fit_result.model, fit_result.graph
    hyper = fit_result.hyper
    return {
        "version": FORMAT_VERSION,
        "kind": "ivy-model",
        "candidate_names": list(names),
        "flip_mask": fit_result.flip_mask,
        "valid": list(graph.valid),
        "edges": sorted(list(e) for e in graph.edges),
        "cliques": [list(c) for c in graph.cliques],
        "hyperparams": None if hyper is None else {
            "lambda": hyper.lam, "gamma": hyper.gamma,
            "t1": hyper.t1, "t2": None if math.isinf(hyper.t2) else hyper.t2},
        "prior_z": model.prior_z,
        "mu": model.mu,
        "second_moment": model.second_moment,
        "first_moment": model.first_moment,
        "clique_params": [c.to_dict() for c in model.clique_params],
        "sign_violations": model.sign_violations,
        "diagnostics": list(fit_result.diagnostics),
    }


def model_from_dict(d):
    if d.get("kind") != "ivy-model":
        raise ConfigError("not a model file")
    if d.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model file version {d.get('version')}")
    graph = CandidateGraph(tuple(d["valid"]), frozenset(tuple(e) for e in d["edges"]))
    first = d.get("first_moment")
    model = IvyModel(
        valid=graph.valid,
        mu=np.asarray(d["mu"], dtype=np.float64),
        second_moment=np.asarray(d["second_moment"], dtype=np.float64),
        prior_z=d["prior_z"],
        first_moment=None if first is None else np.asarray(first, dtype=np.float64),
        clique_params=[CliqueConditional.from_dict(c) for c in d.get("clique_params", [])],
        sign_violations=d.get("sign_violations", 0),
    )
    return model, graph


def report_to_dict(rep):
    return {
        "method": rep.method,
        "median": rep.median,
        "ci_low": rep.ci_low,
        "ci_high": rep.ci_high,
        "n_used": rep.n_used,
        "replicates": rep.replicates,
        "diagnostics": rep.diagnostics,
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_data(cfg):
    if not cfg.data:
        raise ConfigError("--data is required")
    return read_dataset(cfg.data, cfg.zero_one_encoding)


def _hyper(cfg):
    if not cfg.hyper:
        return None
    from .structlearn import Hyperparams
    h = cfg.hyper
    return Hyperparams(h["lambda"], h["gamma"], h["t1"], h.get("t2", math.inf) or math.inf)


def cmd_generate(cfg):
    spec = preset(cfg.preset)
    ds, truth = sample(spec, cfg.n, cfg.seed)
    if not cfg.out:
        raise ConfigError("--out is required for generate")
    write_dataset(ds, cfg.out, cfg.zero_one_encoding)
    write_truth(truth, spec.validity(), truth_path(cfg.out))
    return {"version": FORMAT_VERSION, "kind": "generate", "preset": spec.name, "n": cfg.n,
            "seed": cfg.seed, "data": str(cfg.out), "truth": str(truth_path(cfg.out))}, None


def _fit(cfg, ds):
    from .pipeline import fit
    return fit(ds, prior_z=cfg.prior_z, xi=cfg.xi, hyper=_hyper(cfg), lambda_grid=cfg.lambda_grid,
               gamma_grid=cfg.gamma_grid, unbiased=cfg.unbiased_moment)


def cmd_fit(cfg):
    ds = _load_data(cfg)
    res = _fit(cfg, ds)
    return model_to_dict(res, ds.candidate_names), cfg.out


def _estimate(cfg, ds, graph=None):
    from .pipeline import estimate
    reports = estimate(ds, tuple(cfg.methods), cfg.replicates, cfg.seed, cfg.prior_z, graph,
                       cfg.xi, cfg.jobs)
    return [report_to_dict(r) for r in reports]


def cmd_estimate(cfg):
    ds = _load_data(cfg)
    graph = None
    if cfg.model:
        _, graph = model_from_dict(json.loads(Path(cfg.model).read_text()))
    elif cfg.reuse_structure:
        raise ConfigError("--reuse-structure needs --model")
    out = {"version": FORMAT_VERSION, "kind": "ivy-report", "seed": cfg.seed,
           "replicates": cfg.replicates, "n": ds.n, "reports": _estimate(cfg, ds, graph)}
    return out, cfg.out


def cmd_pipeline(cfg):
    if cfg.data:
        ds, source = _load_data(cfg), str(cfg.data)
    else:
        ds, _ = sample(preset(cfg.preset), cfg.n, cfg.seed)
        source = f"preset:{cfg.preset}"
    res = _fit(cfg, ds)
    out = {"version": FORMAT_VERSION, "kind": "ivy-report", "source": source, "seed": cfg.seed,
           "replicates": cfg.replicates, "n": ds.n,
           "model": model_to_dict(res, ds.candidate_names),
           "reports": _estimate(cfg, ds, res.graph)}
    return out, cfg.out


def cmd_evaluate(cfg):
    from . import evalharness as ev
    h = cfg.harness
    if h == "auc":
        spec = preset(cfg.preset)
        vals = [ev.validity_auc(spec, cfg.n, _hyper(cfg), ev.dataset_seed(cfg.seed, s))
                for s in range(cfg.seeds)]
        out = {"harness": h, "preset": spec.name, "n": cfg.n, "auc": vals, "mean_auc": float(np.mean(vals))}
    elif h == "calibration":
        spec = preset(cfg.preset)
        cov, rows = ev.calibration(spec, cfg.datasets, cfg.n, cfg.replicates, cfg.seed,
                                   n_jobs=cfg.jobs, details=True)
        out = {"harness": h, "preset": spec.name, "n": cfg.n, "coverage": cov, "datasets": rows}
    elif h == "scaling":
        spec = preset(cfg.preset)
        sw = ev.scaling_curve(spec, cfg.n_list, list(range(cfg.seeds)))
        out = {"harness": h, "preset": spec.name, "mean_error": {str(k): v for k, v in sw.mean_by_value("error").items()},
               "csv": sw.to_csv()}
    elif h == "robustness":
        accs = cfg.accuracies or list(ev.INVALID_Z_ACCURACIES)
        sw = ev.robustness_sweep(accs, cfg.n, cfg.replicates, cfg.seed, tuple(cfg.methods), cfg.jobs)
        out = {"harness": h, "rows": sw.rows, "csv": sw.to_csv()}
    else:
        raise ConfigError(f"unknown harness {h!r}")
    out = {"version": FORMAT_VERSION, "kind": "evaluation", "seed": cfg.seed, **out}
    return out, cfg.out


def cmd_power(cfg):
    value = power(cfg.n, cfg.p1, 1.0 - cfg.p1, cfg.alpha, cfg.beta, cfg.level)
    return {"version": FORMAT_VERSION, "kind": "power", "n": cfg.n, "p1": cfg.p1, "alpha": cfg.alpha,
            "beta": cfg.beta, "level": cfg.level, "power": value}, cfg.out


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "estimate": cmd_estimate,
    "pipeline": cmd_pipeline,
    "evaluate": cmd_evaluate,
    "power": cmd_power,
}


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int)
    common.add_argument("--replicates", type=int)
    common.add_argument("--prior-z", dest="prior_z", type=float)
    common.add_argument("--preset")
    common.add_argument("--methods", type=lambda s: [t.strip() for t in s.split(",") if t.strip()])
    common.add_argument("--xi", type=int, choices=(2, 3))
    common.add_argument("--zero-one-encoding", dest="zero_one_encoding", action="store_true", default=None)
    common.add_argument("--reuse-structure", dest="reuse_structure", action="store_true", default=None)
    common.add_argument("--unbiased-moment", dest="unbiased_moment", action="store_true", default=None)
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--data", metavar="PATH")
    common.add_argument("--model", metavar="PATH")
    common.add_argument("--n", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--harness", choices=("auc", "calibration", "scaling", "robustness"))
    common.add_argument("--datasets", type=int)
    common.add_argument("--seeds", type=int)
    common.add_argument("--n-list", dest="n_list", type=_ints)
    common.add_argument("--accuracies", type=_floats)
    common.add_argument("--p1", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--level", type=float)

    parser = argparse.ArgumentParser(prog="ivysynth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", ""))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cfg = RunConfig.from_sources(args.config, vars(args))
            out, path = COMMANDS[args.command](cfg)
        except NumericalFailure as exc:
            _fail(exc, caught)
            return 3
        except (IvyError, UnknownPreset, ValueError, KeyError, OSError) as exc:
            _fail(exc, caught)
            return 2
    diagnostics = [f"{w.category.__name__}: {w.message}" for w in caught]
    out["diagnostics"] = sorted(set(diagnostics), key=diagnostics.index)
    dump_json(out, path)
    return 0


def _fail(exc, caught):
    diag = [f"{w.category.__name__}: {w.message}" for w in caught] + [f"{type(exc).__name__}: {exc}"]
    dump_json({"version": FORMAT_VERSION, "kind": "error", "error": type(exc).__name__,
               "message": str(exc), "diagnostics": diag}, None)
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def main_exit():  # pragma: no cover - console-script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
