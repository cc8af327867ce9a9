"""Configuration-driven experiments on ElementWorld: fit, evaluate, aggregate, sweep."""

from __future__ import annotations

import csv
import io
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bounds import mean_intercluster_margin
from .elementworld import ElementWorldConfig, generate, geometric_weights, intent_policies, make_dataset
from .em import (
    DEFAULT_L2,
    center_features,
    e_step,
    hard_responsibilities,
    mixture_log_likelihood,
    random_init,
    run_em,
    supervised_baseline,
    warmstart,
)
from .errors import ValidationError
from .maxent import FitOptions, MaxEntModel
from .metrics import anid, gevd, soft_contingency
from .seeding import child_seeds

ALGORITHMS = ("limiirl-mle", "limiirl-mean", "limiirl-gmm-mle", "limiirl-gmm-mean", "random", "supervised")
SWEEP_AXES = ("n_demos", "wind", "K", "E", "imbalance_p", "clustering_method")
METRICS = ("iterations", "wall_time_s", "test_nll", "anid", "gevd", "normalized_gevd")

# (clustering method, init) for the warm-started variants
_WARMSTART = {
    "limiirl-mle": ("kmeans", "mle"),
    "limiirl-mean": ("kmeans", "mean"),
    "limiirl-gmm-mle": ("gmm", "mle"),
    "limiirl-gmm-mean": ("gmm", "mean"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an ElementWorld family, the algorithms to compare and the seeds to repeat over.

    ``environment`` holds :class:`ElementWorldConfig` keyword arguments (its
    ``seed`` is ignored; each run derives its own) plus an optional
    ``imbalance_p`` giving geometric intent weights. ``K=None`` means one
    component per element.
    """

    environment: dict = field(default_factory=dict)
    algorithms: tuple = ("limiirl-mle",)
    K: int | None = None
    n_train: int = 100
    n_test: int = 100
    epsilon: float = 1e-2
    seeds: tuple = (0,)
    max_em_iters: int = 100
    l2: float = DEFAULT_L2
    center: bool = True
    metrics: dict = field(default_factory=lambda: {"nll": True, "anid": True, "gevd": True})
    mc_samples: int = 1000
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        algs = (self.algorithms,) if isinstance(self.algorithms, str) else tuple(self.algorithms)
        object.__setattr__(self, "algorithms", algs)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not algs:
            raise ValidationError("at least one algorithm is required")
        bad = [a for a in algs if a not in ALGORITHMS]
        if bad:
            raise ValidationError(f"unknown algorithm(s) {bad}; choose from {list(ALGORITHMS)}")
        if not self.seeds:
            raise ValidationError("seeds must be non-empty")
        if self.n_train < 1 or self.n_test < 1:
            raise ValidationError("n_train and n_test must be >= 1")
        if self.K is not None and self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        self.env_config(0)  # validates the environment block

    def env_config(self, seed) -> ElementWorldConfig:
        env = {k: v for k, v in self.environment.items() if k not in ("seed", "imbalance_p")}
        p = self.environment.get("imbalance_p")
        if p is not None:
            env["cluster_weights"] = tuple(geometric_weights(p, env.get("num_elements", 3)))
        return ElementWorldConfig(seed=seed, **env)

    @property
    def num_components(self) -> int:
        return self.env_config(0).num_elements if self.K is None else self.K

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "algorithm" in d:
            d["algorithms"] = d.pop("algorithm")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class RunRecord:
    seed: int
    algorithm: str
    iterations: int | None = None
    wall_time_s: float = float("nan")
    test_nll: float = float("nan")
    anid: float = float("nan")
    gevd: float = float("nan")
    normalized_gevd: float = float("nan")
    converged: bool | None = None
    monotone: bool | None = None
    learned_weights: list | None = None
    # learned weight of the component matched to each ground-truth intent
    matched_weights: list | None = None
    true_weights: list | None = None
    intercluster_margin: float = float("nan")
    flags: list = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _match_components(u_test, labels, E, learned_weights):
    """Learned weight assigned to each ground-truth intent by maximum soft overlap."""
    overlap = soft_contingency(hard_responsibilities(labels, E), u_test)
    rows, cols = linear_sum_assignment(-overlap)
    out = [0.0] * E
    for r, c in zip(rows, cols):
        out[r] = float(learned_weights[c])
    return out


def _fit(alg, model, train, train_labels, K, E, config, seed):
    fit_opts = FitOptions()
    if alg == "supervised":
        ens = supervised_baseline(model, train, train_labels, K=E, l2=config.l2, fit_opts=fit_opts)
        return ens, None, None, None
    if alg == "random":
        init, init_u = random_init(model.dim, K, seed), None
    else:
        method, how = _WARMSTART[alg]
        init, init_u = warmstart(model, train, K, method, how, seed, config.l2, fit_opts)
    ens, _, trace = run_em(model, train, init, config.epsilon, config.max_em_iters, config.l2, fit_opts, init_u)
    return ens, trace.iterations, trace.converged, trace.is_monotone()


def run_seed(config: ExperimentConfig, seed: int) -> list[RunRecord]:
    """The full pipeline for one seed: instance, demonstrations, every algorithm, metrics."""
    env_seed, data_seed, *alg_seeds = child_seeds(seed, 2 + len(ALGORITHMS))
    try:
        inst = generate(config.env_config(env_seed))
        policies = intent_policies(inst)
        trajs, labels = make_dataset(inst, config.n_train + config.n_test, data_seed, policies=policies)
    except Exception as exc:  # recorded, the sweep carries on
        err = f"{type(exc).__name__}: {exc}"
        return [RunRecord(seed, alg, error=err) for alg in config.algorithms]

    E = inst.config.num_elements
    K = config.num_components
    train, test = trajs[: config.n_train], trajs[config.n_train:]
    train_labels, test_labels = labels[: config.n_train], labels[config.n_train:]
    raw_model = MaxEntModel(inst.mdp, inst.fmap, inst.config.max_len)
    margin = mean_intercluster_margin(raw_model.features(train), train_labels)
    fmap = center_features(inst.mdp, inst.fmap, train) if config.center else inst.fmap
    model = raw_model.with_features(fmap)

    records = []
    for alg in config.algorithms:
        rec = RunRecord(seed, alg, intercluster_margin=margin, true_weights=inst.ground_truth.weights.tolist())
        try:
            t0 = time.perf_counter()
            ens, rec.iterations, rec.converged, rec.monotone = _fit(
                alg, model, train, train_labels, K, E, config, alg_seeds[ALGORITHMS.index(alg)])
            rec.wall_time_s = time.perf_counter() - t0
            rec.learned_weights = ens.weights.tolist()
            if config.metrics.get("nll", True):
                rec.test_nll = -mixture_log_likelihood(ens, model, test) / len(test)
            u_test = e_step(ens, model, test)
            rec.matched_weights = _match_components(u_test, test_labels, E, ens.weights)
            if config.metrics.get("anid", True):
                rep = anid(u_test, hard_responsibilities(test_labels, E), config.mc_samples, seed)
                rec.anid = rep.anid
                rec.flags += rep.flags
            if config.metrics.get("gevd", True):
                rep = gevd(inst.mdp, inst.fmap, inst.ground_truth, ens, learned_fmap=fmap)
                rec.gevd, rec.normalized_gevd = rep.gevd, rep.normalized_gevd
                rec.flags += rep.flags
        except Exception as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
            rec.flags.append(traceback.format_exc(limit=3))
        records.append(rec)
    return records


def _run_seed_args(args):
    return run_seed(*args)


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    """One record per (seed, algorithm), in config order. Seeds may run in worker processes."""
    jobs = [(config, s) for s in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            per_seed = list(pool.map(_run_seed_args, jobs))
    else:
        per_seed = [run_seed(*j) for j in jobs]
    # group by algorithm, then seed
    by_alg = {a: [] for a in config.algorithms}
    for recs in per_seed:
        for r in recs:
            by_alg[r.algorithm].append(r)
    return [r for a in config.algorithms for r in by_alg[a]]


def mean_ci(values):
    """``(mean, half_width)`` of the 95% normal-approximation interval; NaNs are dropped."""
    x = np.asarray([v for v in values if v is not None], dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / np.sqrt(x.size))


def aggregate(records: list[RunRecord]) -> dict:
    """Per-algorithm mean and CI half-width for every metric, plus failure counts."""
    out = {}
    for alg in dict.fromkeys(r.algorithm for r in records):
        recs = [r for r in records if r.algorithm == alg]
        ok = [r for r in recs if r.ok]
        row = {"runs": len(recs), "failed": len(recs) - len(ok)}
        for m in METRICS + ("intercluster_margin",):
            row[m], row[m + "_ci95"] = mean_ci([getattr(r, m) for r in ok])
        row["all_monotone"] = all(r.monotone is not False for r in ok)
        out[alg] = row
    return out


def summary_table(agg: dict) -> str:
    """Plain-text table with one row per algorithm: mean +- 95% CI half-width."""
    cols = ("iterations", "wall_time_s", "test_nll", "anid", "gevd")
    heads = ("Iterations", "Duration (s)", "NLL", "ANID", "GEVD")
    lines = [f"{'Method':<18}" + "".join(f"{h:>20}" for h in heads)]
    for alg, row in agg.items():
        cells = []
        for c in cols:
            m, h = row[c], row[c + "_ci95"]
            cells.append(f"{'N/A':>20}" if not np.isfinite(m) else f"{m:>11.3f} +- {h:<5.2f}")
        fail = f"  ({row['failed']} failed)" if row["failed"] else ""
        lines.append(f"{alg:<18}" + "".join(f"{c:>20}" for c in cells) + fail)
    return "\n".join(lines)


CSV_FIELDS = ("axis", "value", "row_type", "algorithm", "seed") + METRICS + (
    "converged", "monotone", "intercluster_margin", "error")


def _csv_rows(records, agg, axis="", value=""):
    for r in records:
        row = {"axis": axis, "value": value, "row_type": "run", "algorithm": r.algorithm, "seed": r.seed}
        row.update({k: getattr(r, k) for k in CSV_FIELDS[5:]})
        yield row
    for alg, a in agg.items():
        row = {"axis": axis, "value": value, "row_type": "aggregate", "algorithm": alg, "seed": "",
               "error": f"{a['failed']} failed" if a["failed"] else ""}
        row.update({m: a[m] for m in METRICS + ("intercluster_margin",)})
        row.update({m + "_ci95": a[m + "_ci95"] for m in METRICS})
        yield row


def to_csv(rows) -> str:
    buf = io.StringIO()
    fields = list(CSV_FIELDS) + [m + "_ci95" for m in METRICS]
    w = csv.DictWriter(buf, fields, restval="", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    aggregates: dict

    @property
    def failed(self) -> bool:
        return any(not r.ok for r in self.records)

    def to_dict(self):
        return {"config": self.config.to_dict(), "records": [asdict(r) for r in self.records],
                "aggregates": self.aggregates}

    def to_csv(self) -> str:
        return to_csv(_csv_rows(self.records, self.aggregates))

    def table(self) -> str:
        return summary_table(self.aggregates)

    def write(self, path):
        """``path`` ending in .csv writes the CSV; anything else writes JSON."""
        with open(path, "w") as f:
            if str(path).endswith(".csv"):
                f.write(self.to_csv())
            else:
                json.dump(self.to_dict(), f, indent=1)


def bench(config: ExperimentConfig) -> ExperimentResult:
    records = run_experiment(config)
    res = ExperimentResult(config, records, aggregate(records))
    if config.output:
        res.write(config.output)
    return res


def sweep_config(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """``base`` with one sweep axis set to ``value``."""
    env = dict(base.environment)
    if axis == "n_demos":
        return replace(base, n_train=int(value), output=None)
    if axis == "wind":
        env["wind"] = float(value)
    elif axis == "K":
        return replace(base, K=int(value), output=None)
    elif axis == "E":
        # one learned component per element; lanes keep their default width
        env["num_elements"] = int(value)
        env.pop("width", None)
        env.pop("cluster_weights", None)
        return replace(base, environment=env, K=None, output=None)
    elif axis == "imbalance_p":
        env["imbalance_p"] = float(value)
        env.pop("cluster_weights", None)
    elif axis == "clustering_method":
        if value not in ("kmeans", "gmm"):
            raise ValidationError(f"clustering_method must be 'kmeans' or 'gmm', got {value!r}")
        swap = {"limiirl-mle": "limiirl-gmm-mle", "limiirl-mean": "limiirl-gmm-mean"}
        if value == "kmeans":
            swap = {v: k for k, v in swap.items()}
        algs = tuple(dict.fromkeys(swap.get(a, a) for a in base.algorithms))
        return replace(base, algorithms=algs, output=None)
    else:
        raise ValidationError(f"unknown sweep axis {axis!r}; choose from {list(SWEEP_AXES)}")
    return replace(base, environment=env, output=None)


@dataclass
class SweepResult:
    axis: str
    cells: list  # (value, ExperimentResult)

    @property
    def failed(self) -> bool:
        return any(res.failed for _, res in self.cells)

    def to_csv(self) -> str:
        return to_csv(row for v, res in self.cells for row in _csv_rows(res.records, res.aggregates, self.axis, v))

    def to_dict(self):
        return {"axis": self.axis, "cells": [{"value": v, **res.to_dict()} for v, res in self.cells]}

    def aggregate_rows(self):
        """``(value, algorithm, aggregate_dict)`` per cell, in sweep order."""
        return [(v, alg, a) for v, res in self.cells for alg, a in res.aggregates.items()]

    def write(self, path):
        with open(path, "w") as f:
            if str(path).endswith(".json"):
                json.dump(self.to_dict(), f, indent=1)
            else:
                f.write(self.to_csv())


def run_sweep(base: ExperimentConfig, axis: str, values) -> SweepResult:
    """Cross product of ``values`` x algorithms x seeds, one aggregate row per (value, algorithm)."""
    if axis not in SWEEP_AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; choose from {list(SWEEP_AXES)}")
    configs = [sweep_config(base, axis, v) for v in values]  # validate every cell up front
    cells = []
    for v, cfg in zip(values, configs):
        records = run_experiment(cfg)
        cells.append((v, ExperimentResult(cfg, records, aggregate(records))))
    out = SweepResult(axis, cells)
    if base.output:
        out.write(base.output)
    return out
