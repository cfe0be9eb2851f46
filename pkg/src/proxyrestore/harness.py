"""Config-driven sweeps over processes, sample sizes, proxy scales and seeds.

Every (process, n, seed) cell draws its dataset from a substream keyed on
the cell; every fit draws from a substream keyed on the full row key.  The
result table therefore does not depend on the worker count or the order in
which tasks finish.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import analytic, cevae, datagen, metrics
from .datagen import BinaryParams, ProcessVariant
from .errors import ContractError, SchemaError
from .numerics import RandomStream

ESTIMATOR_KINDS = ("analytic", "direct_adjust", "no_adjust", "cevae")
INITS = (None, "split_2d", "true")


@dataclass(frozen=True)
class EstimatorSpec:
    id: str
    kind: str
    cevae: Optional[cevae.CevaeConfig] = None
    init: Optional[str] = None
    # overrides applied to training when a custom init is used
    init_epochs: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"estimator kind must be one of {ESTIMATOR_KINDS}")
        if self.kind == "cevae" and self.cevae is None:
            raise ValueError(f"estimator {self.id!r} needs a CEVAE config")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")

    def to_dict(self) -> dict:
        out = {"id": self.id, "kind": self.kind}
        if self.cevae is not None:
            out["config"] = self.cevae.to_dict()
        if self.init is not None:
            out["init"] = self.init
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimatorSpec":
        cfg = doc.get("config")
        return cls(doc["id"], doc["kind"], cevae.CevaeConfig(**cfg) if cfg is not None else None, doc.get("init"))


@dataclass(frozen=True)
class ProcessEntry:
    id: str
    process: object  # ProcessVariant, LinearGaussianParams or BinaryParams
    source: dict = field(default_factory=dict, compare=False)

    @property
    def binary(self) -> bool:
        return isinstance(self.process, BinaryParams)

    @classmethod
    def parse(cls, doc) -> "ProcessEntry":
        """A named process, ``{"id", "process": {...}}`` or ``{"id", "sample": kind, "seed"}``."""
        if isinstance(doc, str):
            return cls(doc, datagen.named_process(doc), {"name": doc})
        if "name" in doc:
            return cls(doc.get("id", doc["name"]), datagen.named_process(doc["name"]), dict(doc))
        if "sample" in doc:
            stream = RandomStream(int(doc["seed"])).child("process", doc["sample"])
            if doc["sample"] == "lingauss":
                proc = datagen.sample_lingauss_params(stream)
            elif doc["sample"] == "binary":
                proc = datagen.sample_binary_params(stream)
            else:
                raise ValueError("sample must be 'lingauss' or 'binary'")
            return cls(doc.get("id", f"sampled_{doc['sample']}_{doc['seed']}"), proc, dict(doc))
        return cls(doc["id"], datagen.process_from_dict(doc["process"]), dict(doc))

    def to_dict(self):
        if self.source:
            return self.source
        return {"id": self.id, "process": datagen.process_to_dict(self.process)}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    processes: tuple
    estimators: tuple
    sample_sizes: tuple
    seeds: tuple = tuple(range(10))
    proxy_scales: tuple = (1.0,)
    aid: metrics.AidSpec = metrics.AidSpec()
    seed: int = 0
    output: Optional[str] = None
    record_time: bool = False

    def __post_init__(self):
        for name in ("processes", "estimators", "sample_sizes", "seeds", "proxy_scales"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.seeds:
            raise ContractError("at least one replication seed is required")
        if not (self.processes and self.estimators and self.sample_sizes):
            raise ContractError("processes, estimators and sample_sizes must be nonempty")
        if any(l < 0 for l in self.proxy_scales):
            raise ContractError("proxy scales must be >= 0")
        ids = [e.id for e in self.estimators]
        if len(set(ids)) != len(ids):
            raise ContractError("estimator ids must be unique")
        for p in self.processes:
            for e in self.estimators:
                _check_compatible(p, e)

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "processes": [p.to_dict() for p in self.processes],
            "estimators": [e.to_dict() for e in self.estimators],
            "sample_sizes": list(self.sample_sizes),
            "seeds": list(self.seeds),
            "proxy_scales": list(self.proxy_scales),
            "aid": dataclasses.asdict(self.aid),
            "seed": self.seed,
            "output": self.output,
            "record_time": self.record_time,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        return cls(
            experiment_id=doc["experiment_id"],
            processes=tuple(ProcessEntry.parse(p) for p in doc["processes"]),
            estimators=tuple(EstimatorSpec.from_dict(e) for e in doc["estimators"]),
            sample_sizes=tuple(int(n) for n in doc["sample_sizes"]),
            seeds=tuple(int(s) for s in doc.get("seeds", range(10))),
            proxy_scales=tuple(float(l) for l in doc.get("proxy_scales", (1.0,))),
            aid=metrics.AidSpec(**doc.get("aid", {})),
            seed=int(doc.get("seed", 0)),
            output=doc.get("output"),
            record_time=bool(doc.get("record_time", False)),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def _check_compatible(p: ProcessEntry, e: EstimatorSpec):
    if p.binary:
        if e.kind in ("direct_adjust", "no_adjust"):
            raise SchemaError(f"{e.id} is a regression baseline and needs continuous data ({p.id})")
        if e.kind == "cevae" and e.cevae.variant == "linear":
            raise SchemaError(f"{e.id}: the linear variant needs continuous data ({p.id})")
    if e.init is not None and (p.binary or _base_params(p.process) is None):
        raise SchemaError(f"{e.id}: constructed inits need a linear-Gaussian process ({p.id})")


def _base_params(process):
    if isinstance(process, ProcessVariant):
        return process.base if process.kind == "plain" else None
    if isinstance(process, datagen.LinearGaussianParams):
        return process
    return None


# Results ------------------------------------------------------------------------

@dataclass
class ResultRow:
    experiment_id: str
    process_id: str
    estimator_id: str
    n: int
    proxy_scale: Optional[float]
    seed: int
    aid: Optional[float] = None
    ate_error: Optional[float] = None
    c_yt_hat: Optional[float] = None
    do_mean_t0: Optional[float] = None
    do_mean_t1: Optional[float] = None
    active_dims: Optional[int] = None
    final_elbo: Optional[float] = None
    wall_clock: Optional[float] = None
    error: Optional[str] = None

    @property
    def key(self) -> tuple:
        lam = -1.0 if self.proxy_scale is None else self.proxy_scale
        return (self.experiment_id, self.process_id, self.estimator_id, self.n, lam, self.seed)


COLUMNS = [f.name for f in dataclasses.fields(ResultRow)]
_TYPES = {f.name: f.type for f in dataclasses.fields(ResultRow)}


def _cell_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_cell(name, s):
    if s == "" or s is None:
        return None
    t = _TYPES[name]
    if "int" in t:
        return int(s)
    if "float" in t:
        return float(s)
    return s


def emit(results, path, fmt: Optional[str] = None) -> Path:
    """Write rows as CSV (ResultRow column order) or a JSON array."""
    if not results:
        raise ContractError("no results to emit")
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in results:
                w.writerow([_cell_value(getattr(r, c)) for c in COLUMNS])
    elif fmt == "json":
        path.write_text(json.dumps([dataclasses.asdict(r) for r in results], indent=1) + "\n")
    else:
        raise ValueError("format must be 'csv' or 'json'")
    return path


def load_results(path) -> list:
    path = Path(path)
    if path.suffix == ".json":
        return [ResultRow(**doc) for doc in json.loads(path.read_text())]
    with open(path, newline="") as fh:
        return [ResultRow(**{k: _parse_cell(k, v) for k, v in row.items()}) for row in csv.DictReader(fh)]


# Execution ------------------------------------------------------------------------

def _fit_row(config: ExperimentConfig, task) -> ResultRow:
    pi, n, seed, ei, lam = task
    proc = config.processes[pi]
    est = config.estimators[ei]
    row = ResultRow(config.experiment_id, proc.id, est.id, n, lam, seed)
    root = RandomStream(config.seed)
    try:
        t0 = time.perf_counter()
        data = datagen.generate(proc.process, n, root.child("data", config.experiment_id, proc.id, n, seed))
        obs = data.observed()
        fit_stream = root.child("fit", *row.key)
        truth = datagen.true_do(proc.process)
        model = None
        if est.kind == "analytic":
            if proc.binary:
                do = analytic.restore_binary(obs)
            else:
                res = analytic.restore_lingauss_data(obs)
                do, row.c_yt_hat = res.do_dist, res.c_yt_hat
        elif est.kind in ("direct_adjust", "no_adjust"):
            res = analytic.direct_adjust(obs) if est.kind == "direct_adjust" else analytic.no_adjust(obs)
            do, row.c_yt_hat = res.do_dist, res.coef_t
        else:
            model, do = _fit_cevae(est, lam, obs, proc, fit_stream)
            if model.config.y_head == "linear":
                row.c_yt_hat = cevae.extract_cyt(model)
            if not model.binary_latent:
                row.active_dims = cevae.active_dims(cevae.latent_activity(model, obs))
            row.final_elbo = cevae.evaluate_elbo(model, obs, fit_stream.child("elbo")).value
        row.aid = metrics.aid(do, truth, obs, config.aid, fit_stream.child("aid"))
        row.ate_error = metrics.ate_error(do, truth)
        row.do_mean_t0, row.do_mean_t1 = (float(v) for v in metrics.do_means(do, [0.0, 1.0]))
        if config.record_time:
            row.wall_clock = time.perf_counter() - t0
    except Exception as exc:  # recorded in-band; sibling cells keep running
        row.error = f"{type(exc).__name__}: {exc}"
        if os.environ.get("PROXYRESTORE_TRACEBACK"):
            traceback.print_exc()
    return row


def _fit_cevae(est: EstimatorSpec, lam, obs, proc: ProcessEntry, stream: RandomStream):
    cfg = est.cevae if lam is None else dataclasses.replace(est.cevae, proxy_scale=lam)
    init = None
    if est.init == "split_2d":
        init = cevae.search_split_init(cfg, _base_params(proc.process)).model
    elif est.init == "true":
        init = cevae.true_linear_init(cfg, _base_params(proc.process))
    model, _ = cevae.train(cfg, obs, stream, init=init)
    if cfg.variant == "linear":
        do = cevae.linear_do(model)
    else:
        do = cevae.estimate_do(model, n_z=cfg.n_z, stream=stream.child("do"))
    return model, do


def tasks(config: ExperimentConfig) -> list:
    out = []
    for pi in range(len(config.processes)):
        for n in config.sample_sizes:
            for seed in config.seeds:
                for ei, est in enumerate(config.estimators):
                    lams = config.proxy_scales if est.kind == "cevae" else (None,)
                    out.extend((pi, n, seed, ei, lam) for lam in lams)
    return out


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PROXYRESTORE_WORKERS", "1")))
    except ValueError:
        return 1


def _worker_init():
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def _run_chunk(args):
    config, task = args
    return _fit_row(config, task)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None, progress=None) -> list:
    """Run the full cross product; rows come back sorted by key."""
    workers = default_workers() if workers is None else max(1, int(workers))
    todo = tasks(config)
    rows = []
    if workers == 1 or len(todo) == 1:
        for i, task in enumerate(todo):
            rows.append(_fit_row(config, task))
            if progress:
                progress(i + 1, len(todo), rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as pool:
            for i, row in enumerate(pool.map(_run_chunk, [(config, t) for t in todo])):
                rows.append(row)
                if progress:
                    progress(i + 1, len(todo), row)
    rows.sort(key=lambda r: r.key)
    if config.output:
        emit(rows, config.output)
    return rows


def summarize(rows, value: str = "aid") -> dict:
    """Median of ``value`` per (process, estimator, n, proxy_scale), skipping failed rows."""
    groups = {}
    for r in rows:
        v = getattr(r, value)
        if r.error is None and v is not None:
            groups.setdefault((r.process_id, r.estimator_id, r.n, r.proxy_scale), []).append(v)
    return {k: float(np.median(v)) for k, v in sorted(groups.items(), key=lambda kv: tuple(str(x) for x in kv[0]))}


def select(rows, **where) -> list:
    return [r for r in rows if all(getattr(r, k) == v for k, v in where.items())]


# Constructed ELBO path with exact proxy copies ----------------------------------

def prop2_path_eval(gamma1: float, s_values, copy_count: int) -> np.ndarray:
    """Non-constant part of the ELBO along the path gamma1 * gamma_z1 = 1,
    s1^(4/5) = s_(z1|x) = s, for ``copy_count`` copies of a proxy:
    (1 - 5N/8) ln s - N gamma1^2 / 2 - s^2 / 2.
    """
    s = np.asarray(s_values, dtype=float)
    if copy_count not in (1, 2):
        raise ValueError("copy_count must be 1 or 2")
    if np.any((s <= 0) | (s >= 1)):
        raise ValueError("s values must lie in (0, 1)")
    N = copy_count
    return (1.0 - 5.0 * N / 8.0) * np.log(s) - N * gamma1**2 / 2.0 - s**2 / 2.0


def preset(name: str) -> ExperimentConfig:
    from .presets import PRESETS

    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; options: {', '.join(PRESETS)}") from None
