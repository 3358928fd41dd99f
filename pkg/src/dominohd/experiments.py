"""Experiment driver behind the command line: configs, run records and commands.

Every command takes one flat :class:`ExperimentConfig`, writes its artifacts
under ``config.out`` and returns plain Python data. Domain and holdout
numbers are 1-based here, matching how subjects are usually counted; the
library underneath is 0-based.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .container import load_model, save_model
from .data import (
    DataError,
    SplitSpec,
    SyntheticSpec,
    WindowedDataset,
    generate_synthetic,
    load_dataset,
    load_dataset_file,
    make_split,
    save_dataset,
)
from .data.loaders import DATASETS
from .generalization import DominoConfig, DominoModel, run_domino
from .inference import encode_queries, evaluate, evaluate_under_faults
from .training import TrainConfig, predict_rows


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _int_list(s):
    return tuple(int(x) for x in str(s).split(",") if x.strip())


def _float_list(s):
    return tuple(float(x) for x in str(s).split(",") if x.strip())


def _opt_int(s):
    return None if s is None or str(s).strip().lower() in ("", "none") else int(s)


def _opt_str(s):
    return None if s is None or str(s).strip().lower() in ("", "none") else str(s)


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    # data
    dataset: str = "synthetic"  # synthetic | dsads | uschad | pamap2 | path to a .domd file
    root: str | None = None
    synth_classes: int = 4
    synth_domains: int = 4
    synth_sensors: int = 8
    synth_window: int = 32
    synth_per_domain: int = 120
    synth_shift: float = 2.0
    synth_noise: float = 0.5
    synth_planted: float = 0.25
    # model
    dim: int = 256
    effective_dim: int = 768
    regen_rate: float = 0.25
    eta: float = 0.035
    epochs: int = 1
    n_gram: int = 3
    backend: str = "ngram"
    from_scratch: bool = False
    seed: int = 0
    # split; holdout and major_domain are 1-based, holdout None trains on everything
    split: str = "lodo"
    holdout: int | None = None
    fraction: float = 1.0
    major_domain: int = 1
    folds: int = 5
    fold: int = 0
    baseline: str = "physical"  # physical | effective | none
    # robustness
    bitwidth: tuple = (1, 2, 4, 8)
    flip_rates: tuple = (0.0, 0.01, 0.05, 0.1)
    trials: int = 20
    model: str | None = None
    # sweep grids
    dims: tuple = (256,)
    effective_dims: tuple = (768,)
    regen_rates: tuple = (0.05, 0.15, 0.25, 0.4, 0.6)
    sweep_protocol: str = "split"  # split | lodo
    # execution
    workers: int = 1
    out: str = "runs"

    def validate(self) -> ExperimentConfig:
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(f"{name}: {msg}")

        need(self.dataset in ("synthetic", *DATASETS) or self.dataset.endswith(".domd"), "dataset",
             f"expected synthetic, {', '.join(DATASETS)} or a .domd file, got {self.dataset!r}")
        need(self.dataset not in DATASETS or self.root, "root", f"dataset {self.dataset} needs --root")
        for name in ("synth_classes", "synth_domains", "synth_sensors", "synth_window", "synth_per_domain",
                     "dim", "effective_dim", "epochs", "n_gram", "workers", "trials"):
            need(getattr(self, name) >= 1, name, "must be >= 1")
        need(self.synth_domains >= 2, "synth_domains", "need at least two domains")
        need(self.synth_shift >= 0 and self.synth_noise >= 0, "synth_shift", "shift and noise must be >= 0")
        need(0.0 <= self.synth_planted <= 1.0, "synth_planted", "must lie in [0, 1]")
        need(self.effective_dim >= self.dim, "effective_dim", "must be >= dim")
        need(0.0 < self.regen_rate < 1.0, "regen_rate", "must lie in (0, 1)")
        need(self.eta >= 0.0, "eta", "must be >= 0")
        need(self.backend in ("ngram", "rbf"), "backend", "must be ngram or rbf")
        need(self.split in ("lodo", "partial", "imbalanced", "kfold"), "split",
             "must be lodo, partial, imbalanced or kfold")
        need(self.holdout is None or self.holdout >= 1, "holdout", "domains are numbered from 1")
        need(self.major_domain >= 1, "major_domain", "domains are numbered from 1")
        need(0.0 < self.fraction <= 1.0, "fraction", "must lie in (0, 1]")
        need(self.folds >= 2 and 0 <= self.fold < self.folds, "fold", "need folds >= 2 and 0 <= fold < folds")
        need(self.baseline in ("physical", "effective", "none"), "baseline", "must be physical, effective or none")
        need(len(self.bitwidth) > 0 and all(b in (1, 2, 4, 8) for b in self.bitwidth), "bitwidth",
             "values must come from 1, 2, 4, 8")
        need(len(self.flip_rates) > 0 and all(0.0 <= r <= 1.0 for r in self.flip_rates), "flip_rates",
             "values must lie in [0, 1]")
        need(len(self.dims) > 0 and all(d >= 1 for d in self.dims), "dims", "grid values must be positive")
        need(len(self.effective_dims) > 0 and all(d >= 1 for d in self.effective_dims), "effective_dims",
             "grid values must be positive")
        need(len(self.regen_rates) > 0 and all(0.0 < r < 1.0 for r in self.regen_rates), "regen_rates",
             "grid values must lie in (0, 1)")
        need(all(e >= d for d in self.dims for e in self.effective_dims), "effective_dims",
             "every effective dimension must be >= every physical dimension in the grid")
        need(self.sweep_protocol in ("split", "lodo"), "sweep_protocol", "must be split or lodo")
        return self

    def domino(self, dim=None, effective_dim=None, regen_rate=None) -> DominoConfig:
        return DominoConfig(
            physical_dim=self.dim if dim is None else dim,
            effective_dim=self.effective_dim if effective_dim is None else effective_dim,
            regen_rate=self.regen_rate if regen_rate is None else regen_rate,
            train=TrainConfig(learning_rate=self.eta, epochs=self.epochs, rng_seed=self.seed),
            from_scratch=self.from_scratch, n_gram=self.n_gram, backend=self.backend, rng_seed=self.seed)

    def baseline_domino(self) -> DominoConfig | None:
        if self.baseline == "none":
            return None
        d = self.dim if self.baseline == "physical" else self.effective_dim
        return self.domino(dim=d, effective_dim=d)

    def echo(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_PARSERS = {"int": int, "float": float, "str": str, "bool": _bool, "int | None": _opt_int,
            "str | None": _opt_str}
_LIST_PARSERS = {"bitwidth": _int_list, "dims": _int_list, "effective_dims": _int_list,
                 "flip_rates": _float_list, "regen_rates": _float_list}


def _coerce(name: str, value):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"{name}: unknown setting")
    parser = _LIST_PARSERS.get(name) or _PARSERS[_FIELD_TYPES[name]]
    if isinstance(value, (list, tuple)) and name in _LIST_PARSERS:
        value = ",".join(str(v) for v in value)
    try:
        return parser(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: cannot parse {value!r} ({e})") from e


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_config(file_values: dict | None = None, cli_values: dict | None = None) -> ExperimentConfig:
    """Merge with precedence command line > config file > defaults."""
    merged = {}
    for source in (file_values or {}, cli_values or {}):
        for k, v in source.items():
            if v is not None:
                merged[k.replace("-", "_")] = v
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in merged.items()}).validate()


def load_config_file(path) -> dict:
    try:
        return parse_config_text(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"config: cannot read {path} ({e})") from e


# ---------------------------------------------------------------- plumbing

def out_path(cfg: ExperimentConfig, name: str) -> Path:
    """Resolve an artifact name inside the output directory, refusing anything that escapes it."""
    root = Path(cfg.out).resolve()
    p = (root / name).resolve()
    if p != root and root not in p.parents:
        raise ConfigError(f"out: refusing to write {name!r} outside {root}")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def ordered_map(fn, items, workers: int = 1) -> list:
    """Run independent jobs; results come back in job order, not completion order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def version_stamp() -> dict:
    return {"dominohd": __version__, "numpy": np.__version__, "python": platform.python_version()}


@dataclasses.dataclass
class RunRecord:
    command: str
    config: dict
    baseline: bool
    history: list
    report: dict
    timings: dict
    version: dict
    extra: dict = dataclasses.field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not timings:
            d.pop("timings")
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> RunRecord:
        return cls(**json.loads(line))


def append_record(cfg: ExperimentConfig, rec: RunRecord) -> None:
    with out_path(cfg, "records.jsonl").open("a") as fh:
        fh.write(rec.to_json() + "\n")


def write_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def load_data(cfg: ExperimentConfig) -> WindowedDataset:
    if cfg.dataset == "synthetic":
        spec = SyntheticSpec(n_classes=cfg.synth_classes, n_domains=cfg.synth_domains, sensors=cfg.synth_sensors,
                             window=cfg.synth_window, per_domain=cfg.synth_per_domain,
                             shift_strength=cfg.synth_shift, planted_fraction=cfg.synth_planted,
                             noise=cfg.synth_noise, rng_seed=cfg.seed)
        return generate_synthetic(spec)[0]
    if cfg.dataset.endswith(".domd"):
        try:
            return load_dataset_file(cfg.dataset)
        except (OSError, ValueError) as e:
            raise DataError(f"cannot read dataset file {cfg.dataset}: {e}") from e
    return load_dataset(cfg.root, cfg.dataset, workers=cfg.workers)


def split_data(cfg: ExperimentConfig, ds: WindowedDataset, holdout: int | None = None):
    """(train, test) for a 1-based holdout; with no holdout (and no k-fold) test is the training set."""
    holdout = cfg.holdout if holdout is None else holdout
    if cfg.split != "kfold" and holdout is None:
        return ds, ds
    if holdout is not None and holdout > ds.n_domains:
        raise ConfigError(f"holdout: domain {holdout} does not exist (dataset has {ds.n_domains})")
    if cfg.major_domain > ds.n_domains:
        raise ConfigError(f"major_domain: domain {cfg.major_domain} does not exist")
    spec = SplitSpec(mode=cfg.split, holdout=(holdout or 1) - 1, fraction=cfg.fraction,
                     major_domain=cfg.major_domain - 1, folds=cfg.folds, fold=cfg.fold, rng_seed=cfg.seed)
    return make_split(ds, spec)


def fit_and_score(cfg: ExperimentConfig, dcfg: DominoConfig, train: WindowedDataset, test: WindowedDataset,
                  workers: int = 1) -> tuple[DominoModel, dict, dict]:
    """Train one model and evaluate it; returns (model, report dict, timings)."""
    timings: dict = {}
    model = run_domino(train, dcfg, workers=workers, timings=timings)
    report = evaluate(model, test)
    timings["inference_s"] = report.latency["encode_s"] + report.latency["score_s"]
    rep = report.to_dict()
    rep.pop("latency")
    return model, rep, timings


def _record(command, cfg, model, report, timings, **extra) -> RunRecord:
    return RunRecord(command, cfg.echo(), model.is_baseline, [h.to_dict() for h in model.history], report,
                     {k: float(v) for k, v in timings.items()}, version_stamp(), extra)


# ---------------------------------------------------------------- commands

def cmd_train(cfg: ExperimentConfig) -> RunRecord:
    """Train one model on the chosen split and save model.domv."""
    ds = load_data(cfg)
    train, test = split_data(cfg, ds)
    model, report, timings = fit_and_score(cfg, cfg.domino(), train, test, cfg.workers)
    path = save_model(model, out_path(cfg, "model.domv"))
    rec = _record("train", cfg, model, report, timings, model_file=path.name)
    append_record(cfg, rec)
    return rec


def cmd_eval(cfg: ExperimentConfig) -> RunRecord:
    """Score a saved model container on the chosen split."""
    if not cfg.model:
        raise ConfigError("model: eval needs --model")
    model = load_model(cfg.model)
    _, test = split_data(cfg, load_data(cfg))
    report = evaluate(model, test)
    timings = {"inference_s": report.latency["encode_s"] + report.latency["score_s"]}
    rep = report.to_dict()
    rep.pop("latency")
    rec = _record("eval", cfg, model, rep, timings)
    append_record(cfg, rec)
    return rec


def cmd_lodo(cfg: ExperimentConfig) -> dict:
    """One run per domain with data, each holding that domain out."""
    ds = load_data(cfg)
    present = [int(d) + 1 for d in np.flatnonzero(ds.domain_counts() > 0)]
    if len(present) < 2:
        raise DataError("leave-one-domain-out needs at least two domains with data")
    base_cfg = cfg.baseline_domino()
    lodo_cfg = dataclasses.replace(cfg, split="lodo")

    def job(holdout):
        train, test = split_data(lodo_cfg, ds, holdout)
        model, report, timings = fit_and_score(cfg, cfg.domino(), train, test)
        row = {"domain": holdout, "n_test": len(test), "accuracy": report["overall_accuracy"]}
        recs = [_record("lodo", dataclasses.replace(cfg, holdout=holdout), model, report, timings)]
        if base_cfg is not None:
            bmodel, brep, btim = fit_and_score(cfg, base_cfg, train, test)
            row["baseline_accuracy"] = brep["overall_accuracy"]
            recs.append(_record("lodo", dataclasses.replace(cfg, holdout=holdout), bmodel, brep, btim,
                                role="baseline"))
        return row, recs

    results = ordered_map(job, present, cfg.workers)
    rows = [r for r, _ in results]
    for _, recs in results:
        for rec in recs:
            append_record(cfg, rec)
    mean = {"domain": "mean", "n_test": sum(r["n_test"] for r in rows),
            "accuracy": float(np.mean([r["accuracy"] for r in rows]))}
    if base_cfg is not None:
        mean["baseline_accuracy"] = float(np.mean([r["baseline_accuracy"] for r in rows]))
    write_csv(out_path(cfg, "lodo.csv"), rows + [mean])
    return {"rows": rows, "mean": mean}


def lodo_accuracy(cfg: ExperimentConfig, dcfg: DominoConfig, ds: WindowedDataset) -> float:
    lodo_cfg = dataclasses.replace(cfg, split="lodo")
    accs = []
    for d in np.flatnonzero(ds.domain_counts() > 0):
        train, test = split_data(lodo_cfg, ds, int(d) + 1)
        accs.append(fit_and_score(cfg, dcfg, train, test)[1]["overall_accuracy"])
    return float(np.mean(accs))


def cmd_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Full Cartesian product of (D, D*, R)."""
    ds = load_data(cfg)
    grid = list(itertools.product(cfg.dims, cfg.effective_dims, cfg.regen_rates))

    def job(point):
        d, e, r = point
        dcfg = cfg.domino(d, e, r)
        t0 = time.perf_counter()
        if cfg.sweep_protocol == "lodo":
            acc = lodo_accuracy(cfg, dcfg, ds)
        else:
            train, test = split_data(cfg, ds)
            acc = fit_and_score(cfg, dcfg, train, test)[1]["overall_accuracy"]
        return {"dim": d, "effective_dim": e, "regen_rate": r, "iterations": dcfg.iterations,
                "accuracy": acc, "runtime_s": time.perf_counter() - t0}

    rows = ordered_map(job, grid, cfg.workers)
    write_csv(out_path(cfg, "sweep.csv"), rows)
    return rows


def trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence([seed, 3]).spawn(trials)]


def cmd_robustness(cfg: ExperimentConfig) -> list[dict]:
    """Accuracy loss under quantization and random bit flips."""
    ds = load_data(cfg)
    train, test = split_data(cfg, ds)
    model = load_model(cfg.model) if cfg.model else run_domino(train, cfg.domino(), workers=cfg.workers)
    h = encode_queries(model, test.windows)
    seeds = trial_seeds(cfg.seed, cfg.trials)

    def job(b):
        return evaluate_under_faults(model, test, [b], cfg.flip_rates, seeds, encoded=h)

    rows = [r.to_dict() for chunk in ordered_map(job, cfg.bitwidth, cfg.workers) for r in chunk]
    out_path(cfg, "robustness.json").write_text(json.dumps({"config": cfg.echo(), "rows": rows}, sort_keys=True))
    write_csv(out_path(cfg, "robustness.csv"),
              [{k: v for k, v in r.items() if k != "losses"} for r in rows])
    return rows


def cmd_bench(cfg: ExperimentConfig, fractions=(0.25, 0.5, 0.75, 1.0)) -> dict:
    """Encode / train / inference wall-clock on nested growing slices of the training data."""
    ds = load_data(cfg)
    train, test = split_data(cfg, ds)
    order = np.random.default_rng(cfg.seed).permutation(len(train))
    rows = []
    for f in fractions:
        part = train.subset(np.sort(order[:max(1, int(round(f * len(train))))]))
        _, report, timings = fit_and_score(cfg, cfg.domino(), part, test)
        rows.append({"fraction": f, "n_train": len(part), **{k: timings.get(k, 0.0) for k in
                     ("encode_s", "train_s", "generalize_s", "inference_s")}, "accuracy": report["overall_accuracy"]})
    # scoring cost alone at the physical and the effective width, same queries
    q = np.random.default_rng(cfg.seed).standard_normal((len(test), 1))
    scoring = {}
    for name, d in (("physical", cfg.dim), ("effective", cfg.effective_dim)):
        rows_d = np.ones((ds.n_classes, d))
        queries = np.repeat(q, d, axis=1)
        t0 = time.perf_counter()
        for _ in range(5):
            predict_rows(rows_d, queries)
        scoring[f"score_s_{name}"] = (time.perf_counter() - t0) / 5
    write_csv(out_path(cfg, "bench.csv"), rows)
    result = {"config": cfg.echo(), "rows": rows, "scoring": scoring, "version": version_stamp()}
    out_path(cfg, "bench.json").write_text(json.dumps(result, sort_keys=True))
    return result


def cmd_synth(cfg: ExperimentConfig) -> dict:
    """Write a synthetic dataset with planted domain shift."""
    spec = SyntheticSpec(n_classes=cfg.synth_classes, n_domains=cfg.synth_domains, sensors=cfg.synth_sensors,
                         window=cfg.synth_window, per_domain=cfg.synth_per_domain, shift_strength=cfg.synth_shift,
                         planted_fraction=cfg.synth_planted, noise=cfg.synth_noise, rng_seed=cfg.seed)
    ds, truth = generate_synthetic(spec)
    path = out_path(cfg, "synthetic.domd")
    save_dataset(ds, path)
    info = {"file": path.name, "windows": len(ds), "planted_channels": list(truth.channels),
            "spec": dataclasses.asdict(spec)}
    out_path(cfg, "synthetic.json").write_text(json.dumps(info, sort_keys=True))
    return info


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "lodo": cmd_lodo, "sweep": cmd_sweep,
            "robustness": cmd_robustness, "bench": cmd_bench, "synth": cmd_synth}
