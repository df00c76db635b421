"""Experiment configs, multi-seed sweeps, aggregation and file output.

Config files are YAML. A file holds either one experiment mapping, or a
``defaults`` mapping plus an ``experiments`` list whose entries override
those defaults. Minimal experiment::

    environment: env3x3
    model: {family: PQC_TRIPLE, layers: 10}

Every output file is a pure function of its inputs: wall-clock timings go
to the log only.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import yaml
from scipy import stats

from qnav import env, nn, pqc, rl

log = logging.getLogger(__name__)

FAMILIES = ("DDQN_MLP", "PQC_SINGLE", "PQC_TRIPLE")
BEST_K = 10
NEGATIVE_SCALE = 0.1
MISSING = "NA"

SUMMARY_COLUMNS = ("family", "size", "params", "successes", "runs", "mean_best10_steps")
CURVE_COLUMNS = ("train_step", "mean_reward_rescaled", "ci95")
RUN_COLUMNS = ("train_step", "mean_eval_reward", "epsilon")


class ConfigError(ValueError):
    def __init__(self, source: str, problems: list[str]):
        self.source = source
        self.problems = problems
        super().__init__(f"{source}: " + "; ".join(problems))


@dataclass
class ExperimentConfig:
    environment: str = "env3x3"
    family: str = "PQC_TRIPLE"
    hidden: tuple[int, int] | None = None
    layers: int | None = None
    training: rl.TrainingConfig = field(default_factory=rl.TrainingConfig)
    runs: int = 20
    base_seed: int = 0
    out_dir: str = "results"

    @property
    def size_label(self) -> str:
        if self.family == "DDQN_MLP":
            return f"{self.hidden[0]};{self.hidden[1]}"
        return f"L={self.layers}"

    @property
    def label(self) -> str:
        world = Path(self.environment).stem
        size = f"{self.hidden[0]}x{self.hidden[1]}" if self.family == "DDQN_MLP" else f"L{self.layers}"
        return f"{world}_{self.family}_{size}"

    def validate(self) -> list[str]:
        problems = []
        if self.family not in FAMILIES:
            problems.append(f"model.family must be one of {', '.join(FAMILIES)}, got {self.family!r}")
        elif self.family == "DDQN_MLP":
            if self.hidden is None or len(self.hidden) != 2 or min(self.hidden) < 1:
                problems.append("DDQN_MLP needs model.hidden as two positive integers")
            if self.layers is not None:
                problems.append("model.layers does not apply to DDQN_MLP")
        else:
            if self.layers is None or self.layers < 0:
                problems.append(f"{self.family} needs model.layers >= 0")
            if self.hidden is not None:
                problems.append(f"model.hidden does not apply to {self.family}")
        if self.runs < 1:
            problems.append("runs must be >= 1")
        if self.environment not in env.BUILTIN_NAMES and not Path(self.environment).is_file():
            problems.append(f"environment {self.environment!r} is neither a bundled world nor a file")
        problems.extend(f"training.{p}" for p in self.training.validate())
        return problems


def config_to_dict(cfg: ExperimentConfig) -> dict:
    model: dict = {"family": cfg.family}
    if cfg.hidden is not None:
        model["hidden"] = list(cfg.hidden)
    if cfg.layers is not None:
        model["layers"] = cfg.layers
    return {
        "environment": cfg.environment,
        "model": model,
        "training": dataclasses.asdict(cfg.training),
        "runs": cfg.runs,
        "base_seed": cfg.base_seed,
        "out_dir": cfg.out_dir,
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: dict, source: str = "<config>") -> ExperimentConfig:
    problems = []
    known = {"environment", "model", "training", "runs", "base_seed", "out_dir"}
    unknown = sorted(set(data) - known)
    if unknown:
        problems.append(f"unknown keys: {', '.join(unknown)}")
    model = data.get("model") or {}
    if not isinstance(model, dict):
        problems.append("model must be a mapping")
        model = {}
    training = data.get("training") or {}
    if not isinstance(training, dict):
        problems.append("training must be a mapping")
        training = {}
    bad = sorted(set(training) - set(rl.TrainingConfig.field_names()))
    if bad:
        problems.append(f"unknown training keys: {', '.join(bad)}")
    try:
        tcfg = rl.TrainingConfig(**{k: v for k, v in training.items() if k not in bad})
    except TypeError as exc:
        problems.append(str(exc))
        tcfg = rl.TrainingConfig()
    hidden = model.get("hidden")
    cfg = ExperimentConfig(
        environment=str(data.get("environment", "env3x3")),
        family=str(model.get("family", "PQC_TRIPLE")),
        hidden=tuple(int(h) for h in hidden) if hidden is not None else None,
        layers=int(model["layers"]) if model.get("layers") is not None else None,
        training=tcfg,
        runs=int(data.get("runs", 20)),
        base_seed=int(data.get("base_seed", 0)),
        out_dir=str(data.get("out_dir", "results")),
    )
    problems.extend(cfg.validate())
    if problems:
        raise ConfigError(source, problems)
    return cfg


def _parse_yaml(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), [f"cannot read file: {exc.strerror}"]) from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(where, [f"parse error: {problem}"]) from exc


def load_configs(path) -> list[ExperimentConfig]:
    path = Path(path)
    data = _parse_yaml(path)
    if not isinstance(data, dict):
        raise ConfigError(str(path), ["top level must be a mapping"])
    if "experiments" not in data:
        return [config_from_dict(data, str(path))]
    defaults = data.get("defaults") or {}
    extra = sorted(set(data) - {"defaults", "experiments"})
    if extra:
        raise ConfigError(str(path), [f"unknown top-level keys: {', '.join(extra)}"])
    entries = data["experiments"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError(str(path), ["experiments must be a non-empty list"])
    configs, problems = [], []
    for i, entry in enumerate(entries):
        try:
            configs.append(config_from_dict(_merge(defaults, entry or {}), f"{path}[experiments.{i}]"))
        except ConfigError as exc:
            problems.extend(f"experiments[{i}]: {p}" for p in exc.problems)
    if problems:
        raise ConfigError(str(path), problems)
    return configs


def load_config(path) -> ExperimentConfig:
    configs = load_configs(path)
    if len(configs) != 1:
        raise ConfigError(str(path), [f"expected one experiment, found {len(configs)}"])
    return configs[0]


def make_model(cfg: ExperimentConfig):
    t = cfg.training
    if cfg.family == "DDQN_MLP":
        return rl.MlpQ(nn.MlpArch(3, cfg.hidden, env.N_ACTIONS), lr=t.lr_classical)
    encoding = pqc.Encoding.SINGLE if cfg.family == "PQC_SINGLE" else pqc.Encoding.TRIPLE
    spec = pqc.CircuitSpec(3, 3, env.N_ACTIONS, cfg.layers, encoding)
    return rl.PqcQ(spec, lr_variational=t.lr_variational, lr_scaling=t.lr_scaling)


def model_param_count(cfg: ExperimentConfig) -> int:
    return make_model(cfg).param_count()


# --- numeric formatting -------------------------------------------------------

def fmt(x) -> str:
    if x is None:
        return MISSING
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


# --- checkpoints --------------------------------------------------------------

def checkpoint_dict(cfg: ExperimentConfig, record: rl.TrainingRecord) -> dict:
    return {
        "environment": cfg.environment,
        "model": config_to_dict(cfg)["model"],
        "seed": record.seed,
        "status": record.status,
        "solved_step": record.solved_step,
        "params": {
            k: {"shape": list(v.shape), "values": [float(x) for x in v.reshape(-1)]}
            for k, v in record.params.arrays().items()
        },
    }


def save_checkpoint(path, cfg: ExperimentConfig, record: rl.TrainingRecord) -> None:
    _write(Path(path), json.dumps(checkpoint_dict(cfg, record), indent=1) + "\n")


def load_checkpoint(path):
    """Returns ``(config, model, params)`` rebuilt from a checkpoint file."""
    data = json.loads(Path(path).read_text())
    cfg = config_from_dict({"environment": data["environment"], "model": data["model"]}, str(path))
    model = make_model(cfg)
    params = model.init_params(np.random.default_rng(0))
    arrays = params.arrays()
    for k, item in data["params"].items():
        values = np.asarray(item["values"], dtype=np.float64).reshape(item["shape"])
        if k not in arrays or arrays[k].shape != values.shape:
            raise ValueError(f"{path}: parameter {k!r} does not fit the model")
        arrays[k][...] = values
    return cfg, model, params


# --- runs ---------------------------------------------------------------------

def run_single(cfg: ExperimentConfig, seed: int) -> rl.TrainingRecord:
    world = env.load_world(cfg.environment)
    tcfg = dataclasses.replace(cfg.training, seed=seed)
    record = rl.train(make_model(cfg), world, tcfg)
    log.info("%s seed=%d %s at %s after %.1fs", cfg.label, seed, record.status,
             record.solved_step, record.duration_s)
    return record


def _run_job(args):
    cfg, seed = args
    try:
        return run_single(cfg, seed)
    except Exception as exc:  # one failed run must not sink the sweep
        log.exception("run with seed %d failed", seed)
        record = rl.TrainingRecord(model=make_model(cfg).describe(), world=cfg.environment,
                                   seed=seed, param_count=model_param_count(cfg))
        record.status = "failed"
        record.diagnostic = f"{type(exc).__name__}: {exc}"
        return record


def run_log_text(record: rl.TrainingRecord) -> str:
    return _csv_text(RUN_COLUMNS, [tuple(e) for e in record.log])


class SummaryRow(NamedTuple):
    family: str
    size: str
    params: int
    successes: int
    runs: int
    mean_best10_steps: float | None


class CurveSeries(NamedTuple):
    train_step: np.ndarray
    mean_reward_rescaled: np.ndarray
    ci95: np.ndarray


class ExperimentResult(NamedTuple):
    config: ExperimentConfig
    records: list
    summary: SummaryRow
    curves: CurveSeries


def rescale_negative(values):
    values = np.asarray(values, dtype=np.float64)
    return np.where(values < 0.0, values * NEGATIVE_SCALE, values)


def rank_records(records) -> list[int]:
    """Run indices ordered best first: solved by earliest solve step, then
    unsolved by final evaluation reward (highest first); ties by run index."""
    def key(i):
        r = records[i]
        if r.solved:
            return (0, r.solved_step, 0.0, i)
        return (1, 0, -r.final_reward, i)
    return sorted(range(len(records)), key=key)


def aggregate(records, success_threshold: float | None = None, k: int = BEST_K,
              family: str = "", size: str = "", params: int | None = None):
    """Summary row and learning curve over the best ``k`` runs.

    ``success_threshold`` is only used to recount successes from the logs
    when given; otherwise each record's own status decides.
    """
    if not records:
        raise ValueError("need at least one record")
    if success_threshold is None:
        solved = [r.solved for r in records]
    else:
        solved = [any(e.mean_eval_reward > success_threshold for e in r.log) for r in records]
    best = rank_records(records)[:k]
    best_steps = [records[i].solved_step for i in best if solved[i] and records[i].solved_step is not None]
    mean_steps = float(np.mean(best_steps)) if best_steps else None
    if params is None:
        params = records[0].param_count
    row = SummaryRow(family or records[0].model.get("family", ""), size, int(params),
                     int(sum(solved)), len(records), mean_steps)
    return row, learning_curve([records[i] for i in best])


def learning_curve(records) -> CurveSeries:
    """Mean and t-based 95% half-width per evaluation, runs padded with their last value."""
    logs = [r.log for r in records if r.log]
    if not logs:
        empty = np.zeros(0)
        return CurveSeries(np.zeros(0, dtype=np.int64), empty, empty)
    longest = max(logs, key=len)
    steps = np.array([e.train_step for e in longest], dtype=np.int64)
    n = len(steps)
    vals = np.empty((len(logs), n))
    for i, lg in enumerate(logs):
        seq = [e.mean_eval_reward for e in lg]
        vals[i] = seq + [seq[-1]] * (n - len(seq))
    vals = rescale_negative(vals)
    mean = vals.mean(axis=0)
    k = vals.shape[0]
    if k > 1:
        sem = vals.std(axis=0, ddof=1) / math.sqrt(k)
        half = stats.t.ppf(0.975, k - 1) * sem
    else:
        half = np.zeros(n)
    return CurveSeries(steps, mean, half)


def curve_text(curve: CurveSeries) -> str:
    return _csv_text(CURVE_COLUMNS, zip(curve.train_step.tolist(), curve.mean_reward_rescaled, curve.ci95))


def summary_text(rows) -> str:
    return _csv_text(SUMMARY_COLUMNS, [tuple(r) for r in rows])


def summary_json(rows, curves: dict) -> str:
    def num(x):
        return None if x is None else float(x)

    payload = {
        "summary": [
            {**r._asdict(), "mean_best10_steps": num(r.mean_best10_steps)} for r in rows
        ],
        "curves": {
            label: {
                "train_step": c.train_step.tolist(),
                "mean_reward_rescaled": [float(v) for v in c.mean_reward_rescaled],
                "ci95": [float(v) for v in c.ci95],
            }
            for label, c in curves.items()
        },
    }
    return json.dumps(payload, indent=1) + "\n"


def emit_outputs(rows, curves: dict, out_dir, figures: bool = True) -> list[Path]:
    """Write ``summary.csv``, ``summary.json``, ``curves/<label>.csv`` and figures.

    ``curves`` maps a config label to its ``CurveSeries``.
    """
    out = Path(out_dir)
    written = []
    for name, text in (("summary.csv", summary_text(rows)), ("summary.json", summary_json(rows, curves))):
        _write(out / name, text)
        written.append(out / name)
    for label, curve in curves.items():
        p = out / "curves" / f"{label}.csv"
        _write(p, curve_text(curve))
        written.append(p)
    if figures and curves:
        from qnav import plotting

        p = out / "learning_curves.png"
        plotting.plot_learning_curves(curves, p)
        written.append(p)
    return written


def run_experiment(cfg: ExperimentConfig, parallel: int = 1, out_dir=None,
                   write: bool = True) -> ExperimentResult:
    """Run ``cfg.runs`` seeds (``base_seed + i``) and write per-run logs and checkpoints.

    Results are ordered by run index regardless of completion order.
    """
    jobs = [(cfg, cfg.base_seed + i) for i in range(cfg.runs)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(j) for j in jobs]
    world = env.load_world(cfg.environment)
    threshold = (cfg.training.success_threshold if cfg.training.success_threshold is not None
                 else world.success_threshold)
    row, curve = aggregate(records, None, family=cfg.family, size=cfg.size_label,
                           params=model_param_count(cfg))
    log.info("%s: %d/%d solved (threshold %s)", cfg.label, row.successes, row.runs, threshold)
    if write:
        base = Path(out_dir if out_dir is not None else cfg.out_dir) / cfg.label
        for i, rec in enumerate(records):
            _write(base / f"run_{i:03d}.csv", run_log_text(rec))
            if rec.params is not None:
                save_checkpoint(base / f"run_{i:03d}_checkpoint.json", cfg, rec)
        _write(base / "config.yaml", dump_config(cfg))
    return ExperimentResult(cfg, records, row, curve)


def run_sweep(configs, parallel: int = 1, out_dir=None, figures: bool = True):
    results = [run_experiment(c, parallel=parallel, out_dir=out_dir) for c in configs]
    target = Path(out_dir if out_dir is not None else configs[0].out_dir)
    rows = [r.summary for r in results]
    curves = {r.config.label: r.curves for r in results}
    emit_outputs(rows, curves, target, figures=figures)
    return results
