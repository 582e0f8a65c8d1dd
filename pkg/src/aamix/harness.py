"""Experiment runner: three-way method comparison over multiple seeds.

A JSON config describes one experiment; ``run_experiment`` trains every
(method, seed) pair, writes one CSV per run plus an aggregate summary with
95% confidence half-widths across seeds, and returns the file inventory.
Methods:

* ``plain``        the bare optimizer (extrapolation schedule never fires)
* ``anderson``     safeguarded alternating Anderson extrapolation
* ``anderson_ma``  the same plus the adaptive moving-average smoother

Every random stream is derived from (run seed, fixed tag), so a (config,
seed) pair reproduces its loss columns byte for byte; wall-time columns
are excluded from that guarantee.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from aamix.accelerator import RECORD_FIELDS, AccelerationConfig, RunRecord, train
from aamix.data import (
    BatchSampler,
    Dataset,
    apply_normalization,
    fit_normalization,
    load_csv,
    split,
    synthetic_admissions,
    synthetic_regression,
)
from aamix.errors import ConfigError
from aamix.models import LossFunction, MlpProblem, MlpSpec, NoiseModel, mlp_init, random_contraction
from aamix.optimizers import AffineOperator, LrSchedule, make_operator

__all__ = [
    "ExperimentConfig",
    "ProblemConfig",
    "OptimizerConfig",
    "RunSettings",
    "METHODS",
    "load_config",
    "validate_config",
    "run_experiment",
    "run_single",
    "aggregate",
    "write_records_csv",
    "read_records_csv",
]

METHODS = ("plain", "anderson", "anderson_ma")
PROBLEM_KINDS = ("affine", "mlp_csv", "mlp_synthetic", "logistic")
OUTPUT_DIR_ENV = "AAMIX_OUTPUT_DIR"

# fixed stream tags so each consumer of randomness gets its own substream
_STREAM_W0 = 11
_STREAM_SPLIT = 12
_STREAM_INIT = 13
_STREAM_BATCH = 14
_STREAM_NOISE = 15


def derive_seed(seed, stream):
    """Stable 32-bit sub-seed for one random stream of one run."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


@dataclass(frozen=True)
class ProblemConfig:
    kind: str
    # affine
    n: int = 30
    radius: float = 0.9
    noise_sd: float = 0.0
    problem_seed: int = 0
    # mlp_csv
    path: str = ""
    target_columns: tuple = ()
    # mlp_synthetic / logistic
    n_samples: int = 500
    n_features: int = 9
    synthetic_style: str = "gaussian"  # gaussian | admissions_like
    # shared network/dataset settings
    hidden_layers: tuple = (64, 64, 64)
    activation: str = "relu"
    train_fraction: float = 0.8
    normalize: bool = True


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8


@dataclass(frozen=True)
class RunSettings:
    seeds: tuple = (0,)
    methods: tuple = METHODS
    batch_size: int = 40
    batch_strategy: str = "shuffle_each_epoch"
    epochs: int = 0  # exactly one of epochs / max_iterations is nonzero
    max_iterations: int = 0
    output_dir: str = ""
    val_every: str = "auto"  # auto | iteration | epoch | integer as string
    val_cost_threshold: float = 2e6
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    optimizer: OptimizerConfig
    schedule: LrSchedule
    acceleration: AccelerationConfig
    run: RunSettings


def _require_keys(section, allowed, path):
    if not isinstance(section, dict):
        raise ConfigError(f"expected an object, got {type(section).__name__}", path)
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted(allowed)}", path)


def _coerce(section, key, path, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError("missing required key", f"{path}.{key}")
        return default
    value = section[key]
    try:
        if kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind == "int_list":
            if not isinstance(value, list) or not value:
                raise ValueError
            return tuple(int(v) for v in value)
        if kind == "str_list":
            if not isinstance(value, list):
                raise ValueError
            return tuple(str(v) for v in value)
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"expected {kind}, got {value!r}", f"{path}.{key}")


def validate_config(raw):
    """Validate a raw dict into an :class:`ExperimentConfig`.

    Unknown keys are rejected anywhere in the tree; messages carry the
    dotted path of the offending field.
    """
    _require_keys(raw, {"problem", "optimizer", "schedule", "acceleration", "run"}, "config")
    for name in ("problem", "run"):
        if name not in raw:
            raise ConfigError("missing required section", name)

    p = raw["problem"]
    _require_keys(
        p,
        {
            "kind", "n", "radius", "noise_sd", "problem_seed", "path", "target_columns",
            "n_samples", "n_features", "synthetic_style", "hidden_layers", "activation",
            "train_fraction", "normalize",
        },
        "problem",
    )
    kind = _coerce(p, "kind", "problem", "str", required=True)
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"must be one of {PROBLEM_KINDS}, got {kind!r}", "problem.kind")
    if "hidden_layers" in p:
        raw_hidden = p["hidden_layers"]
        if not isinstance(raw_hidden, list) or any(
            isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in raw_hidden
        ):
            raise ConfigError(
                f"expected a list of positive integers, got {raw_hidden!r}",
                "problem.hidden_layers",
            )
        hidden_layers = tuple(raw_hidden)
    else:
        hidden_layers = () if kind == "logistic" else (64, 64, 64)
    problem = ProblemConfig(
        kind=kind,
        n=_coerce(p, "n", "problem", "int", 30),
        radius=_coerce(p, "radius", "problem", "float", 0.9),
        noise_sd=_coerce(p, "noise_sd", "problem", "float", 0.0),
        problem_seed=_coerce(p, "problem_seed", "problem", "int", 0),
        path=_coerce(p, "path", "problem", "str", ""),
        target_columns=_coerce(p, "target_columns", "problem", "str_list", ()),
        n_samples=_coerce(p, "n_samples", "problem", "int", 500),
        n_features=_coerce(p, "n_features", "problem", "int", 9),
        synthetic_style=_coerce(p, "synthetic_style", "problem", "str", "gaussian"),
        hidden_layers=hidden_layers,
        activation=_coerce(p, "activation", "problem", "str", "relu"),
        train_fraction=_coerce(p, "train_fraction", "problem", "float", 0.8),
        normalize=_coerce(p, "normalize", "problem", "bool", True),
    )
    if kind == "mlp_csv":
        if not problem.path:
            raise ConfigError("mlp_csv needs a dataset path", "problem.path")
        if not problem.target_columns:
            raise ConfigError("mlp_csv needs target_columns", "problem.target_columns")
    if kind == "affine" and not 0 < problem.radius < 1:
        raise ConfigError("radius must be in (0, 1)", "problem.radius")
    if problem.synthetic_style not in ("gaussian", "admissions_like"):
        raise ConfigError(
            f"must be gaussian or admissions_like, got {problem.synthetic_style!r}",
            "problem.synthetic_style",
        )
    if problem.activation not in ("relu", "tanh"):
        raise ConfigError(f"unknown activation {problem.activation!r}", "problem.activation")
    if not 0 < problem.train_fraction < 1:
        raise ConfigError("train_fraction must be in (0, 1)", "problem.train_fraction")

    o = raw.get("optimizer", {})
    _require_keys(o, {"kind", "momentum", "beta1", "beta2", "eps_hat"}, "optimizer")
    optimizer = OptimizerConfig(
        kind=_coerce(o, "kind", "optimizer", "str", "adam"),
        momentum=_coerce(o, "momentum", "optimizer", "float", 0.9),
        beta1=_coerce(o, "beta1", "optimizer", "float", 0.9),
        beta2=_coerce(o, "beta2", "optimizer", "float", 0.999),
        eps_hat=_coerce(o, "eps_hat", "optimizer", "float", 1e-8),
    )
    if optimizer.kind not in ("sgd", "nesterov", "adam"):
        raise ConfigError(f"unknown optimizer {optimizer.kind!r}", "optimizer.kind")

    s = raw.get("schedule", {})
    _require_keys(s, {"initial", "kind", "decay_factor", "decay_every", "unit"}, "schedule")
    try:
        schedule = LrSchedule(
            initial=_coerce(s, "initial", "schedule", "float", 0.01),
            kind=_coerce(s, "kind", "schedule", "str", "constant"),
            decay_factor=_coerce(s, "decay_factor", "schedule", "float", 1.0),
            decay_every=_coerce(s, "decay_every", "schedule", "int", 0),
            unit=_coerce(s, "unit", "schedule", "str", "epoch"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "schedule")

    a = raw.get("acceleration", {})
    _require_keys(
        a,
        {
            "beta", "p", "q", "m", "t", "epsilon", "tol", "variant", "safeguard",
            "clear_history_on_reject", "latch_criterion", "rewind_optimizer_on_reject",
        },
        "acceleration",
    )
    try:
        acceleration = AccelerationConfig(
            beta=_coerce(a, "beta", "acceleration", "float", 1.0),
            p=_coerce(a, "p", "acceleration", "int", 1),
            q=_coerce(a, "q", "acceleration", "int", 1),
            m=_coerce(a, "m", "acceleration", "int", 10),
            t=_coerce(a, "t", "acceleration", "int", None),
            epsilon=_coerce(a, "epsilon", "acceleration", "float", 0.1),
            tol=_coerce(a, "tol", "acceleration", "float", 0.0),
            max_iterations=1,  # resolved per run below
            variant=_coerce(a, "variant", "acceleration", "str", "mix_correction"),
            safeguard=_coerce(a, "safeguard", "acceleration", "bool", True),
            clear_history_on_reject=_coerce(
                a, "clear_history_on_reject", "acceleration", "bool", False
            ),
            latch_criterion=_coerce(a, "latch_criterion", "acceleration", "bool", True),
            rewind_optimizer_on_reject=_coerce(
                a, "rewind_optimizer_on_reject", "acceleration", "bool", False
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "acceleration")

    r = raw["run"]
    _require_keys(
        r,
        {
            "seeds", "methods", "batch_size", "batch_strategy", "epochs", "max_iterations",
            "output_dir", "val_every", "val_cost_threshold", "workers",
        },
        "run",
    )
    run = RunSettings(
        seeds=_coerce(r, "seeds", "run", "int_list", (0,)),
        methods=_coerce(r, "methods", "run", "str_list", METHODS) or METHODS,
        batch_size=_coerce(r, "batch_size", "run", "int", 40),
        batch_strategy=_coerce(r, "batch_strategy", "run", "str", "shuffle_each_epoch"),
        epochs=_coerce(r, "epochs", "run", "int", 0),
        max_iterations=_coerce(r, "max_iterations", "run", "int", 0),
        output_dir=_coerce(r, "output_dir", "run", "str", ""),
        val_every=str(r.get("val_every", "auto")),
        val_cost_threshold=_coerce(r, "val_cost_threshold", "run", "float", 2e6),
        workers=_coerce(r, "workers", "run", "int", 1),
    )
    for method in run.methods:
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {METHODS}", "run.methods")
    if (run.epochs > 0) == (run.max_iterations > 0):
        raise ConfigError("set exactly one of epochs / max_iterations", "run")
    if run.batch_strategy not in ("shuffle_each_epoch", "with_replacement"):
        raise ConfigError(f"unknown strategy {run.batch_strategy!r}", "run.batch_strategy")
    if run.workers < 1:
        raise ConfigError("workers must be >= 1", "run.workers")
    if run.val_every not in ("auto", "iteration", "epoch") and not run.val_every.isdigit():
        raise ConfigError(
            f"val_every must be auto, iteration, epoch, or an integer, got {run.val_every!r}",
            "run.val_every",
        )
    return ExperimentConfig(problem, optimizer, schedule, acceleration, run)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}")
    return validate_config(raw)


@dataclass
class _RunSetup:
    operator: object
    w0: np.ndarray
    validation_fn: object
    iters_per_epoch: int


def _build_dataset(problem):
    if problem.kind == "mlp_csv":
        try:
            return load_csv(problem.path, list(problem.target_columns), normalize=False)
        except FileNotFoundError:
            raise FileNotFoundError(
                f"dataset file {problem.path!r} not found; either fetch it or switch "
                f"problem.kind to 'mlp_synthetic' for the generated fallback"
            )
    if problem.synthetic_style == "admissions_like":
        dataset = synthetic_admissions(
            problem.n_samples, problem.noise_sd, problem.problem_seed
        )
    else:
        dataset = synthetic_regression(
            problem.n_samples, problem.n_features, problem.noise_sd, problem.problem_seed
        )
    if problem.kind == "logistic":
        labels = (dataset.targets > np.median(dataset.targets)).astype(np.float64)
        dataset = Dataset(
            inputs=dataset.inputs, targets=labels, feature_names=dataset.feature_names
        )
    return dataset


def _setup_run(config, seed):
    problem = config.problem
    if problem.kind == "affine":
        affine = random_contraction(problem.n, problem.radius, problem.problem_seed)
        noise = NoiseModel("uniform", problem.noise_sd) if problem.noise_sd > 0 else None
        rng = np.random.default_rng(derive_seed(seed, _STREAM_NOISE))
        operator = AffineOperator(affine, noise, rng)
        w0 = np.random.default_rng(derive_seed(seed, _STREAM_W0)).standard_normal(problem.n)
        return _RunSetup(operator, w0, None, 1)

    dataset = _build_dataset(problem)
    train_set, val_set = split(dataset, problem.train_fraction, derive_seed(seed, _STREAM_SPLIT))
    if problem.normalize:
        stats = fit_normalization(train_set)
        train_set = apply_normalization(train_set, stats)
        val_set = apply_normalization(val_set, stats)

    loss = LossFunction("logistic_cross_entropy" if problem.kind == "logistic" else "mse")
    sizes = (train_set.inputs.shape[1], *problem.hidden_layers, train_set.targets.shape[1])
    spec = MlpSpec(sizes, problem.activation, init_seed=derive_seed(seed, _STREAM_INIT))
    mlp = MlpProblem(spec, train_set.inputs, train_set.targets, loss)
    sampler = BatchSampler(
        train_set.size,
        min(config.run.batch_size, train_set.size),
        config.run.batch_strategy,
        derive_seed(seed, _STREAM_BATCH),
    )
    extra = {}
    if config.optimizer.kind == "nesterov":
        extra = {"momentum": config.optimizer.momentum}
    elif config.optimizer.kind == "adam":
        extra = {
            "beta1": config.optimizer.beta1,
            "beta2": config.optimizer.beta2,
            "eps_hat": config.optimizer.eps_hat,
        }
    operator = make_operator(config.optimizer.kind, mlp, sampler, config.schedule, **extra)
    w0 = mlp_init(spec)

    def validation_fn(w):
        return mlp.full_loss(w, val_set.inputs, val_set.targets)

    return _RunSetup(operator, w0, validation_fn, sampler.iters_per_epoch)


def method_config(acceleration, method, max_iterations):
    """Acceleration settings implementing one of the three methods."""
    if method == "plain":
        return acceleration.with_updates(
            p=max_iterations + 1, m=1, t=1, moving_average=False,
            max_iterations=max_iterations,
        )
    if method == "anderson":
        return acceleration.with_updates(moving_average=False, max_iterations=max_iterations)
    if method == "anderson_ma":
        return acceleration.with_updates(moving_average=True, max_iterations=max_iterations)
    raise ValueError(f"unknown method {method!r}")


def _resolve_val_every(config, setup):
    mode = config.run.val_every
    if mode.isdigit():
        return max(1, int(mode))
    if mode == "iteration":
        return 1
    if mode == "epoch":
        return setup.iters_per_epoch
    # auto: per-iteration only while a full validation pass stays cheap
    cost = float(setup.w0.shape[0]) * max(1, setup.iters_per_epoch)
    return 1 if cost <= config.run.val_cost_threshold else setup.iters_per_epoch


def run_single(config, method, seed):
    """Train one (method, seed) pair; returns (records, final_w)."""
    setup = _setup_run(config, seed)
    max_iterations = config.run.max_iterations
    if max_iterations == 0:
        max_iterations = config.run.epochs * setup.iters_per_epoch
    cfg = method_config(config.acceleration, method, max_iterations)
    result = train(
        setup.operator,
        setup.w0,
        cfg,
        validation_fn=setup.validation_fn,
        val_every=_resolve_val_every(config, setup),
    )
    return result


def run_path(output_dir, method, seed):
    return os.path.join(output_dir, f"{method}_seed{seed:03d}.csv")


def _format_cell(value):
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for rec in records:
            writer.writerow([_format_cell(getattr(rec, name)) for name in RECORD_FIELDS])


def read_records_csv(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RECORD_FIELDS:
            raise ValueError(f"{path} header {header} != expected {list(RECORD_FIELDS)}")
        for row in reader:
            records.append(
                RunRecord(
                    iteration=int(row[0]),
                    epoch=int(row[1]),
                    train_loss=float(row[2]),
                    val_loss=float(row[3]),
                    residual_l2=float(row[4]),
                    candidate_residual_l2=float(row[5]),
                    step_kind=row[6],
                    ma_applied=row[7] == "True",
                    ma_active=row[8] == "True",
                    wall_ms=float(row[9]),
                )
            )
    return records


def _run_task(args):
    config, method, seed, output_dir = args
    result = run_single(config, method, seed)
    path = run_path(output_dir, method, seed)
    write_records_csv(path, result.records)
    summary = {
        "method": method,
        "seed": seed,
        "iterations": len(result.records),
        "aborted": result.aborted,
        "final_train_loss": result.records[-1].train_loss if result.records else math.nan,
        "final_val_loss": result.records[-1].val_loss if result.records else math.nan,
        "accepted_steps": sum(
            1 for r in result.records if r.step_kind == "accelerated_accepted"
        ),
    }
    return path, summary


@dataclass
class ExperimentResult:
    csv_paths: list
    summary_path: str
    metrics_path: str
    run_summaries: list = field(default_factory=list)


def run_experiment(config, output_dir=None):
    """Run all (method, seed) pairs and aggregate; returns the inventory."""
    out = output_dir or config.run.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "aamix_runs"
    os.makedirs(out, exist_ok=True)
    tasks = [
        (config, method, seed, out)
        for method in config.run.methods
        for seed in config.run.seeds
    ]
    if config.run.workers > 1:
        with ProcessPoolExecutor(max_workers=config.run.workers) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(task) for task in tasks]

    csv_paths = [path for path, _ in outcomes]
    summaries = [stats for _, stats in outcomes]
    summary_path = os.path.join(out, "summary.csv")
    aggregate(csv_paths, summary_path)

    metrics = {}
    for method in config.run.methods:
        rows = [s for s in summaries if s["method"] == method]
        finals_val = [s["final_val_loss"] for s in rows]
        finals_train = [s["final_train_loss"] for s in rows]
        metrics[method] = {
            "runs": len(rows),
            "aborted_runs": sum(1 for s in rows if s["aborted"]),
            "mean_iterations": float(np.mean([s["iterations"] for s in rows])),
            "mean_accepted_steps": float(np.mean([s["accepted_steps"] for s in rows])),
            "final_train_loss_median": float(np.median(finals_train)),
            "final_val_loss_median": float(np.median(finals_val)),
        }
    metrics_path = os.path.join(out, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExperimentResult(csv_paths, summary_path, metrics_path, summaries)


def _group_by_method(paths):
    groups = {}
    for path in paths:
        stem = os.path.basename(path)
        if "_seed" not in stem:
            continue
        method = stem.rsplit("_seed", 1)[0]
        groups.setdefault(method, []).append(path)
    return groups


def aggregate(paths_or_dir, summary_path=None):
    """Per-iteration mean and 95% CI half-width across seeds, per method.

    The half-width is 1.96 * sd / sqrt(n_seeds) (normal approximation,
    sample standard deviation). Runs of unequal length are truncated to
    the shortest length in their method group.
    """
    if isinstance(paths_or_dir, (str, os.PathLike)):
        directory = str(paths_or_dir)
        paths = sorted(
            os.path.join(directory, f)
            for f in os.listdir(directory)
            if f.endswith(".csv") and "_seed" in f
        )
        if summary_path is None:
            summary_path = os.path.join(directory, "summary.csv")
    else:
        paths = list(paths_or_dir)
    if not paths:
        raise ValueError("no run CSVs to aggregate")

    rows = []
    for method, group in sorted(_group_by_method(paths).items()):
        runs = [read_records_csv(p) for p in sorted(group)]
        length = min(len(r) for r in runs)
        n = len(runs)
        train_mat = np.array([[rec.train_loss for rec in run[:length]] for run in runs])
        val_mat = np.array([[rec.val_loss for rec in run[:length]] for run in runs])
        epochs = [rec.epoch for rec in runs[0][:length]]
        for i in range(length):
            entry = {
                "method": method,
                "iteration": i,
                "epoch": epochs[i],
                "n_seeds": n,
                "train_loss_mean": float(np.mean(train_mat[:, i])),
                "train_loss_ci95": _ci_halfwidth(train_mat[:, i]),
                "val_loss_mean": float(np.mean(val_mat[:, i])),
                "val_loss_ci95": _ci_halfwidth(val_mat[:, i]),
            }
            rows.append(entry)

    if summary_path:
        fields = [
            "method", "iteration", "epoch", "n_seeds",
            "train_loss_mean", "train_loss_ci95", "val_loss_mean", "val_loss_ci95",
        ]
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for entry in rows:
                writer.writerow([_format_cell(entry[f]) for f in fields])
    return rows


def _ci_halfwidth(values):
    n = values.shape[0]
    if n < 2:
        return math.nan
    return float(1.96 * np.std(values, ddof=1) / math.sqrt(n))
