"""Experiment spec files: YAML with comments, validated with line numbers.

Grammar (all blocks optional except ``dataset``)::

    seed: 0                      # top-level seed; every run derives from it
    output: runs/fig1            # output directory
    dataset:
      name: two_moons            # two_moons | gaussian_blobs
      n: 1600                    # two_moons: n, noise_sd
      noise_sd: 0.1
      # gaussian_blobs: k, n_per, d, center_scale, cluster_sd
      seed: 7                    # optional: pin one dataset across run seeds
    split:
      labels_per_class: 3
    model:
      hidden: [10, 10, 10]
      activation: relu           # relu | tanh
      embedding_dim: 2
      init_gain: 1.0
    train:                       # any TrainConfig field
      beta: 1.0
      ssl:
        method: none             # none | pseudo_label | vat
    sweep:                       # cartesian grid; each key a non-empty list
      beta: [0, 0.5, 1]
      delta: [0, 1]
      labels_per_class: [3, 5]
      seeds: [0, 1, 2, 3, 4]
    export:
      grid_resolution: 100
      grid_margin: 0.5
      features: true
      checkpoint: true
"""
import itertools
from dataclasses import dataclass, field, fields

import yaml

from .data import SPLIT_FRACTIONS
from .ssl_base import SslLossConfig
from .trainer import ModelConfig, TrainConfig

DATASETS = {
    "two_moons": {"n": int, "noise_sd": float, "seed": int},
    "gaussian_blobs": {
        "k": int, "n_per": int, "d": int, "center_scale": float, "cluster_sd": float, "seed": int,
    },
}
DATASET_DEFAULTS = {
    "two_moons": {"n": 1600, "noise_sd": 0.1},
    "gaussian_blobs": {"k": 4, "n_per": 100, "d": 2, "center_scale": 10.0, "cluster_sd": 0.5},
}
SWEEP_KEYS = ("beta", "delta", "labels_per_class", "seeds")
TOP_KEYS = ("seed", "output", "dataset", "split", "model", "train", "sweep", "export")
EXPORT_KEYS = {"grid_resolution": int, "grid_margin": float, "features": bool, "checkpoint": bool}


class SpecError(ValueError):
    """Raised with the full list of violations, each line-anchored."""

    def __init__(self, violations):
        super().__init__("\n".join(violations))
        self.violations = list(violations)


@dataclass
class ExperimentSpec:
    dataset: dict
    labels_per_class: int
    model: ModelConfig
    train: TrainConfig
    sweep: dict = field(default_factory=dict)
    output: str = "runs"
    seed: int = 0
    export: dict = field(default_factory=dict)

    def grid(self) -> list:
        """Sweep points as dicts (seed last), in deterministic order."""
        keys = [k for k in SWEEP_KEYS if k != "seeds" and k in self.sweep]
        seeds = self.sweep.get("seeds", [0])
        points = []
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            for s in seeds:
                points.append({**dict(zip(keys, combo)), "seed": s})
        return points


class _LineLoader(yaml.SafeLoader):
    pass


def _compose_lines(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            _compose_lines(v, p, out)
    return out


def _line(lines, *path) -> str:
    while path:
        if path in lines:
            return f"line {lines[path]}"
        path = path[:-1]
    return "line 1"


def load_yaml(text: str):
    """Parse ``text``; returns ``(data, line_map)``. Syntax errors raise
    :class:`SpecError` anchored at the offending line."""
    try:
        node = yaml.compose(text, Loader=_LineLoader)
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else 1
        raise SpecError([f"line {line}: YAML syntax error: {exc.problem}"]) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SpecError(["line 1: spec must be a mapping of blocks"])
    return data, (_compose_lines(node) if node is not None else {})


def _typed(value, typ, where, errors, name):
    if typ is bool:
        if isinstance(value, bool):
            return value
    elif typ is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif typ is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif typ is str:
        if isinstance(value, str):
            return value
    errors.append(f"{where}: {name} must be {typ.__name__}, got {value!r}")
    return None


_TRAIN_TYPES = {
    "beta": float, "delta": float, "lr": float, "iterations": int, "decay_at": int,
    "decay_factor": float, "n_l": int, "n_u": int, "swa_start_fraction": float,
    "eq2_mode": str, "augment_sd": float, "eval_every": int, "log_every": int, "dtype": str,
    "seed": int,
}
_SSL_TYPES = {
    "method": str, "pl_threshold": float, "vat_epsilon": float, "vat_xi": float, "vat_power_iters": int,
}
_MODEL_TYPES = {"activation": str, "embedding_dim": int, "init_gain": float}


def _block(data, key, lines, errors) -> dict:
    block = data.get(key, {})
    if block is None:
        return {}
    if not isinstance(block, dict):
        errors.append(f"{_line(lines, key)}: '{key}' must be a mapping")
        return {}
    return block


def _unknown(block, allowed, prefix, lines, errors):
    for k in block:
        if k not in allowed:
            errors.append(f"{_line(lines, *prefix, k)}: unknown key '{'.'.join(prefix + (k,))}'")


def parse_spec(text: str) -> ExperimentSpec:
    """Validate and build an :class:`ExperimentSpec`; raises :class:`SpecError`
    listing every violation found."""
    data, lines = load_yaml(text)
    errors = []
    _unknown(data, TOP_KEYS, (), lines, errors)

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"{_line(lines, 'seed')}: seed must be a non-negative integer")
        seed = 0
    output = data.get("output", "runs")
    if not isinstance(output, str) or not output:
        errors.append(f"{_line(lines, 'output')}: output must be a non-empty path string")
        output = "runs"

    # dataset
    ds_block = _block(data, "dataset", lines, errors)
    if "dataset" not in data:
        errors.append("line 1: missing required block 'dataset'")
    name = ds_block.get("name", "two_moons")
    dataset = {"name": name}
    if name not in DATASETS:
        errors.append(f"{_line(lines, 'dataset', 'name')}: dataset.name must be one of {sorted(DATASETS)}")
    else:
        _unknown(ds_block, ("name",) + tuple(DATASETS[name]), ("dataset",), lines, errors)
        dataset.update(DATASET_DEFAULTS[name])
        for k, typ in DATASETS[name].items():
            if k in ds_block:
                v = _typed(ds_block[k], typ, _line(lines, "dataset", k), errors, f"dataset.{k}")
                if v is not None:
                    dataset[k] = v
        if name == "two_moons":
            if dataset["n"] < 2 or dataset["n"] % 2:
                errors.append(f"{_line(lines, 'dataset', 'n')}: dataset.n must be even and >= 2")
            if dataset["noise_sd"] < 0:
                errors.append(f"{_line(lines, 'dataset', 'noise_sd')}: dataset.noise_sd must be >= 0")
        else:
            for k in ("k", "n_per", "d"):
                lo = 2 if k == "k" else 1
                if dataset[k] < lo:
                    errors.append(f"{_line(lines, 'dataset', k)}: dataset.{k} must be >= {lo}")
            if dataset["cluster_sd"] < 0:
                errors.append(f"{_line(lines, 'dataset', 'cluster_sd')}: dataset.cluster_sd must be >= 0")

    # split
    split_block = _block(data, "split", lines, errors)
    _unknown(split_block, ("labels_per_class",), ("split",), lines, errors)
    lpc = _typed(split_block.get("labels_per_class", 3), int, _line(lines, "split", "labels_per_class"),
                 errors, "split.labels_per_class")
    lpc = 3 if lpc is None else lpc

    # model
    model_block = _block(data, "model", lines, errors)
    _unknown(model_block, ("hidden",) + tuple(_MODEL_TYPES), ("model",), lines, errors)
    model_kw = {}
    for k, typ in _MODEL_TYPES.items():
        if k in model_block:
            v = _typed(model_block[k], typ, _line(lines, "model", k), errors, f"model.{k}")
            if v is not None:
                model_kw[k] = v
    if "hidden" in model_block:
        hid = model_block["hidden"]
        if not isinstance(hid, list) or not all(isinstance(h, int) and h >= 1 for h in hid):
            errors.append(f"{_line(lines, 'model', 'hidden')}: model.hidden must be a list of positive integers")
        else:
            model_kw["hidden"] = tuple(hid)
    model = ModelConfig(**model_kw)
    if model.activation not in ("relu", "tanh"):
        errors.append(f"{_line(lines, 'model', 'activation')}: model.activation must be relu or tanh")
    if model.embedding_dim < 1:
        errors.append(f"{_line(lines, 'model', 'embedding_dim')}: model.embedding_dim must be >= 1")

    # train
    train_block = _block(data, "train", lines, errors)
    _unknown(train_block, tuple(_TRAIN_TYPES) + ("alpha", "ssl"), ("train",), lines, errors)
    train_kw = {}
    for k, typ in _TRAIN_TYPES.items():
        if k in train_block:
            v = train_block[k]
            if v is None and k in ("decay_at", "eval_every"):
                train_kw[k] = None
                continue
            v = _typed(v, typ, _line(lines, "train", k), errors, f"train.{k}")
            if v is not None:
                train_kw[k] = v
    if "alpha" in train_block:
        a = train_block["alpha"]
        vals = a if isinstance(a, list) else [a]
        if not vals or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vals):
            errors.append(f"{_line(lines, 'train', 'alpha')}: train.alpha must be a number or list of numbers")
        else:
            train_kw["alpha"] = [float(x) for x in a] if isinstance(a, list) else float(a)
    ssl_block = train_block.get("ssl", {}) or {}
    ssl_kw = {}
    if not isinstance(ssl_block, dict):
        errors.append(f"{_line(lines, 'train', 'ssl')}: train.ssl must be a mapping")
        ssl_block = {}
    _unknown(ssl_block, tuple(_SSL_TYPES), ("train", "ssl"), lines, errors)
    for k, typ in _SSL_TYPES.items():
        if k in ssl_block:
            v = _typed(ssl_block[k], typ, _line(lines, "train", "ssl", k), errors, f"train.ssl.{k}")
            if v is not None:
                ssl_kw[k] = v
    try:
        ssl_cfg = SslLossConfig(**ssl_kw)
    except ValueError as exc:
        errors.append(f"{_line(lines, 'train', 'ssl')}: train.ssl: {exc}")
        ssl_cfg = SslLossConfig()
    train = TrainConfig(ssl=ssl_cfg, **train_kw)

    # sweep
    sweep_block = _block(data, "sweep", lines, errors)
    _unknown(sweep_block, SWEEP_KEYS, ("sweep",), lines, errors)
    sweep = {}
    for k in SWEEP_KEYS:
        if k not in sweep_block:
            continue
        vals = sweep_block[k]
        where = _line(lines, "sweep", k)
        if not isinstance(vals, list) or not vals:
            errors.append(f"{where}: sweep.{k} must be a non-empty list")
            continue
        typ = int if k in ("labels_per_class", "seeds") else float
        conv = [_typed(v, typ, where, errors, f"sweep.{k} entry") for v in vals]
        if all(c is not None for c in conv):
            if len(set(conv)) != len(conv):
                errors.append(f"{where}: sweep.{k} has duplicate entries")
            sweep[k] = conv

    # export
    export_block = _block(data, "export", lines, errors)
    _unknown(export_block, tuple(EXPORT_KEYS), ("export",), lines, errors)
    export = {"grid_resolution": 100, "grid_margin": 0.5, "features": True, "checkpoint": True}
    for k, typ in EXPORT_KEYS.items():
        if k in export_block:
            v = _typed(export_block[k], typ, _line(lines, "export", k), errors, f"export.{k}")
            if v is not None:
                export[k] = v
    if export["grid_resolution"] < 1:
        errors.append(f"{_line(lines, 'export', 'grid_resolution')}: export.grid_resolution must be >= 1")

    # cross-field invariants, checked on every sweep point
    spec = ExperimentSpec(dataset, lpc, model, train, sweep, output, seed, export)
    seen = set()
    for beta in sweep.get("beta", [train.beta]):
        for delta in sweep.get("delta", [train.delta]):
            cfg = _replace_train(train, beta=beta, delta=delta)
            for msg in cfg.violations():
                key = msg
                if key in seen:
                    continue
                seen.add(key)
                if "delta > 0" in msg:
                    anchor = _line(lines, "sweep", "delta") if "delta" in sweep else _line(lines, "train", "delta")
                    errors.append(f"{anchor}: train.delta > 0 requires train.ssl.method != none "
                                  f"(train.delta={delta}, train.ssl.method={train.ssl.method})")
                else:
                    field_name = msg.split()[0]
                    errors.append(f"{_line(lines, 'train', field_name)}: train.{msg}")
    if name in DATASETS:
        pop = _class_train_population(dataset)
        for n_lab in sweep.get("labels_per_class", [lpc]):
            if n_lab < 1:
                errors.append(f"{_line(lines, 'split', 'labels_per_class')}: labels_per_class must be >= 1")
            elif pop is not None and n_lab > pop:
                anchor = (_line(lines, "sweep", "labels_per_class") if "labels_per_class" in sweep
                          else _line(lines, "split", "labels_per_class"))
                errors.append(f"{anchor}: labels_per_class={n_lab} exceeds the {pop} training samples "
                              f"available per class")
    if errors:
        raise SpecError(errors)
    return spec


def _class_train_population(dataset: dict):
    """Smallest per-class training-split size the generator will produce."""
    if dataset["name"] == "two_moons":
        if dataset["n"] < 2 or dataset["n"] % 2:
            return None
        per = dataset["n"] // 2
    else:
        per = dataset["n_per"]
    _, f_val, f_test = SPLIT_FRACTIONS
    return per - int(round(f_val * per)) - int(round(f_test * per))


def _replace_train(cfg: TrainConfig, **kw) -> TrainConfig:
    vals = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    vals.update(kw)
    return TrainConfig(**vals)


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        return parse_spec(fh.read())
