"""Command-line front end: ``supercm run <spec>`` and ``supercm validate <spec>``."""
import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields

import numpy as np

from .config import ExperimentSpec, SpecError, _replace_train, load_spec
from .data import TRAIN, Dataset, gaussian_blobs, split_labeled, two_moons, write_dataset_csv
from .metrics import confusion_matrix, decision_grid, hungarian_match_accuracy, write_grid_csv
from .trainer import NonFiniteLossError, train

log = logging.getLogger("supercm")

AGGREGATE_HEADER = ("run", "beta", "delta", "labels_per_class", "seed", "final_test_acc", "final_val_acc", "best_val_acc")
EXIT_OK, EXIT_RUNTIME, EXIT_SPEC, EXIT_NONFINITE = 0, 1, 2, 3


def run_seeds(top_seed: int, run_seed: int, dataset_seed=None):
    """Derive (data rng, split rng, train seed) for one run.

    Depends only on the top-level seed and the run seed, so all sweep points
    sharing a run seed see the same data, labels and initialisation.
    """
    ss = np.random.SeedSequence([top_seed, run_seed])
    data_ss, split_ss, train_ss = ss.spawn(3)
    if dataset_seed is not None:
        data_ss = np.random.SeedSequence([dataset_seed])
    train_seed = int(train_ss.generate_state(1, dtype=np.uint32)[0])
    return np.random.default_rng(data_ss), np.random.default_rng(split_ss), train_seed


def build_dataset(params: dict, rng) -> Dataset:
    if params["name"] == "two_moons":
        return two_moons(params["n"], params["noise_sd"], rng)
    ds, _ = gaussian_blobs(
        params["k"], params["n_per"], params["d"], params["center_scale"], params["cluster_sd"], rng
    )
    return ds


def run_name(point: dict) -> str:
    return "_".join(f"{k}={point[k]}" for k in point)


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def point_config(spec: ExperimentSpec, point: dict):
    """Resolve one sweep point to ``(train config, labels per class)``."""
    lpc = point.get("labels_per_class", spec.labels_per_class)
    cfg_kw = {k: point[k] for k in ("beta", "delta") if k in point}
    _, _, train_seed = run_seeds(spec.seed, point["seed"], spec.dataset.get("seed"))
    return _replace_train(spec.train, seed=train_seed, **cfg_kw), lpc


def run_point(spec: ExperimentSpec, point: dict):
    """Train one sweep point without writing anything.

    Returns ``(record, swa_model, dataset, labeled_idx, config)``.
    """
    cfg, lpc = point_config(spec, point)
    data_rng, split_rng, _ = run_seeds(spec.seed, point["seed"], spec.dataset.get("seed"))
    ds = build_dataset(spec.dataset, data_rng)
    labeled, unlabeled = split_labeled(ds, lpc, split_rng)
    record, final, _ = train(ds, labeled, unlabeled, cfg, spec.model)
    return record, final, ds, labeled, cfg


def execute_point(spec: ExperimentSpec, point: dict, out_dir: str) -> dict:
    """Run one sweep point and write its artifacts; returns its aggregate row."""
    record, final, ds, labeled, cfg = run_point(spec, point)
    lpc = point.get("labels_per_class", spec.labels_per_class)

    os.makedirs(out_dir, exist_ok=True)
    record.write_csv(os.path.join(out_dir, "run.csv"))
    x_test = ds.features[ds.split == 2]
    y_test = ds.labels[ds.split == 2]
    matched, _ = hungarian_match_accuracy(
        confusion_matrix(y_test, final.predict(x_test), ds.n_classes)
    )
    summary = {
        **record.summary(),
        "matched_test_acc": matched,
        "labels_per_class": lpc,
        "run_seed": point["seed"],
        "dataset": spec.dataset,
        "model": asdict(spec.model),
        "train": {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "ssl"},
        "ssl": asdict(cfg.ssl),
    }
    write_summary(os.path.join(out_dir, "summary.txt"), summary)

    exp = spec.export
    if ds.features.shape[1] == 2:
        margin = exp["grid_margin"]
        lo = ds.features.min(axis=0) - margin
        hi = ds.features.max(axis=0) + margin
        grid = decision_grid(final, (lo[0], hi[0]), (lo[1], hi[1]), exp["grid_resolution"])
        write_grid_csv(os.path.join(out_dir, "grid.csv"), grid)
    if exp["features"]:
        feats = Dataset(final.features(ds.features), ds.labels, ds.split)
        write_dataset_csv(os.path.join(out_dir, "features.csv"), feats, labeled)
    if exp["checkpoint"]:
        save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), final)

    return {
        "run": run_name(point),
        "beta": cfg.beta,
        "delta": cfg.delta,
        "labels_per_class": lpc,
        "seed": point["seed"],
        "final_test_acc": record.final_test_acc,
        "final_val_acc": record.final_val_acc,
        "best_val_acc": record.best_val_acc,
    }


def write_summary(path, summary: dict) -> None:
    def flat(prefix, d):
        for k, v in d.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                yield from flat(key + ".", v)
            else:
                yield key, v

    with open(path, "w") as fh:
        for k, v in flat("", summary):
            if isinstance(v, (list, tuple)):
                v = "[" + ", ".join(_fmt(x) for x in v) + "]"
            fh.write(f"{k} = {_fmt(v)}\n")


def read_summary(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def save_checkpoint(path, model) -> None:
    arrays = {}
    for i, (w, b) in enumerate(zip(model.mlp.weights, model.mlp.biases)):
        arrays[f"mlp_w{i}"] = w
        arrays[f"mlp_b{i}"] = b
    arrays["cm_weights"] = model.cm.weights
    arrays["cm_bias"] = model.cm.bias
    arrays["cm_centroids"] = model.cm.centroids
    arrays["cm_ma_counter"] = np.array(model.cm.ma_counter)
    arrays["activation"] = np.array(model.mlp.activation)
    np.savez(path, **arrays)


def load_checkpoint(path):
    from .clustering import ClusteringModuleState
    from .mlp import MlpState
    from .trainer import SuperCMModel

    z = np.load(path)
    n = sum(1 for k in z.files if k.startswith("mlp_w"))
    net = MlpState([z[f"mlp_w{i}"] for i in range(n)], [z[f"mlp_b{i}"] for i in range(n)], str(z["activation"]))
    cm = ClusteringModuleState(z["cm_weights"], z["cm_bias"], z["cm_centroids"], int(z["cm_ma_counter"]))
    return SuperCMModel(net, cm)


def _worker(args):
    spec, point, out_dir = args
    try:
        return execute_point(spec, point, out_dir)
    except NonFiniteLossError as exc:
        return {"error": "nonfinite", "run": run_name(point), "message": str(exc)}


def run_spec(spec: ExperimentSpec, out_root: str, jobs: int = 1) -> list:
    """Execute every sweep point; returns aggregate rows in grid order.

    Raises :class:`NonFiniteLossError` naming the first failing run.
    """
    points = spec.grid()
    tasks = [(spec, p, os.path.join(out_root, run_name(p))) for p in points]
    os.makedirs(out_root, exist_ok=True)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_worker, tasks))
    else:
        rows = []
        for t in tasks:
            log.info("run %s", run_name(t[1]))
            rows.append(_worker(t))
    failed = [r for r in rows if "error" in r]
    if failed:
        raise NonFiniteLossError(f"run {failed[0]['run']}: {failed[0]['message']}")
    write_aggregate(os.path.join(out_root, "aggregate.csv"), rows)
    return rows


def write_aggregate(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in AGGREGATE_HEADER])


def select_by_validation(rows, tuned: str = "beta", key: str = "final_val_acc") -> list:
    """For each group of runs that differ only in ``tuned``, keep the row with
    the best validation accuracy (ties go to the earliest row)."""
    best = {}
    for r in rows:
        group = tuple((k, r[k]) for k in ("delta", "beta", "labels_per_class", "seed") if k != tuned)
        if group not in best or r[key] > best[group][key]:
            best[group] = r
    return list(best.values())


def _validate_output(path: str) -> str | None:
    target = os.path.abspath(path)
    probe = target
    while not os.path.exists(probe):
        parent = os.path.dirname(probe)
        if parent == probe:
            break
        probe = parent
    if os.path.exists(target) and not os.path.isdir(target):
        return f"output path {path!r} exists and is not a directory"
    if not os.access(probe, os.W_OK):
        return f"output path {path!r} is not writable"
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="supercm", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run every sweep point of a spec")
    p_run.add_argument("spec")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_run.add_argument("--out", default=None, help="override the spec's output directory")
    p_val = sub.add_parser("validate", help="check a spec without running it")
    p_val.add_argument("spec")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    try:
        spec = load_spec(args.spec)
    except OSError as exc:
        print(f"error: cannot read {args.spec}: {exc.strerror}", file=sys.stderr)
        return EXIT_SPEC
    except SpecError as exc:
        for v in exc.violations:
            print(f"{args.spec}:{v}", file=sys.stderr)
        return EXIT_SPEC

    if args.verb == "validate":
        print(f"{args.spec}: ok ({len(spec.grid())} runs)")
        return EXIT_OK

    out_root = args.out or spec.output
    problem = _validate_output(out_root)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return EXIT_SPEC
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_SPEC
    try:
        rows = run_spec(spec, out_root, args.jobs)
    except NonFiniteLossError as exc:
        print(f"error: non-finite training loss in {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(rows)} runs to {out_root}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
