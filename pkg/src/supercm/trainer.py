"""Training loop: cross-entropy on labeled responsibilities, plus a weighted
CM loss on all rows, plus an optional weighted base SSL loss.

One step runs in this order: feature extraction, moving-average centroid
update from the labeled features, encoding, losses, backprop (centroids are
constants), Adam update.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import mlp as mlp_mod
from .clustering import (
    EQ2_MODES,
    ClusteringModuleState,
    CMLossBreakdown,
    cm_loss_grads,
    encoder_logits,
    update_centroids,
)
from .core_math import AdamState, adam_step, cross_entropy, cross_entropy_grad, softmax_rows
from .data import TEST, VALIDATION, Batch, Dataset, sample_batch
from .ssl_base import (
    SslLossConfig,
    pseudo_label_grad,
    pseudo_label_loss,
    vat_loss,
)

RUN_CSV_HEADER = ("iter", "ce", "cm_recon", "cm_var", "cm_cross", "cm_dirichlet", "ssl", "total", "lr")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


@dataclass
class ModelConfig:
    hidden: tuple = (10, 10, 10)
    embedding_dim: int = 2
    activation: str = "relu"
    init_gain: float = 1.0


@dataclass
class TrainConfig:
    beta: float = 1.0
    delta: float = 0.0
    alpha: object = 1.0  # scalar or per-cluster list, each >= 1
    lr: float = 0.01
    iterations: int = 2000
    decay_at: int | None = None  # None: 80% of iterations
    decay_factor: float = 0.1
    n_l: int = 6
    n_u: int = 64
    swa_start_fraction: float = 0.8
    ssl: SslLossConfig = field(default_factory=SslLossConfig)
    eq2_mode: str = "class_mean"
    augment_sd: float = 0.0
    eval_every: int | None = None  # None: max(iterations // 50, 1)
    log_every: int = 1
    dtype: str = "float64"
    seed: int = 0

    @property
    def decay_step(self) -> int:
        return int(0.8 * self.iterations) if self.decay_at is None else self.decay_at

    @property
    def eval_interval(self) -> int:
        return max(self.iterations // 50, 1) if self.eval_every is None else self.eval_every

    def violations(self) -> list:
        out = []
        if self.beta < 0:
            out.append("beta must be >= 0")
        if self.delta < 0:
            out.append("delta must be >= 0")
        if self.delta > 0 and self.ssl.method == "none":
            out.append("delta > 0 requires ssl.method != none (delta, ssl.method)")
        if np.any(np.asarray(self.alpha, dtype=float) < 1):
            out.append("alpha entries must be >= 1")
        if self.lr <= 0:
            out.append("lr must be > 0")
        if self.iterations < 0:
            out.append("iterations must be >= 0")
        if self.decay_at is not None and not 0 <= self.decay_at <= self.iterations:
            out.append("decay_at must lie in [0, iterations]")
        if self.n_l < 1:
            out.append("n_l must be >= 1")
        if self.n_u < 0:
            out.append("n_u must be >= 0")
        if not 0.0 <= self.swa_start_fraction <= 1.0:
            out.append("swa_start_fraction must lie in [0, 1]")
        if self.eq2_mode not in EQ2_MODES:
            out.append(f"eq2_mode must be one of {EQ2_MODES}")
        if self.dtype not in ("float64", "float32"):
            out.append("dtype must be float64 or float32")
        if self.eval_every is not None and self.eval_every < 1:
            out.append("eval_every must be >= 1")
        if self.log_every < 1:
            out.append("log_every must be >= 1")
        return out


@dataclass
class SuperCMModel:
    """Feature extractor followed by the clustering module."""

    mlp: mlp_mod.MlpState
    cm: ClusteringModuleState

    @classmethod
    def init(cls, d_in: int, n_classes: int, model_cfg: ModelConfig, rng, dtype=np.float64):
        widths = [d_in, *model_cfg.hidden, model_cfg.embedding_dim]
        net = mlp_mod.MlpState.init(widths, rng, model_cfg.activation, dtype, model_cfg.init_gain)
        cm = ClusteringModuleState.init(model_cfg.embedding_dim, n_classes, rng, dtype)
        return cls(net, cm)

    def params(self) -> list:
        return self.mlp.params() + [self.cm.weights, self.cm.bias]

    def copy(self) -> "SuperCMModel":
        return SuperCMModel(self.mlp.copy(), self.cm.copy())

    def features(self, inputs) -> np.ndarray:
        return mlp_mod.forward(inputs, self.mlp)[0]

    def logits(self, inputs) -> np.ndarray:
        return encoder_logits(self.features(inputs), self.cm)

    def predict_proba(self, inputs) -> np.ndarray:
        return softmax_rows(self.logits(inputs))

    def predict(self, inputs) -> np.ndarray:
        return np.argmax(self.predict_proba(inputs), axis=1)

    def input_grad(self, inputs, grad_logits) -> np.ndarray:
        feats, cache = mlp_mod.forward(inputs, self.mlp)
        g_in, _ = mlp_mod.backward(grad_logits @ self.cm.weights.T, cache, self.mlp)
        return g_in


@dataclass
class StepRecord:
    iteration: int
    ce: float
    cm: CMLossBreakdown
    ssl: float
    total: float
    lr: float

    def row(self) -> tuple:
        c = self.cm
        return (
            self.iteration, self.ce, c.reconstruction, c.variance_penalty,
            c.cross_centroid, c.dirichlet, self.ssl, self.total, self.lr,
        )


@dataclass
class RunRecord:
    steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (iteration, split, accuracy)
    final_test_acc: float = float("nan")
    final_val_acc: float = float("nan")
    best_val_acc: float = float("nan")
    best_val_iter: int = -1

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_CSV_HEADER)
            for s in self.steps:
                w.writerow([s.iteration] + [repr(float(v)) for v in s.row()[1:]])

    def summary(self) -> dict:
        return {
            "final_test_acc": self.final_test_acc,
            "final_val_acc": self.final_val_acc,
            "best_val_acc": self.best_val_acc,
            "best_val_iter": self.best_val_iter,
        }


class SwaAccumulator:
    """Running mean of parameter lists for stochastic weight averaging."""

    def __init__(self):
        self.avg = None
        self.count = 0

    def add(self, params) -> None:
        self.count += 1
        if self.avg is None:
            self.avg = [p.copy() for p in params]
        else:
            for a, p in zip(self.avg, params):
                a *= self.count - 1
                a += p
                a /= self.count

    def result(self) -> list:
        if self.avg is None:
            raise ValueError("no SWA contributions")
        return self.avg


def swa_average(snapshots) -> list:
    """Arithmetic mean of a sequence of parameter lists."""
    acc = SwaAccumulator()
    for snap in snapshots:
        acc.add([np.asarray(p, dtype=float) for p in snap])
    return acc.result()


def evaluate(model: SuperCMModel, inputs, labels) -> float:
    """Top-1 accuracy of argmax responsibilities (ties go to the lowest index)."""
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(model.predict(inputs) == y))


def step_gradients(model: SuperCMModel, batch: Batch, config: TrainConfig, rng, iteration: int = 0, move_centroids: bool = True):
    """Steps (1)-(5) of a training iteration: returns ``(record, grads)`` with
    grads laid out like :meth:`SuperCMModel.params`. Mutates only the
    centroids (and their counter), and only when ``move_centroids``."""
    net, cm = model.mlp, model.cm
    n_l = batch.labeled.shape[0]
    n_u = batch.unlabeled.shape[0]
    beta, delta = config.beta, config.delta
    method = config.ssl.method if delta > 0 else "none"
    alpha = config.alpha

    # (1) features
    feat_l, cache_l = mlp_mod.forward(batch.labeled, net)
    if n_u:
        feat_u, cache_u = mlp_mod.forward(batch.unlabeled, net)

    # (2) centroids from labeled features; they stay constants below
    if move_centroids:
        update_centroids(cm, feat_l, batch.labels, config.eq2_mode)

    # (3) responsibilities
    z_l = encoder_logits(feat_l, cm)
    gamma_l = softmax_rows(z_l)
    if n_u:
        z_u = encoder_logits(feat_u, cm)
        gamma_u = softmax_rows(z_u)

    # (4) losses
    ce = cross_entropy(gamma_l, batch.labels)
    gz_l = cross_entropy_grad(gamma_l, batch.labels)
    if n_u:
        cmg = cm_loss_grads(np.vstack([feat_l, feat_u]), np.vstack([z_l, z_u]), cm, alpha)
    else:
        cmg = cm_loss_grads(feat_l, z_l, cm, alpha)
    cm_terms = cmg.loss

    ssl_value = 0.0
    gz_u = None
    gfeat_l_direct = None
    gfeat_u_direct = None
    if beta != 0.0:
        gz_l = gz_l + beta * cmg.logits[:n_l]
        gfeat_l_direct = beta * cmg.features_direct[:n_l]
        if n_u:
            gz_u = beta * cmg.logits[n_l:]
            gfeat_u_direct = beta * cmg.features_direct[n_l:]

    vat = None
    if n_u and method == "pseudo_label":
        ssl_value = pseudo_label_loss(gamma_u, config.ssl)
        g = delta * pseudo_label_grad(gamma_u, config.ssl)
        gz_u = g if gz_u is None else gz_u + g
    elif n_u and method == "vat":
        vat = vat_loss(batch.unlabeled, model, config.ssl, rng, clean_probs=gamma_u)
        ssl_value = vat.loss

    total = ce + beta * cm_terms.total + delta * ssl_value
    if not np.isfinite(total):
        raise NonFiniteLossError(f"non-finite loss at iteration {iteration}")

    # (5) backprop into encoder and feature extractor
    w = cm.weights
    g_w = feat_l.T @ gz_l
    g_b = gz_l.sum(axis=0)
    g_feat_l = gz_l @ w.T
    if gfeat_l_direct is not None:
        g_feat_l = g_feat_l + gfeat_l_direct
    _, grads = mlp_mod.backward(g_feat_l, cache_l, net)

    if gz_u is not None:
        g_w = g_w + feat_u.T @ gz_u
        g_b = g_b + gz_u.sum(axis=0)
        g_feat_u = gz_u @ w.T
        if gfeat_u_direct is not None:
            g_feat_u = g_feat_u + gfeat_u_direct
        _, grads_u = mlp_mod.backward(g_feat_u, cache_u, net)
        grads = [a + b for a, b in zip(grads, grads_u)]

    if vat is not None:
        feat_a, cache_a = mlp_mod.forward(batch.unlabeled + vat.perturbation, net)
        q = softmax_rows(encoder_logits(feat_a, cm))
        gz_a = delta * (q - vat.clean_probs) / n_u
        g_w = g_w + feat_a.T @ gz_a
        g_b = g_b + gz_a.sum(axis=0)
        _, grads_a = mlp_mod.backward(gz_a @ w.T, cache_a, net)
        grads = [a + b for a, b in zip(grads, grads_a)]

    return StepRecord(iteration, ce, cm_terms, ssl_value, total, float("nan")), grads + [g_w, g_b]


def train_step(model: SuperCMModel, batch: Batch, config: TrainConfig, adam: AdamState, lr: float, rng, iteration: int = 0) -> StepRecord:
    """One full iteration: gradients, then the Adam update (step 6)."""
    record, grads = step_gradients(model, batch, config, rng, iteration)
    adam_step(model.params(), grads, adam, lr)
    record.lr = lr
    return record


def make_rngs(seed: int):
    """Independent generators for (initialisation, training stream)."""
    init_ss, train_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(train_ss)


def train(
    ds: Dataset,
    labeled_idx,
    unlabeled_idx,
    config: TrainConfig,
    model_cfg: ModelConfig | None = None,
    callback=None,
):
    """Run ``config.iterations`` steps; returns ``(record, swa_model, last_model)``.

    ``callback(iteration, model)`` is called after every step.
    """
    problems = config.violations()
    if problems:
        raise ValueError("; ".join(problems))
    model_cfg = model_cfg or ModelConfig()
    dtype = np.dtype(config.dtype)
    init_rng, rng = make_rngs(config.seed)
    if ds.features.dtype != dtype:
        ds = Dataset(ds.features.astype(dtype), ds.labels, ds.split)
    model = SuperCMModel.init(ds.features.shape[1], ds.n_classes, model_cfg, init_rng, dtype)
    record = RunRecord()
    if config.iterations == 0:
        return record, model, model

    adam = AdamState.for_params(model.params())
    x_val, y_val = ds.subset(VALIDATION)
    x_test, y_test = ds.subset(TEST)
    swa = SwaAccumulator()
    swa_from = min(int(config.swa_start_fraction * config.iterations), config.iterations - 1)
    n_u = config.n_u if len(unlabeled_idx) else 0

    for it in range(1, config.iterations + 1):
        lr = config.lr if it <= config.decay_step else config.lr * config.decay_factor
        batch = sample_batch(ds, labeled_idx, unlabeled_idx, config.n_l, n_u, config.augment_sd, rng)
        try:
            step = train_step(model, batch, config, adam, lr, rng, it)
        except NonFiniteLossError as exc:
            exc.record = record
            raise
        if it % config.log_every == 0 or it == config.iterations:
            record.steps.append(step)
        if it > swa_from:
            swa.add(model.params())
        if y_val.size and (it % config.eval_interval == 0 or it == config.iterations):
            acc = evaluate(model, x_val, y_val)
            record.evals.append((it, "validation", acc))
            if record.best_val_iter < 0 or acc > record.best_val_acc:
                record.best_val_acc, record.best_val_iter = acc, it
        if callback is not None:
            callback(it, model)

    final = model.copy()
    for dst, src in zip(final.params(), swa.result()):
        dst[...] = src
    if y_val.size:
        record.final_val_acc = evaluate(final, x_val, y_val)
        record.evals.append((config.iterations, "validation_swa", record.final_val_acc))
    if y_test.size:
        record.final_test_acc = evaluate(final, x_test, y_test)
        record.evals.append((config.iterations, "test_swa", record.final_test_acc))
    return record, final, model
