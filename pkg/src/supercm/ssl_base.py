"""Base semi-supervised losses that can be added next to the CM term:
pseudo-labeling and virtual adversarial training (VAT)."""
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core_math import LOG_EPS, ShapeError, softmax_rows

SSL_METHODS = ("none", "pseudo_label", "vat")


@dataclass(frozen=True)
class SslLossConfig:
    method: str = "none"
    pl_threshold: float = 0.95
    vat_epsilon: float = 1.0
    vat_xi: float = 1e-6
    vat_power_iters: int = 1

    def __post_init__(self):
        if self.method not in SSL_METHODS:
            raise ValueError(f"unknown SSL method {self.method!r}")
        if not 0.0 < self.pl_threshold < 1.0:
            raise ValueError("pl_threshold must lie in (0, 1)")
        if self.vat_epsilon <= 0 or self.vat_xi <= 0:
            raise ValueError("vat_epsilon and vat_xi must be positive")
        if self.vat_power_iters < 1:
            raise ValueError("vat_power_iters must be at least 1")


class ProbModel(Protocol):
    """What VAT needs from a model: logits and a pull-back of a logit gradient
    to the inputs."""

    def logits(self, inputs: np.ndarray) -> np.ndarray: ...

    def input_grad(self, inputs: np.ndarray, grad_logits: np.ndarray) -> np.ndarray: ...


def kl_divergence_rows(p, q) -> float:
    """Mean over rows of KL(p_i || q_i) with logs clamped at 1e-12."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise ShapeError(f"KL operands differ in shape: {p.shape} vs {q.shape}")
    lp = np.log(np.maximum(p, LOG_EPS))
    lq = np.log(np.maximum(q, LOG_EPS))
    return float(np.mean(np.sum(p * (lp - lq), axis=1)))


def _pl_selection(probs, threshold):
    p = np.asarray(probs)
    conf = p.max(axis=1)
    target = p.argmax(axis=1)
    sel = conf >= threshold
    return p, conf, target, sel


def pseudo_label_loss_sum(probs, config: SslLossConfig) -> float:
    """Summed (not averaged) pseudo-label cross-entropy over selected rows."""
    _, conf, _, sel = _pl_selection(probs, config.pl_threshold)
    return float(-np.sum(np.log(np.maximum(conf[sel], LOG_EPS))))


def pseudo_label_loss(probs, config: SslLossConfig) -> float:
    """Cross-entropy against the argmax class for rows whose top probability
    reaches the threshold, averaged over those rows (0 when none qualify)."""
    _, conf, _, sel = _pl_selection(probs, config.pl_threshold)
    n_sel = int(sel.sum())
    if n_sel == 0:
        return 0.0
    return float(-np.sum(np.log(np.maximum(conf[sel], LOG_EPS))) / n_sel)


def pseudo_label_grad(probs, config: SslLossConfig) -> np.ndarray:
    """Gradient of :func:`pseudo_label_loss` w.r.t. the logits; pseudo-labels
    are treated as fixed targets."""
    p, _, target, sel = _pl_selection(probs, config.pl_threshold)
    g = np.zeros_like(p)
    n_sel = int(sel.sum())
    if n_sel:
        rows = np.flatnonzero(sel)
        g[rows] = p[rows]
        g[rows, target[rows]] -= 1.0
        g /= n_sel
    return g


@dataclass
class VatResult:
    loss: float
    perturbation: np.ndarray
    clean_probs: np.ndarray
    adv_probs: np.ndarray


def _unit_rows(v):
    norms = np.sqrt(np.sum(v * v, axis=1, keepdims=True))
    return v / np.where(norms > 0, norms, 1.0), norms[:, 0]


def vat_loss(inputs, model: ProbModel, config: SslLossConfig, rng, clean_probs=None) -> VatResult:
    """Virtual adversarial loss with a power-iteration direction estimate.

    ``clean_probs`` (the model output at ``inputs``) is a constant target;
    pass it in to avoid recomputing it. Rows whose power-iteration gradient
    vanishes exactly (the model is locally flat there) keep their previous
    direction.
    """
    x = np.asarray(inputs)
    if x.shape[0] == 0:
        return VatResult(0.0, np.zeros_like(x), np.zeros((0, 0)), np.zeros((0, 0)))
    p = softmax_rows(model.logits(x)) if clean_probs is None else np.asarray(clean_probs)

    d = rng.standard_normal(x.shape)
    d, norms = _unit_rows(d)
    if np.any(norms == 0):
        d, norms = _unit_rows(rng.standard_normal(x.shape))
        if np.any(norms == 0):
            raise FloatingPointError("VAT noise draw produced a zero-norm direction twice")

    n = x.shape[0]
    for _ in range(config.vat_power_iters):
        xr = x + config.vat_xi * d
        q = softmax_rows(model.logits(xr))
        g = model.input_grad(xr, (q - p) / n)
        g_unit, gnorm = _unit_rows(g)
        d = np.where((gnorm > 0)[:, None], g_unit, d)

    r_adv = config.vat_epsilon * d
    q_adv = softmax_rows(model.logits(x + r_adv))
    return VatResult(kl_divergence_rows(p, q_adv), r_adv, p, q_adv)
