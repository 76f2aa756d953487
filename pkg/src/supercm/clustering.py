"""The clustering module (CM): a one-layer autoencoder whose softmax encoder
gives cluster responsibilities and whose decoder weights are the centroids.

Centroids are never trained by gradient descent here. In semi-supervised use
they follow a class-wise moving average of labeled features
(:func:`update_centroids`).
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core_math import (
    EmptyInputError,
    ShapeError,
    _check_labels,
    linear_forward,
    softmax_backward,
    softmax_rows,
)

EQ2_MODES = ("class_mean", "literal")


@dataclass
class ClusteringModuleState:
    weights: np.ndarray  # d x K
    bias: np.ndarray  # K
    centroids: np.ndarray  # K x d
    ma_counter: int = 0

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @classmethod
    def init(cls, dim: int, n_clusters: int, rng, dtype=np.float64):
        bound = 1.0 / np.sqrt(dim)
        w = rng.uniform(-bound, bound, size=(dim, n_clusters)).astype(dtype)
        return cls(
            weights=w,
            bias=np.zeros(n_clusters, dtype=dtype),
            centroids=np.zeros((n_clusters, dim), dtype=dtype),
        )

    def copy(self) -> "ClusteringModuleState":
        return ClusteringModuleState(
            self.weights.copy(), self.bias.copy(), self.centroids.copy(), self.ma_counter
        )


@dataclass(frozen=True)
class CMLossBreakdown:
    reconstruction: float
    variance_penalty: float
    cross_centroid: float
    dirichlet: float

    @property
    def total(self) -> float:
        return self.reconstruction + self.variance_penalty + self.cross_centroid + self.dirichlet


@dataclass
class CMGrads:
    loss: CMLossBreakdown
    features: np.ndarray  # total, including the path through the logits
    features_direct: np.ndarray  # reconstruction path only
    weights: np.ndarray
    bias: np.ndarray
    logits: np.ndarray


def _alpha_vector(alpha, k: int, dtype=np.float64) -> np.ndarray:
    a = np.asarray(alpha, dtype=dtype).reshape(-1)
    if a.size == 1:
        a = np.full(k, a[0], dtype=dtype)
    if a.shape[0] != k:
        raise ShapeError(f"alpha has {a.shape[0]} entries for {k} clusters")
    return a


def encoder_logits(features, state: ClusteringModuleState) -> np.ndarray:
    return linear_forward(features, state.weights, state.bias)


def encode(features, state: ClusteringModuleState) -> np.ndarray:
    """Responsibilities ``softmax(features @ W + b)``, shape N x K."""
    return softmax_rows(encoder_logits(features, state))


def reconstruct(gamma, centroids) -> np.ndarray:
    g = np.asarray(gamma)
    mu = np.asarray(centroids)
    if g.shape[1] != mu.shape[0]:
        raise ShapeError(f"gamma has {g.shape[1]} columns for {mu.shape[0]} centroids")
    return g @ mu


def cm_loss(x, gamma, x_bar, centroids, alpha) -> CMLossBreakdown:
    """Clustering-module loss with its four terms reported separately.

    ``x_bar`` must be ``gamma @ centroids``; it is accepted explicitly so
    callers can pass the reconstruction they already hold.
    """
    x = np.asarray(x)
    gamma = np.asarray(gamma)
    mu = np.asarray(centroids)
    if x.shape[0] == 0:
        raise EmptyInputError("cm_loss on an empty batch")
    n, k = gamma.shape
    if x.shape[0] != n or x.shape[1] != mu.shape[1] or mu.shape[0] != k:
        raise ShapeError(f"inconsistent shapes X{x.shape} gamma{gamma.shape} mu{mu.shape}")
    if np.shape(x_bar) != x.shape:
        raise ShapeError("reconstruction shape differs from X")
    a = _alpha_vector(alpha, k, x.dtype)

    resid = x - np.asarray(x_bar)
    recon = float(np.sum(resid * resid)) / n
    _, var, cross, dirichlet, _, _ = kernels.cm_terms_grads(
        np.ascontiguousarray(x), np.ascontiguousarray(gamma), np.ascontiguousarray(mu), a
    )
    return CMLossBreakdown(recon, var, cross, dirichlet)


def cm_loss_grads(features, logits, state: ClusteringModuleState, alpha) -> CMGrads:
    """Loss and analytic gradients w.r.t. features, encoder weights and bias.

    ``logits`` must equal ``features @ W + b``. The centroids enter as
    constants and receive no gradient.
    """
    x = np.ascontiguousarray(features)
    z = np.asarray(logits)
    if x.shape[0] == 0:
        raise EmptyInputError("cm_loss_grads on an empty batch")
    k = state.n_clusters
    if x.shape[1] != state.dim or z.shape != (x.shape[0], k):
        raise ShapeError(f"features{x.shape} / logits{z.shape} vs state d={state.dim} K={k}")
    a = _alpha_vector(alpha, k, x.dtype)
    gamma = softmax_rows(z)
    recon, var, cross, dirichlet, gx, gg = kernels.cm_terms_grads(
        x, gamma, np.ascontiguousarray(state.centroids), a
    )
    gz = softmax_backward(gamma, gg)
    return CMGrads(
        loss=CMLossBreakdown(recon, var, cross, dirichlet),
        features=gx + gz @ state.weights.T,
        features_direct=gx,
        weights=x.T @ gz,
        bias=gz.sum(axis=0),
        logits=gz,
    )


def update_centroids(
    state: ClusteringModuleState, features, labels, mode: str = "class_mean"
) -> ClusteringModuleState:
    """Moving-average centroid update from one labeled batch, in place.

    ``class_mean`` divides each class sum by that class's count in the batch;
    ``literal`` divides by the whole labeled batch size. Classes absent from
    the batch keep their centroid.
    """
    if mode not in EQ2_MODES:
        raise ValueError(f"unknown centroid update mode {mode!r}")
    x = np.asarray(features)
    if x.shape[0] < 1:
        raise EmptyInputError("centroid update needs at least one labeled sample")
    if x.shape[1] != state.dim:
        raise ShapeError(f"feature dim {x.shape[1]} != centroid dim {state.dim}")
    k = state.n_clusters
    y = _check_labels(labels, x.shape[0], k)

    state.ma_counter += 1
    t = state.ma_counter
    sums = np.zeros_like(state.centroids)
    np.add.at(sums, y, x)
    counts = np.bincount(y, minlength=k)
    present = counts > 0
    denom = counts[present, None] if mode == "class_mean" else x.shape[0]
    stat = sums[present] / denom
    mu = state.centroids
    mu[present] = ((t - 1) / t) * mu[present] + (1.0 / t) * stat
    return state
