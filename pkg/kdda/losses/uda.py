# kdda/losses/uda.py
"""
Domain adaptation losses optimized by the teachers.
"""
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from kdda.losses.models import KernelConfig, LossInputError, LossWeights
from kdda.nets import Network
from kdda.tensor_ad import (
    DiffTensor,
    ShapeMismatchError,
    add,
    concat,
    exp,
    grad_reverse,
    log_softmax,
    multiply,
    pairwise_sq_dists,
    reduce_mean,
    reduce_sum,
    scalar_multiply,
)

SOURCE_DOMAIN_LABEL = 0
TARGET_DOMAIN_LABEL = 1


def _as_tensor(x) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def cross_entropy(logits: DiffTensor, labels) -> DiffTensor:
    """Mean negative log-likelihood of integer `labels` under softmax(logits)."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeMismatchError(f"cross_entropy: logits must be N x K, got {logits.shape}")
    n, k = logits.shape
    if n == 0:
        raise LossInputError("cross_entropy: empty batch")
    if labels.shape != (n,):
        raise ShapeMismatchError(f"cross_entropy: labels of shape {labels.shape} for {n} rows")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise LossInputError(f"cross_entropy: labels must be integers in [0, {k}), got range "
                             f"[{labels.min()}, {labels.max()}]")
    one_hot = DiffTensor(np.eye(k)[labels])
    return scalar_multiply(reduce_sum(multiply(log_softmax(logits), one_hot)), -1.0 / n)


def median_bandwidths(feat_s, feat_t, multipliers: Sequence[float] = (0.5, 1.0, 2.0)) -> list[float]:
    """
    sigma^2 values from the median heuristic over the pooled batch. Computed on
    plain values, so no gradient flows through the bandwidths.
    """
    pooled = np.concatenate([_as_tensor(feat_s).data, _as_tensor(feat_t).data], axis=0)
    dists = cdist(pooled, pooled, "sqeuclidean")
    off_diagonal = dists[~np.eye(len(pooled), dtype=bool)]
    median = float(np.median(off_diagonal)) if off_diagonal.size else 0.0
    # Degenerate batch (single point or all points equal).
    if not median > 0:
        median = 1.0
    return [m * median for m in multipliers]


def _kernel_mean(dists: DiffTensor, sigma_sq: float) -> DiffTensor:
    return reduce_mean(exp(scalar_multiply(dists, -1.0 / (2.0 * sigma_sq))))


def mmd_gaussian(feat_s: DiffTensor, feat_t: DiffTensor, cfg: Optional[KernelConfig] = None) -> DiffTensor:
    """
    Biased squared MMD between two feature batches, summed over the Gaussian
    bandwidths of `cfg`: mean k(s,s) + mean k(t,t) - 2 mean k(s,t).
    """
    cfg = cfg or KernelConfig()
    feat_s, feat_t = _as_tensor(feat_s), _as_tensor(feat_t)
    if feat_s.data.ndim != 2 or feat_t.data.ndim != 2:
        raise ShapeMismatchError(f"mmd_gaussian: features must be 2-D, got {feat_s.shape} and {feat_t.shape}")
    if feat_s.shape[0] == 0 or feat_t.shape[0] == 0:
        raise LossInputError("mmd_gaussian: empty batch")
    if feat_s.shape[1] != feat_t.shape[1]:
        raise ShapeMismatchError(f"mmd_gaussian: feature dims {feat_s.shape[1]} and {feat_t.shape[1]} differ")

    if cfg.strategy == "fixed":
        bandwidths = list(cfg.bandwidths)
    else:
        bandwidths = median_bandwidths(feat_s, feat_t, cfg.multipliers)

    d_ss = pairwise_sq_dists(feat_s, feat_s)
    d_tt = pairwise_sq_dists(feat_t, feat_t)
    d_st = pairwise_sq_dists(feat_s, feat_t)

    total = None
    for sigma_sq in bandwidths:
        term = add(
            add(_kernel_mean(d_ss, sigma_sq), _kernel_mean(d_tt, sigma_sq)),
            scalar_multiply(_kernel_mean(d_st, sigma_sq), -2.0),
        )
        total = term if total is None else add(total, term)
    return total


def _tap_features(network: Network, features: dict, tap: Optional[int]) -> DiffTensor:
    if tap is None:
        if not network.spec.tap_layers:
            raise LossInputError(f"{network.name}: network exposes no feature tap")
        tap = network.spec.tap_layers[-1]
    if tap not in features:
        raise LossInputError(f"{network.name}: layer {tap} is not a feature tap")
    return features[tap]


def teacher_uda_mmd(teacher: Network, source_x, source_y, target_x, weights: LossWeights,
                    kernel: Optional[KernelConfig] = None, tap: Optional[int] = None) -> DiffTensor:
    """
    MMD between source and target tapped features plus gamma times the source
    cross-entropy of the teacher.

    Args:
        teacher: Network being adapted.
        source_x, source_y: Labeled source batch.
        target_x: Unlabeled target batch.
        weights: Supplies gamma.
        kernel: Kernel bandwidths, median heuristic by default.
        tap: Feature tap to align; the teacher's last tap by default.
    """
    logits_s, feats_s = teacher.forward(source_x)
    _, feats_t = teacher.forward(target_x)
    mmd = mmd_gaussian(_tap_features(teacher, feats_s, tap), _tap_features(teacher, feats_t, tap), kernel)
    return add(mmd, scalar_multiply(cross_entropy(logits_s, source_y), weights.gamma))


def domain_confusion(features_s: DiffTensor, features_t: DiffTensor, classifier: Network,
                     lam: float = 1.0) -> DiffTensor:
    """
    Domain classifier cross-entropy over the concatenated batch (source=0,
    target=1). Gradients reaching the features are reversed and scaled by lam.
    """
    if features_s.shape[1:] != features_t.shape[1:]:
        raise ShapeMismatchError(f"domain_confusion: feature shapes {features_s.shape} and {features_t.shape} differ")
    if features_s.shape[1] != classifier.spec.input_dim:
        raise ShapeMismatchError(
            f"domain_confusion: features have width {features_s.shape[1]}, "
            f"classifier expects {classifier.spec.input_dim}"
        )
    pooled = grad_reverse(concat([features_s, features_t], axis=0), lam)
    labels = np.concatenate([
        np.full(features_s.shape[0], SOURCE_DOMAIN_LABEL),
        np.full(features_t.shape[0], TARGET_DOMAIN_LABEL),
    ])
    return cross_entropy(classifier.logits(pooled), labels)


def teacher_uda_revgrad(teacher: Network, domain_head: Network, source_x, source_y, target_x,
                        weights: LossWeights, tap: Optional[int] = None) -> DiffTensor:
    """Source cross-entropy plus alpha_dc times the reversed domain-confusion loss."""
    logits_s, feats_s = teacher.forward(source_x)
    _, feats_t = teacher.forward(target_x)
    confusion = domain_confusion(
        _tap_features(teacher, feats_s, tap), _tap_features(teacher, feats_t, tap),
        domain_head, weights.grl_lambda,
    )
    return add(cross_entropy(logits_s, source_y), scalar_multiply(confusion, weights.alpha_dc))
