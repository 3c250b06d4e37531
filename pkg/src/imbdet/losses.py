"""Softmax probabilities and the unified weighted/focal cross-entropy loss.

The loss of a proposal with true class ``y``, probability ``p_y``, static
class weight ``w_y`` and focusing exponent ``alpha`` is

    w_y * (1 - p_y)**alpha * (-log(max(p_y, prob_floor)))

With ``w == 1`` and ``alpha == 0`` this reduces bit-for-bit to plain
cross entropy; ``alpha == 0`` alone gives the statically weighted form and
``w == 1`` alone the focal form.  The static weight multiplies last, so the
loss is exactly linear in it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidInputError

if TYPE_CHECKING:
    from .weights import WeightVector

PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LossConfig:
    """Static weights, focusing exponent and the probability floor.

    ``static_weights`` may be a WeightVector, a raw per-class sequence, or
    None for uniform weights.  ``prob_floor`` clamps probabilities before the
    log so the loss stays finite; it must lie in (0, 1e-6].
    """

    static_weights: "WeightVector | Sequence[float] | None" = None
    focal_alpha: float = 0.0
    prob_floor: float = 1e-12

    def __post_init__(self):
        if not math.isfinite(self.focal_alpha) or self.focal_alpha < 0:
            raise InvalidInputError(f"focal_alpha must be finite and >= 0, got {self.focal_alpha}")
        if not (0 < self.prob_floor <= 1e-6):
            raise InvalidInputError(f"prob_floor must be in (0, 1e-6], got {self.prob_floor}")

    def weight_array(self, num_classes: int) -> np.ndarray:
        """Per-class weights resolved to a float array of length num_classes."""
        if self.static_weights is None:
            return np.ones(num_classes)
        values = getattr(self.static_weights, "values", self.static_weights)
        w = np.asarray(values, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != num_classes:
            raise InvalidInputError(
                f"static weights have length {w.shape}, expected ({num_classes},)"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInputError("static weights must be finite and >= 0")
        return w


def softmax(logits) -> np.ndarray:
    """Probabilities from scores along the last axis.

    The maximum is subtracted before exponentiation, so no intermediate
    overflows for scores up to 1e4 in magnitude.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise InvalidInputError("logits must be non-empty")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("probabilities must form a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("probabilities must be finite and >= 0")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise InvalidInputError(f"probabilities must sum to 1, got {p.sum()!r}")
    return p


def _check_target(target: int, num_classes: int) -> int:
    t = int(target)
    if t != target or not (0 <= t < num_classes):
        raise InvalidInputError(f"target {target!r} out of range for {num_classes} classes")
    return t


def loss(probs, target: int, cfg: LossConfig) -> float:
    """Weighted focal cross entropy of one proposal from its probabilities."""
    p = _check_probs(probs)
    t = _check_target(target, p.shape[0])
    w = cfg.weight_array(p.shape[0])
    p_y = p[t]
    ce = -math.log(max(p_y, cfg.prob_floor))
    focal = (1.0 - p_y) ** cfg.focal_alpha
    return w[t] * (focal * ce)


def _losses_and_dlogits(logits: np.ndarray, targets: np.ndarray, cfg: LossConfig):
    """Vectorized fused loss values and their gradients w.r.t. logits.

    ``logits`` is (N, K), ``targets`` is (N,).  Returns losses (N,) and
    gradients (N, K).
    """
    p = softmax(logits)
    n = np.arange(p.shape[0])
    p_y = p[n, targets]
    pt = np.maximum(p_y, cfg.prob_floor)
    ce = -np.log(pt)
    one_minus = 1.0 - p_y
    alpha = cfg.focal_alpha
    focal = one_minus**alpha
    w = cfg.weight_array(p.shape[1])
    w_y = w[targets]
    values = w_y * (focal * ce)

    # dL/dp_y; the focal term alpha*(1-p)^(alpha-1) is taken as 0 at p_y == 1,
    # where it would otherwise be singular for alpha < 1
    if alpha == 0.0:
        dfocal = np.zeros_like(p_y)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            dfocal = np.where(one_minus > 0, alpha * one_minus ** (alpha - 1.0), 0.0)
    dlog = np.where(p_y > cfg.prob_floor, focal / pt, 0.0)
    dl_dp = -w_y * (dfocal * ce + dlog)

    # chain through softmax: dp_y/dz_k = p_y * (1[k == y] - p_k)
    base = dl_dp * p_y
    grads = -base[:, None] * p
    grads[n, targets] += base
    return values, grads


def loss_and_grad(logits, target: int, cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Loss of one proposal and its analytic gradient w.r.t. the logits.

    Softmax is fused into the computation for numerical stability; the value
    equals ``loss(softmax(logits), target, cfg)``.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise InvalidInputError(f"logits must be a vector, got shape {z.shape}")
    t = _check_target(target, z.shape[0])
    values, grads = _losses_and_dlogits(z[None, :], np.array([t]), cfg)
    return float(values[0]), grads[0]


def batch_loss(logits, targets, cfg: LossConfig) -> float:
    """Mean per-proposal loss over a batch of (logits, target) rows.

    The divisor is the proposal count, not the sum of static weights.
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidInputError("batch must be a non-empty (N, K) array of logits")
    if t.shape != (z.shape[0],):
        raise InvalidInputError(f"targets shape {t.shape} does not match batch of {z.shape[0]}")
    t = t.astype(np.int64)
    if np.any(t < 0) or np.any(t >= z.shape[1]):
        raise InvalidInputError("target out of range")
    values, _ = _losses_and_dlogits(z, t, cfg)
    return float(values.mean())
