"""Losses over logits with exact gradients.

All cross-entropy variants share one max-subtracted core, so the adjusted
variants degenerate bit-for-bit to plain softmax cross-entropy whenever the
adjustment vanishes (tau = 0 or uniform priors up to float addition).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .priors import PriorVector


@dataclass
class LossResult:
    value: float
    dlogits: np.ndarray


def _check_labels(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ValueError("logits must be 2-D")
    if labels.shape != (logits.shape[0],):
        raise ValueError("one label per logits row required")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("label outside logit columns")
    return labels


def _ce_core(values: np.ndarray, labels: np.ndarray) -> LossResult:
    """Mean -log softmax(values)[label]; values may contain -inf entries."""
    n = values.shape[0]
    shift = values - values.max(axis=1, keepdims=True)
    expv = np.exp(shift)
    denom = expv.sum(axis=1, keepdims=True)
    log_probs = shift - np.log(denom)
    value = float(-log_probs[np.arange(n), labels].mean())
    grad = expv / denom
    grad[np.arange(n), labels] -= 1.0
    return LossResult(value, grad / n)


def _prior_array(priors: PriorVector, num_columns: int) -> np.ndarray:
    missing = [c for c in range(num_columns) if c not in priors]
    if missing:
        raise KeyError(f"missing prior for logit columns {missing}")
    return priors.as_array(range(num_columns))


def softmax_ce(logits: np.ndarray, labels) -> LossResult:
    """Softmax cross-entropy, mean over the batch."""
    labels = _check_labels(logits, labels)
    return _ce_core(logits, labels)


def las_ce(logits: np.ndarray, labels, priors: PriorVector, tau: float) -> LossResult:
    """Cross-entropy on logits shifted by tau * log(prior) per column.

    The shift is constant with respect to the logits, so the gradient is the
    adjusted softmax minus the one-hot target.
    """
    labels = _check_labels(logits, labels)
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    pi = _prior_array(priors, logits.shape[1])
    adjusted = logits + tau * np.log(pi)
    return _ce_core(adjusted, labels)


def las_ce_tau_inf(logits: np.ndarray, labels, priors: PriorVector) -> LossResult:
    """Coefficient-zeroing limit of the adjusted loss.

    In the pairwise-margin form, the coefficient on a competitor class is
    dropped entirely when its prior is strictly below the target's prior and
    kept at the plain prior ratio otherwise.
    """
    labels = _check_labels(logits, labels)
    pi = _prior_array(priors, logits.shape[1])
    log_pi = np.log(pi)
    log_coef = log_pi[None, :] - log_pi[labels][:, None]
    log_coef[pi[None, :] < pi[labels][:, None]] = -np.inf
    return _ce_core(logits + log_coef, labels)


def kd_loss(student_logits: np.ndarray, teacher_logits: np.ndarray,
            temperature: float) -> LossResult:
    """Temperature-softened KL from teacher to student over shared columns.

    The student may carry extra new-class columns, which are excluded and
    receive zero gradient; the teacher is a constant.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n, n_teacher = teacher_logits.shape
    if student_logits.shape[0] != n:
        raise ValueError("student/teacher batch sizes differ")
    if n_teacher > student_logits.shape[1]:
        raise ValueError("teacher has more classes than student")
    t = temperature
    shared = student_logits[:, :n_teacher]

    def log_softmax(v):
        shift = v - v.max(axis=1, keepdims=True)
        return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))

    log_p = log_softmax(teacher_logits / t)
    log_q = log_softmax(shared / t)
    p = np.exp(log_p)
    value = float(t * t * (p * (log_p - log_q)).sum() / n)
    grad = np.zeros_like(student_logits)
    grad[:, :n_teacher] = t * (np.exp(log_q) - p) / n
    return LossResult(value, grad)
