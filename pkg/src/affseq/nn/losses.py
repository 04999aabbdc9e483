"""Masked mean-squared-error loss for padded / partially annotated sequences."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of (pred - target)^2 over unmasked (frame, dimension) elements.

    ``mask`` is a per-frame boolean [batch x T]; both output dimensions of a
    masked frame are excluded. Returns the loss and its gradient w.r.t.
    ``pred`` (zero at masked positions).
    """
    if pred.shape != target.shape:
        raise DomainError(f"pred shape {pred.shape} != target shape {target.shape}")
    if mask.shape != pred.shape[:-1]:
        raise DomainError(f"mask shape {mask.shape} does not match frames {pred.shape[:-1]}")
    count = int(mask.sum()) * pred.shape[-1]
    if count == 0:
        raise DomainError("loss over a fully masked batch is undefined")
    diff = (pred - target) * mask[..., None]
    loss = float(np.sum(diff**2) / count)
    return loss, 2.0 * diff / count
