"""Server-side sample-weighted aggregation and global model broadcast.

The server is honest but blind: the same weighted mean is applied to
every reported update, and nothing in the aggregation path reads the
ground-truth is_malicious flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import as_params, ensure_finite


@dataclass(frozen=True)
class ReportedUpdate:
    """One device's uploaded model plus its self-reported sample count.

    is_malicious is ground-truth bookkeeping for metrics only; the
    aggregation path never branches on it.
    """

    device_id: int
    params: np.ndarray
    reported_samples: int
    is_malicious: bool = False

    def __post_init__(self):
        if self.reported_samples < 1:
            raise ValueError(
                f"device {self.device_id}: reported_samples must be >= 1, "
                f"got {self.reported_samples}"
            )


def aggregate(updates: Sequence[ReportedUpdate]) -> np.ndarray:
    """Weighted mean of all updates, weights = reported samples / total.

    Summation runs in ascending device_id order so the result is
    bit-deterministic regardless of arrival order.
    """
    if not updates:
        raise ValueError("aggregate called with no updates")
    ordered = sorted(updates, key=lambda u: u.device_id)
    dim = as_params(ordered[0].params).shape[0]
    for u in ordered:
        if as_params(u.params).shape[0] != dim:
            raise ValueError(
                f"dimension mismatch: device {ordered[0].device_id} has {dim}, "
                f"device {u.device_id} has {u.params.shape[0]}"
            )
    counts = np.array([u.reported_samples for u in ordered], dtype=np.float64)
    weights = counts / counts.sum()
    stacked = np.stack([as_params(u.params) for u in ordered])
    out = (weights[:, None] * stacked).sum(axis=0)
    return ensure_finite("aggregated global model", out)


def broadcast(global_params, device_count: int) -> list[np.ndarray]:
    """Independent copies of the global model, one per device."""
    if device_count < 1:
        raise ValueError(f"device_count must be >= 1, got {device_count}")
    global_params = as_params(global_params)
    return [global_params.copy() for _ in range(device_count)]
