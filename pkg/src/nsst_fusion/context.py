"""Soft context of high-frequency NSST coefficients.

The raw context of a coefficient is a weighted sum of squared magnitudes of
its 4 direct and 4 diagonal neighbours, its parent at the next coarser
scale and two cousins in the adjacent directions. A Gaussian-shaped squash
around the subband threshold turns it into a soft variable ``v`` in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidParameterError, OutOfRangeError
from .nsst import DecompositionSpec, NsstDecomposition

__all__ = [
    "ContextWeights",
    "ContextField",
    "Neighbors",
    "subband_mean_energy",
    "neighbor_index",
    "compute_context",
    "compute_threshold",
    "soft_context",
    "context_field",
]

_DIRECT = ((-1, 0), (1, 0), (0, -1), (0, 1))
_DIAGONAL = ((-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass(frozen=True)
class ContextWeights:
    direct: float = 0.8
    diagonal: float = 0.6
    parent: float = 0.2
    cousin: float = 0.4

    def __post_init__(self):
        for name in ("direct", "diagonal", "parent", "cousin"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise InvalidParameterError(f"context weight {name}={val} must be finite and >= 0")


@dataclass
class ContextField:
    raw: np.ndarray
    v: np.ndarray
    t: float
    sigma: float


class Neighbors(NamedTuple):
    parent: Optional[tuple[int, int]]
    cousins: tuple[tuple[int, int], tuple[int, int]]


def subband_mean_energy(s) -> float:
    s = np.asarray(s, dtype=np.float64)
    return float(np.mean(s * s))


def neighbor_index(j: int, k: int, spec: DecompositionSpec) -> Neighbors:
    """Parent and cousin subband indices of subband ``(j, k)``.

    Scale 0 is the coarsest high-frequency scale and has no parent. The
    parent direction is ``floor(k * K_coarse / K_fine)``.
    """
    if not 0 <= j < spec.levels:
        raise OutOfRangeError(f"scale {j} outside [0, {spec.levels})")
    n_dir = spec.directions_per_scale[j]
    if not 0 <= k < n_dir:
        raise OutOfRangeError(f"direction {k} outside [0, {n_dir}) at scale {j}")
    cousins = ((j, (k - 1) % n_dir), (j, (k + 1) % n_dir))
    parent = None
    if j > 0:
        n_coarse = spec.directions_per_scale[j - 1]
        parent = (j - 1, (k * n_coarse) // n_dir)
    return Neighbors(parent, cousins)


def compute_context(dec: NsstDecomposition, j: int, k: int, w: ContextWeights) -> np.ndarray:
    nb = neighbor_index(j, k, dec.spec)
    sq = dec.highs[j][k] ** 2
    ctx = np.zeros_like(sq)
    for dy, dx in _DIRECT:
        ctx += w.direct * np.roll(sq, (dy, dx), axis=(0, 1))
    for dy, dx in _DIAGONAL:
        ctx += w.diagonal * np.roll(sq, (dy, dx), axis=(0, 1))
    if nb.parent is not None:
        pj, pk = nb.parent
        ctx += w.parent * dec.highs[pj][pk] ** 2
    for cj, ck in nb.cousins:
        ctx += w.cousin * dec.highs[cj][ck] ** 2
    return ctx


def compute_threshold(dec: NsstDecomposition, j: int, k: int, w: ContextWeights) -> float:
    nb = neighbor_index(j, k, dec.spec)
    e = subband_mean_energy(dec.highs[j][k])
    t = 4 * w.direct * e + 4 * w.diagonal * e
    if nb.parent is not None:
        t += w.parent * subband_mean_energy(dec.highs[nb.parent[0]][nb.parent[1]])
    t += w.cousin * sum(subband_mean_energy(dec.highs[cj][ck]) for cj, ck in nb.cousins)
    return float(t)


def soft_context(raw, t: float, sigma: float) -> np.ndarray:
    """Map raw context to [0, 1] with value 1/2 exactly at ``raw == t``.

    With ``sigma == 0`` the map degenerates to a step: 0 below ``t``, 1
    above.
    """
    if sigma < 0:
        raise InvalidParameterError(f"sigma must be >= 0, got {sigma}")
    raw = np.asarray(raw, dtype=np.float64)
    diff = raw - t
    if sigma == 0:
        tail = np.zeros_like(raw)
    else:
        with np.errstate(over="ignore"):
            tail = 0.5 * np.exp(-0.5 * (diff / sigma) ** 2)
    return np.where(diff < 0, tail, np.where(diff > 0, 1.0 - tail, 0.5))


def context_field(dec: NsstDecomposition, j: int, k: int, w: ContextWeights | None = None) -> ContextField:
    w = w or ContextWeights()
    raw = compute_context(dec, j, k, w)
    t = compute_threshold(dec, j, k, w)
    sigma = float(np.std(raw))
    return ContextField(raw=raw, v=soft_context(raw, t, sigma), t=t, sigma=sigma)
