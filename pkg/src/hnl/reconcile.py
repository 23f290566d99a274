"""Coordination of multi-resolution forecast bundles over a temporal hierarchy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .laplace import BandPartition
from .metrics import block_downsample

__all__ = [
    "AggregationMatrix",
    "build_aggregation",
    "bu_reconcile",
    "opt_reconcile",
]


@dataclass(frozen=True)
class AggregationMatrix:
    """Stacked block-mean map from the finest level to every level.

    Rows are ordered coarsest level first; the last ``lengths[-1]`` rows form
    the identity.
    """

    resolutions: tuple[float, ...]
    lengths: tuple[int, ...]
    S: np.ndarray

    @property
    def n_base(self) -> int:
        return self.lengths[-1]

    def level_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.lengths)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def weights(self, weighting: str) -> np.ndarray:
        """Diagonal of the error covariance ``W``."""
        if weighting == "identity":
            return np.ones(self.S.shape[0])
        if weighting == "structural":
            # variance proportional to the number of base entries averaged
            return np.concatenate([np.full(n, self.n_base / n) for n in self.lengths])
        raise ValueError(f"unknown weighting {weighting!r} (use 'identity' or 'structural')")


def build_aggregation(ladder, horizon: float = 24.0) -> AggregationMatrix:
    """Aggregation matrix for a resolution ladder (samples per hour) or a partition.

    Each level has ``horizon * resolution`` entries, and every level length
    must divide the finest one.
    """
    if isinstance(ladder, BandPartition):
        horizon, res = ladder.horizon, ladder.resolutions
    else:
        res = tuple(float(r) for r in ladder)
    if not res or any(b <= a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be non-empty and strictly ascending, got {res}")
    lengths = []
    for r in res:
        n = horizon * r
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError(f"horizon {horizon} at {r}/h is not a whole number of samples")
        lengths.append(int(round(n)))
    n_base = lengths[-1]
    blocks = []
    for n in lengths:
        if n_base % n:
            raise ValueError(f"level of length {n} does not divide the base length {n_base}")
        ratio = n_base // n
        blocks.append(np.kron(np.eye(n), np.full((1, ratio), 1.0 / ratio)))
    return AggregationMatrix(tuple(res), tuple(lengths), np.vstack(blocks))


def _levels(bundle):
    values = bundle if isinstance(bundle, dict) else bundle.values
    return {float(r): np.asarray(v, dtype=float) for r, v in values.items()}


def _wrap(bundle, values, strategy):
    if isinstance(bundle, dict):
        return values
    return bundle.with_values(values, coordination=strategy)


def bu_reconcile(bundle, base_resolution: float | None = None):
    """Replace every coarser level by block means of the finest one.

    ``base_resolution`` names the level that must serve as the base; by
    default the finest level present is used.
    """
    levels = _levels(bundle)
    if not levels:
        raise ValueError("empty bundle")
    top = max(levels)
    if base_resolution is not None and float(base_resolution) != top:
        raise ValueError(f"bundle has no base forecast at {base_resolution}/h (finest level is {top}/h)")
    base = levels[top]
    out = {r: base.copy() if r == top else block_downsample(base, top, r) for r in sorted(levels)}
    return _wrap(bundle, out, "bu")


def opt_reconcile(bundle, weighting: str = "identity", horizon: float | None = None):
    """Generalised least-squares projection onto the coherent subspace.

    ``y~ = S (S' W^-1 S)^-1 S' W^-1 y^`` with ``W`` diagonal; works row-wise
    on batched levels.
    """
    levels = _levels(bundle)
    if not levels:
        raise ValueError("empty bundle")
    res = sorted(levels)
    top = res[-1]
    if horizon is None:
        horizon = levels[top].shape[-1] / top
    agg = build_aggregation(res, horizon)
    for r, n in zip(res, agg.lengths):
        if levels[r].shape[-1] != n:
            raise ValueError(f"level {r}/h has {levels[r].shape[-1]} entries, expected {n}")
    stacked = np.concatenate([np.atleast_2d(levels[r]) for r in res], axis=-1)
    winv = 1.0 / agg.weights(weighting)
    S = agg.S
    normal = S.T @ (winv[:, None] * S)
    try:
        factor = cho_factor(normal)
    except LinAlgError as exc:
        raise np.linalg.LinAlgError("reconciliation normal matrix is singular") from exc
    base = cho_solve(factor, ((stacked * winv) @ S).T).T
    coherent = base @ S.T
    out = {}
    for r, sl in zip(res, agg.level_slices()):
        v = coherent[:, sl]
        out[r] = v[0] if np.ndim(levels[r]) == 1 else v
    return _wrap(bundle, out, f"opt-{weighting}")
