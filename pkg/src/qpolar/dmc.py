"""Finite discrete memoryless channels under uniform input."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .algebra import BalancedPartition, StablePartition
from .errors import PartitionMismatch, ValidationError

ROW_TOL = 1e-9
DEFAULT_TOL = 1e-9
MIN_OUTPUT_MASS = 1e-15
# irrational offset keeps grid cell boundaries away from "nice" posterior values
_GRID_OFFSET = 0.31830988618379067


class Dmc:
    """Row-stochastic transition table ``prob[x, y]``."""

    __slots__ = ("prob", "labels")

    def __init__(self, prob, labels=None, validate: bool = True):
        p = np.array(prob, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] == 0:
            raise ValidationError(f"transition table must be 2-D with at least one input, got shape {p.shape}")
        if validate:
            if np.any(~np.isfinite(p)) or p.min(initial=0.0) < 0 or p.max(initial=0.0) > 1 + ROW_TOL:
                raise ValidationError("transition probabilities must lie in [0, 1]")
            bad = np.abs(p.sum(axis=1) - 1.0) > ROW_TOL
            if np.any(bad):
                raise ValidationError(f"row {int(np.argmax(bad))} does not sum to 1")
        p.setflags(write=False)
        self.prob = p
        self.labels = labels

    @property
    def input_size(self) -> int:
        return self.prob.shape[0]

    @property
    def output_size(self) -> int:
        return self.prob.shape[1]

    def __repr__(self):
        return f"Dmc({self.input_size}x{self.output_size})"


@dataclass(frozen=True)
class ChannelStats:
    mutual_info: float
    bhattacharyya: float
    ml_error_prob: float


def bec(eps: float) -> Dmc:
    """Binary erasure channel; outputs are 0, 1, erasure."""
    return Dmc([[1 - eps, 0.0, eps], [0.0, 1 - eps, eps]])


def bsc(p: float) -> Dmc:
    return Dmc([[1 - p, p], [p, 1 - p]])


def identity_channel(n: int) -> Dmc:
    return Dmc(np.eye(n))


def useless_channel(n: int) -> Dmc:
    return Dmc(np.ones((n, 1)))


def mutual_information(p: Dmc) -> float:
    """I(X;Y) in bits with X uniform."""
    w = p.prob
    py = w.mean(axis=0)
    mask = w > 0
    ratio = np.where(mask, w, 1.0) / np.where(py > 0, py, 1.0)[None, :]
    return float(np.sum(np.where(mask, w * np.log2(ratio), 0.0)) / w.shape[0])


def bhattacharyya(p: Dmc) -> float:
    x = p.input_size
    if x == 1:
        return 0.0
    s = np.sqrt(p.prob)
    g = s @ s.T
    total = g.sum() - np.trace(g)
    return float(min(max(total / (x * (x - 1)), 0.0), 1.0))


def ml_decode(p: Dmc, y: int) -> int:
    return int(np.argmax(p.prob[:, y]))


def ml_error_probability(p: Dmc) -> float:
    return float(max(0.0, 1.0 - p.prob.max(axis=0).sum() / p.input_size))


def channel_stats(p: Dmc) -> ChannelStats:
    return ChannelStats(mutual_information(p), bhattacharyya(p), ml_error_probability(p))


def _partition(h) -> BalancedPartition:
    return h.partition if isinstance(h, StablePartition) else h


def project_channel(p: Dmc, h) -> Dmc:
    """Channel from the blocks of ``h`` to outputs, averaging rows over each block."""
    h = _partition(h)
    if h.size != p.input_size:
        raise PartitionMismatch(f"partition over {h.size} elements, channel has {p.input_size} inputs")
    w = np.zeros((h.block_count, p.output_size))
    np.add.at(w, h.block_of, p.prob)
    return Dmc(w / h.block_size, p.labels, validate=False)


def posteriors(p: Dmc):
    """(output probabilities, posterior matrix [y, x]) under uniform input."""
    py = p.prob.mean(axis=0)
    safe = np.where(py > 0, py, 1.0)
    post = (p.prob / p.input_size / safe[None, :]).T
    return py, post


def merge_outputs(prob: np.ndarray, keys: np.ndarray):
    """Sum the columns of ``prob`` sharing a key row; returns (merged, inverse index)."""
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    # number merged outputs by first appearance so canonical channels are left as they are
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    inv = rank[inv]
    k = len(first)
    out = np.zeros((prob.shape[0], k))
    # accumulate per input row to keep memory small
    for x in range(prob.shape[0]):
        out[x] = np.bincount(inv, weights=prob[x], minlength=k)
    return out, inv


def canonicalize(p: Dmc, tol: float = DEFAULT_TOL, keep_labels: bool = False) -> Dmc:
    """Drop negligible outputs and merge outputs with matching posteriors.

    Posteriors are bucketed on a grid of width ``tol`` (exact equality when
    ``tol == 0``), so merged outputs agree within ``tol`` in max-norm.
    """
    py, post = posteriors(p)
    keep = py >= MIN_OUTPUT_MASS
    w = p.prob[:, keep]
    post = post[keep]
    if w.shape[1] == 0:
        raise ValidationError("channel has no output with positive probability")
    if tol > 0:
        keys = np.floor(post / tol + _GRID_OFFSET).astype(np.int64)
    else:
        keys = post
    merged, inv = merge_outputs(w, keys)
    merged /= merged.sum(axis=1, keepdims=True)
    labels = None
    if keep_labels and p.labels is not None:
        kept = [lab for lab, k in zip(p.labels, keep) if k]
        groups = [[] for _ in range(merged.shape[1])]
        for lab, j in zip(kept, inv):
            groups[j].append(lab)
        labels = [tuple(g) for g in groups]
    return Dmc(merged, labels, validate=False)


def posterior_partition_score(p: Dmc, h, delta: float) -> float:
    """Output mass whose posterior is within ``delta`` of a block-uniform distribution."""
    h = _partition(h)
    if h.size != p.input_size:
        raise PartitionMismatch(f"partition over {h.size} elements, channel has {p.input_size} inputs")
    py, post = posteriors(p)
    ind = np.zeros((h.block_count, h.size))
    ind[h.block_of, np.arange(h.size)] = 1.0 / h.block_size
    dist = np.abs(post[:, None, :] - ind[None, :, :]).max(axis=2).min(axis=1)
    return float(py[dist < delta].sum())


def channels_equivalent(p: Dmc, q: Dmc, tol: float = DEFAULT_TOL) -> bool:
    """True when both channels induce the same output measure on posteriors.

    Posterior points of both channels are clustered (single linkage, max-norm
    radius ``tol``); each cluster must carry equal mass in both channels.
    """
    if p.input_size != q.input_size:
        return False
    a, b = canonicalize(p, tol), canonicalize(q, tol)
    pa, qa = posteriors(a)
    pb, qb = posteriors(b)
    pts = np.vstack([qa, qb])
    tree = cKDTree(pts)
    pairs = tree.query_pairs(r=tol + 1e-15, p=np.inf, output_type="ndarray")
    n = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    k, comp = connected_components(graph, directed=False)
    ma = np.bincount(comp[: len(pa)], weights=pa, minlength=k)
    mb = np.bincount(comp[len(pa):], weights=pb, minlength=k)
    return bool(np.all(np.abs(ma - mb) <= tol))
