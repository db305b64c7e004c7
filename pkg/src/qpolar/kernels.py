"""Vectorized encoding and likelihood kernels shared by the survey and the decoder.

Branch index convention: sign i (1-based, minus=0, plus=1) sits at bit 2^(i-1).
Codeword position t of a length-N block splits as a butterfly: the first half
carries ``low * high`` and the second half carries ``high``, where ``low`` and
``high`` encode the messages with first sign minus and plus respectively.
"""
from __future__ import annotations

import os

import numpy as np


def encode(u: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Encode messages ``u[..., branch]`` into codewords ``x[..., position]``."""
    n_len = u.shape[-1]
    if n_len == 1:
        return u.copy()
    lo = encode(u[..., 0::2], table)
    hi = encode(u[..., 1::2], table)
    return np.concatenate([table[lo, hi], hi], axis=-1)


def minus_combine(w1: np.ndarray, w2: np.ndarray, table: np.ndarray) -> np.ndarray:
    """out[..., a] = sum_b w1[..., a*b] w2[..., b]."""
    q = table.shape[0]
    out = w1[..., table[:, 0]] * w2[..., 0:1]
    for b in range(1, q):
        out += w1[..., table[:, b]] * w2[..., b:b + 1]
    return out


def plus_combine(w1: np.ndarray, w2: np.ndarray, low: np.ndarray, table: np.ndarray) -> np.ndarray:
    """out[..., b] = w1[..., low*b] w2[..., b]."""
    return np.take_along_axis(w1, table[low], axis=-1) * w2


def normalize(w: np.ndarray) -> np.ndarray:
    s = w.sum(axis=-1, keepdims=True)
    s[s == 0] = 1.0
    return w / s


TIE_RTOL = 1e-9


def decide(mass: np.ndarray) -> np.ndarray:
    """Index of the largest entry along the last axis; near-ties (relative ``TIE_RTOL``) go to the lowest index."""
    top = mass.max(axis=-1, keepdims=True)
    return np.argmax(mass >= top * (1 - TIE_RTOL), axis=-1)


def _minus_q(w1, w2, table, out):
    """Input-first layout: out[a] = sum_b w1[a*b] w2[b]."""
    q = table.shape[0]
    tmp = np.empty(w1.shape[1:])
    for a in range(q):
        np.multiply(w1[table[a, 0]], w2[0], out=out[a])
        for b in range(1, q):
            np.multiply(w1[table[a, b]], w2[b], out=tmp)
            out[a] += tmp
    out /= out.sum(axis=0)


def _plus_q(w1, w2, low, table, out):
    """Input-first layout: out[b] = w1[low*b] w2[b]."""
    for b in range(table.shape[0]):
        np.choose(table[low, b], w1, out=out[b])
        out[b] *= w2[b]
    out /= out.sum(axis=0)


def genie_all_branches(w: np.ndarray, x: np.ndarray, table: np.ndarray, rdiv: np.ndarray, targets=None):
    """Posteriors of synthetic inputs given the output and all earlier true inputs.

    ``w[b, t, :]`` are the channel likelihoods at position t and ``x[b, t]`` the
    transmitted symbols. Returns ``(post, u)`` with shapes (B, K, Q) and (B, K)
    for the branch indices ``targets`` (all 2^n branches, in index order, when
    omitted). Only the prefixes of the targets are expanded.
    """
    bsz, n_len, q = w.shape
    n = n_len.bit_length() - 1
    if targets is None:
        targets = np.arange(n_len)
    targets = np.asarray(targets)
    cur = np.ascontiguousarray(np.transpose(w, (2, 0, 1)))[:, :, None, :]
    xs = x[:, None, :]
    ids = np.zeros(1, dtype=np.int64)
    for level in range(n):
        h = cur.shape[-1] // 2
        bit = 1 << level
        child = np.concatenate([ids, ids + bit])
        prefixes = np.unique(targets & ((bit << 1) - 1))
        keep = np.isin(child, prefixes)
        k = len(ids)
        km, kp = keep[:k], keep[k:]
        w1, w2 = cur[..., :h], cur[..., h:]
        x1, x2 = xs[..., :h], xs[..., h:]
        low = rdiv[x1, x2]
        nm, npl = int(km.sum()), int(kp.sum())
        nxt = np.empty((q, bsz, nm + npl, h))
        if nm:
            _minus_q(w1[:, :, km], w2[:, :, km], table, nxt[:, :, :nm])
        if npl:
            _plus_q(w1[:, :, kp], w2[:, :, kp], low[:, kp], table, nxt[:, :, nm:])
        xs = np.concatenate([low[:, km], x2[:, kp]], axis=1)
        ids = np.concatenate([ids[km], ids[kp] + bit])
        cur = nxt
    pos = np.searchsorted(ids, targets) if np.all(np.diff(ids) > 0) else None
    if pos is None:
        order = np.argsort(ids)
        pos = order[np.searchsorted(ids[order], targets)]
    post = np.transpose(cur[..., 0], (1, 2, 0))[:, pos]
    return post, xs[..., 0][:, pos]


def genie_path(w: np.ndarray, x: np.ndarray, table: np.ndarray, rdiv: np.ndarray, signs):
    """As :func:`genie_all_branches` but only along one sign sequence; returns (B, Q), (B,)."""
    for s in signs:
        h = w.shape[1] // 2
        w1, w2 = w[:, :h], w[:, h:]
        x1, x2 = x[:, :h], x[:, h:]
        low = rdiv[x1, x2]
        if s == 0:
            w, x = normalize(minus_combine(w1, w2, table)), low
        else:
            w, x = normalize(plus_combine(w1, w2, low, table)), x2
    return w[:, 0, :], x[:, 0]


def sample_outputs(prob: np.ndarray, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw channel outputs for input symbols ``x`` from the rows of ``prob``."""
    cdf = np.cumsum(prob, axis=1)
    cdf[:, -1] = 1.0
    r = rng.random(x.shape)
    return (r[..., None] >= cdf[x]).sum(axis=-1).clip(max=prob.shape[1] - 1)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("QPOLAR_THREADS", "1")))
    except ValueError:
        return 1
