"""Linear algebra over prime fields F_p with integer numpy arrays."""
from __future__ import annotations

import itertools

import numpy as np

from .errors import SingularSolve


def _inv(a: int, p: int) -> int:
    return pow(int(a), -1, p)


def rref(mat, p: int):
    """Reduced row echelon form mod p with zero rows removed; returns (R, pivot_columns)."""
    m = np.array(mat, dtype=np.int64) % p
    if m.ndim == 1:
        m = m[None, :]
    rows, cols = m.shape
    r = 0
    pivots = []
    for c in range(cols):
        if r == rows:
            break
        nz = np.flatnonzero(m[r:, c])
        if len(nz) == 0:
            continue
        k = r + nz[0]
        if k != r:
            m[[r, k]] = m[[k, r]]
        m[r] = (m[r] * _inv(m[r, c], p)) % p
        others = m[:, c].copy()
        others[r] = 0
        m = (m - others[:, None] * m[r][None, :]) % p
        pivots.append(c)
        r += 1
    return m[:r], tuple(pivots)


def rank(mat, p: int) -> int:
    m = np.asarray(mat)
    if m.size == 0:
        return 0
    return len(rref(m, p)[1])


def nullspace(mat, p: int) -> np.ndarray:
    """Basis (as rows) of {x : mat @ x = 0 mod p}."""
    m = np.asarray(mat, dtype=np.int64)
    cols = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(cols, dtype=np.int64)
    r, piv = rref(m, p)
    free = [c for c in range(cols) if c not in piv]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.int64)
        v[f] = 1
        for i, c in enumerate(piv):
            v[c] = (-r[i, f]) % p
        basis.append(v)
    if not basis:
        return np.zeros((0, cols), dtype=np.int64)
    return np.array(basis)


def solve(a, b, p: int) -> np.ndarray:
    """Solve the square system a @ x = b mod p."""
    a = np.asarray(a, dtype=np.int64) % p
    b = np.asarray(b, dtype=np.int64) % p
    n = a.shape[0]
    aug = np.concatenate([a, b.reshape(n, -1)], axis=1)
    r, piv = rref(aug, p)
    if len(piv) < n or piv[n - 1] != n - 1:
        raise SingularSolve("coefficient matrix is singular mod %d" % p)
    x = r[:n, n:]
    return x.reshape(b.shape)


def enumerate_subspaces(p: int, m: int, dim=None):
    """Yield every subspace of F_p^m as its canonical RREF basis, ordered by dimension."""
    dims = range(m + 1) if dim is None else [dim]
    for d in dims:
        if d == 0:
            yield np.zeros((0, m), dtype=np.int64)
            continue
        for piv in itertools.combinations(range(m), d):
            # free slots: entries to the right of each pivot that are not pivot columns
            slots = [(i, c) for i in range(d) for c in range(piv[i] + 1, m) if c not in piv]
            for vals in itertools.product(range(p), repeat=len(slots)):
                b = np.zeros((d, m), dtype=np.int64)
                for i, c in enumerate(piv):
                    b[i, c] = 1
                for (i, c), v in zip(slots, vals):
                    b[i, c] = v
                yield b


def span_elements(basis, p: int, m: int) -> np.ndarray:
    """All vectors of the row space, as an (p^d, m) array."""
    b = np.asarray(basis, dtype=np.int64).reshape(-1, m)
    d = b.shape[0]
    if d == 0:
        return np.zeros((1, m), dtype=np.int64)
    coeffs = np.array(list(itertools.product(range(p), repeat=d)), dtype=np.int64)
    return (coeffs @ b) % p
