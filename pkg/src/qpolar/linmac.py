"""MACs that are mixtures of linear channels over F_q^m.

Mutual information here is measured in base-q units. The binary two-user
machinery tracks the weights of the five subspaces of F_2^2, ordered as
{0}, span(10), span(01), span(11), F_2^2.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import gf
from .errors import AlphabetTooLarge, AmbientMismatch, LatticeTooLarge, ValidationError

CLOSURE_BOUND = 4096
MAX_DMC_INPUTS = 4096


class Subspace:
    """Row space of a basis over F_q, stored in reduced row echelon form."""

    __slots__ = ("q", "m", "basis", "_key")

    def __init__(self, q: int, m: int, basis=None):
        self.q = int(q)
        self.m = int(m)
        if basis is None or np.size(basis) == 0:
            b = np.zeros((0, m), dtype=np.int64)
        else:
            b = np.asarray(basis, dtype=np.int64).reshape(-1, m)
            b = gf.rref(b, q)[0]
        b.setflags(write=False)
        self.basis = b
        self._key = (self.q, self.m, b.tobytes())

    @classmethod
    def full(cls, q, m):
        return cls(q, m, np.eye(m, dtype=np.int64))

    @classmethod
    def zero(cls, q, m):
        return cls(q, m)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def elements(self) -> np.ndarray:
        return gf.span_elements(self.basis, self.q, self.m)

    def __eq__(self, other):
        return isinstance(other, Subspace) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        rows = ",".join("".join(map(str, r)) for r in self.basis)
        return f"Subspace(q={self.q}, [{rows}])"


def _same_ambient(a: Subspace, b: Subspace):
    if a.q != b.q or a.m != b.m:
        raise AmbientMismatch(f"F_{a.q}^{a.m} vs F_{b.q}^{b.m}")


def _perp(v: Subspace) -> Subspace:
    if v.dim == 0:
        return Subspace.full(v.q, v.m)
    return Subspace(v.q, v.m, gf.nullspace(v.basis, v.q))


def subspace_sum(a: Subspace, b: Subspace) -> Subspace:
    _same_ambient(a, b)
    return Subspace(a.q, a.m, np.vstack([a.basis, b.basis]))


def intersect(a: Subspace, b: Subspace) -> Subspace:
    """(a^perp + b^perp)^perp."""
    _same_ambient(a, b)
    return _perp(subspace_sum(_perp(a), _perp(b)))


def proj(v: Subspace, s: Sequence[int]) -> Subspace:
    """Image under the coordinate projection onto ``s`` (0-based user indices)."""
    s = sorted(set(s))
    if any(i < 0 or i >= v.m for i in s):
        raise AmbientMismatch(f"coordinates {s} outside F_{v.q}^{v.m}")
    return Subspace(v.q, len(s), v.basis[:, s] if v.dim else None)


# ---------------------------------------------------------------- mixtures


@dataclass(frozen=True)
class LinearMixture:
    q: int
    m: int
    components: tuple  # ((weight, Subspace), ...) with distinct subspaces

    @classmethod
    def build(cls, q: int, m: int, components: Iterable) -> "LinearMixture":
        acc: dict = {}
        order = []
        for w, v in components:
            if not isinstance(v, Subspace):
                v = Subspace(q, m, v)
            if v.q != q or v.m != m:
                raise AmbientMismatch("component outside the mixture's ambient space")
            if w < 0:
                raise ValidationError("weights must be nonnegative")
            if w == 0:
                continue
            if v not in acc:
                order.append(v)
                acc[v] = 0.0
            acc[v] += float(w)
        total = sum(acc.values())
        if abs(total - 1.0) > 1e-12 * max(1, len(acc)) and abs(total - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {total}, expected 1")
        return cls(q, m, tuple((acc[v], v) for v in order))

    def weight_of(self, v: Subspace) -> float:
        for w, u in self.components:
            if u == v:
                return w
        return 0.0

    @property
    def subspaces(self) -> list:
        return [v for _, v in self.components]


def lin_rate_region(ch: LinearMixture, s: Sequence[int]) -> float:
    """I[S] in base-q units: sum_k p_k dim proj_S(V_k)."""
    return float(sum(w * proj(v, s).dim for w, v in ch.components))


def _pair_combine(ch: LinearMixture, op) -> LinearMixture:
    comps = [(w1 * w2, op(v1, v2)) for w1, v1 in ch.components for w2, v2 in ch.components]
    return LinearMixture.build(ch.q, ch.m, comps)


def lin_minus(ch: LinearMixture) -> LinearMixture:
    return _pair_combine(ch, intersect)


def lin_plus(ch: LinearMixture) -> LinearMixture:
    return _pair_combine(ch, subspace_sum)


def closure(subspaces: Iterable[Subspace], bound: int = CLOSURE_BOUND) -> list:
    """Least family containing ``subspaces`` and closed under intersection and sum."""
    found = []
    seen = set()
    for v in subspaces:
        if v not in seen:
            seen.add(v)
            found.append(v)
    if not found:
        raise ValidationError("closure of an empty family")
    frontier = list(found)
    while frontier:
        new = []
        for a in frontier:
            for b in list(found):
                for c in (intersect(a, b), subspace_sum(a, b)):
                    if c not in seen:
                        seen.add(c)
                        new.append(c)
                        if len(seen) > bound:
                            raise LatticeTooLarge(f"closure exceeds {bound} subspaces")
        found.extend(new)
        frontier = new
    found.sort(key=lambda v: (v.dim, v.basis.tolist()))
    return found


def is_consistent(subspaces: Iterable[Subspace], s: Sequence[int], bound: int = CLOSURE_BOUND):
    """(True, None) if projection onto ``s`` commutes with intersection over the closure,
    else (False, (V1, V2)) for the first violating pair."""
    cl = closure(subspaces, bound)
    projs = [proj(v, s) for v in cl]
    for i, a in enumerate(cl):
        for j in range(i, len(cl)):
            b = cl[j]
            if proj(intersect(a, b), s) != intersect(projs[i], projs[j]):
                return False, (a, b)
    return True, None


def sufficient_preservation(subspaces: Iterable[Subspace], s: Sequence[int]) -> Optional[Subspace]:
    """A |S|-dimensional V_S projecting onto F_q^S with proj_S(V_S & V) = proj_S(V) for all V, if any."""
    vs = list(subspaces)
    if not vs:
        return None
    q, m = vs[0].q, vs[0].m
    s = sorted(set(s))
    full_s = Subspace.full(q, len(s))
    targets = [proj(v, s) for v in vs]
    for basis in gf.enumerate_subspaces(q, m, len(s)):
        cand = Subspace(q, m, basis)
        if proj(cand, s) != full_s:
            continue
        if all(proj(intersect(cand, v), s) == t for v, t in zip(vs, targets)):
            return cand
    return None


def to_dmc(ch: LinearMixture):
    """Explicit MAC whose output is the component index together with A_k^T x."""
    from .macpolar import MacChannel

    q, m = ch.q, ch.m
    nx = q ** m
    if nx > MAX_DMC_INPUTS:
        raise AlphabetTooLarge(f"q^m = {nx} inputs exceeds {MAX_DMC_INPUTS}")
    xs = np.array(list(itertools.product(range(q), repeat=m)), dtype=np.int64).reshape(nx, m)
    cols = []
    labels = []
    for k, (w, v) in enumerate(ch.components):
        d = v.dim
        vals = (xs @ v.basis.T) % q if d else np.zeros((nx, 0), dtype=np.int64)
        code = vals @ (q ** np.arange(d - 1, -1, -1)) if d else np.zeros(nx, dtype=np.int64)
        block = np.zeros((nx, q ** d))
        block[np.arange(nx), code] = w
        cols.append(block)
        labels.extend((k, j) for j in range(q ** d))
    return MacChannel([q] * m, np.hstack(cols), labels)


# ---------------------------------------------------------------- binary two-user case


def binary_subspaces() -> list:
    """The five subspaces of F_2^2 in the fixed order used by :class:`BinaryState`."""
    return [Subspace(2, 2), Subspace(2, 2, [[1, 0]]), Subspace(2, 2, [[0, 1]]), Subspace(2, 2, [[1, 1]]),
            Subspace.full(2, 2)]


def state_from_mixture(ch: LinearMixture) -> np.ndarray:
    if ch.q != 2 or ch.m != 2:
        raise AmbientMismatch("binary states need q = 2 and m = 2")
    return np.array([ch.weight_of(v) for v in binary_subspaces()])


def mixture_from_state(p) -> LinearMixture:
    return LinearMixture.build(2, 2, zip(np.asarray(p, dtype=float), binary_subspaces()))


def _check_state(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 5 or np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1) > 1e-12):
        raise ValidationError("state must be a nonnegative 5-vector summing to 1")
    return p


def binary_step(p, sign: int) -> np.ndarray:
    """One transform of the weight vector (vectorized over leading axes); sign 0 = minus, 1 = plus."""
    p = np.asarray(p, dtype=np.float64)
    p0, p1, p2, p3, p4 = (p[..., k] for k in range(5))
    cross = 2 * (p1 * p2 + p2 * p3 + p1 * p3)
    if sign == 0:
        out = [p0 * p0 + 2 * p0 * (p1 + p2 + p3 + p4) + cross,
               p1 * p1 + 2 * p1 * p4, p2 * p2 + 2 * p2 * p4, p3 * p3 + 2 * p3 * p4, p4 * p4]
    else:
        out = [p0 * p0, p1 * p1 + 2 * p1 * p0, p2 * p2 + 2 * p2 * p0, p3 * p3 + 2 * p3 * p0,
               p4 * p4 + 2 * p4 * (p0 + p1 + p2 + p3) + cross]
    return np.stack(out, axis=-1)


def binary_log_step(lp: np.ndarray, sign: int) -> np.ndarray:
    """:func:`binary_step` on natural-log weights; keeps tiny weights resolvable."""
    l0, l1, l2, l3, l4 = (lp[..., k] for k in range(5))
    ln2 = np.log(2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if sign == 0:
            a = [l1 + np.logaddexp(l1, ln2 + l4), l2 + np.logaddexp(l2, ln2 + l4),
                 l3 + np.logaddexp(l3, ln2 + l4), 2 * l4]
            rest = np.logaddexp.reduce(np.stack([l1, l2, l3, l4]), axis=0)
            z = np.logaddexp.reduce(np.stack([2 * l0, ln2 + l0 + rest, ln2 + l1 + l2, ln2 + l2 + l3,
                                              ln2 + l1 + l3]), axis=0)
            out = [z] + a
        else:
            a = [l1 + np.logaddexp(l1, ln2 + l0), l2 + np.logaddexp(l2, ln2 + l0),
                 l3 + np.logaddexp(l3, ln2 + l0)]
            rest = np.logaddexp.reduce(np.stack([l0, l1, l2, l3]), axis=0)
            z = np.logaddexp.reduce(np.stack([2 * l4, ln2 + l4 + rest, ln2 + l1 + l2, ln2 + l2 + l3,
                                              ln2 + l1 + l3]), axis=0)
            out = [2 * l0] + a + [z]
    return np.stack(out, axis=-1)


def binary_branch_states(p, n: int, log: bool = True) -> np.ndarray:
    """States of all 2^n branches, indexed by branch index (log weights when ``log``)."""
    p = _check_state(p)
    with np.errstate(divide="ignore"):
        cur = np.log(p)[None, :] if log else p[None, :]
    step = binary_log_step if log else binary_step
    for _ in range(n):
        cur = np.concatenate([step(cur, 0), step(cur, 1)], axis=0)
    return cur


@dataclass
class Evolution:
    """Averaged weight vectors p^(0..n) plus merging diagnostics."""

    trajectory: np.ndarray  # (n+1, 5)
    live_states: list
    resolution: list
    exact: bool

    @property
    def info(self) -> np.ndarray:
        t = self.trajectory
        return np.stack([t[:, 1] + t[:, 3] + t[:, 4], t[:, 2] + t[:, 3] + t[:, 4],
                         t[:, 1] + t[:, 2] + t[:, 3] + 2 * t[:, 4]], axis=1)


VERTEX_SNAP = 1e-15
BASE_RESOLUTION = 1e12
STATE_BUDGET = 4096


# odd multipliers for mixing integer key rows into one 64-bit sort key
_MIX = np.array([0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9, 0xD6E8FEB86659FD93,
                 0xFF51AFD7ED558CCD, 0xC4CEB9FE1A85EC53], dtype=np.uint64)


def _group(keys: np.ndarray):
    """Group ids for equal rows of an integer key matrix.

    Rows are sorted by a mixed 64-bit key and split wherever neighbours differ,
    so a hash collision can only split a group, never join distinct rows.
    """
    with np.errstate(over="ignore"):
        h = (keys.astype(np.uint64) * _MIX[:keys.shape[1]]).sum(axis=1)
    order = np.argsort(h)
    sk = keys[order]
    start = np.ones(len(sk), dtype=bool)
    start[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    inv = np.empty(len(sk), dtype=np.int64)
    inv[order] = np.cumsum(start) - 1
    return inv, int(start.sum())


def _cells(logs: np.ndarray, owner: np.ndarray, res: np.ndarray):
    """Group ids of rows sharing an owner and a log-grid cell, plus the owner of each group."""
    keys = np.empty((len(logs), 6), dtype=np.int64)
    keys[:, 0] = owner
    keys[:, 1:] = np.floor(logs * res[owner][:, None])
    inv, k = _group(keys)
    group_owner = np.empty(k, dtype=np.int64)
    group_owner[inv] = owner
    return inv, k, group_owner


def _merge_cells(logs: np.ndarray, owner: np.ndarray, res: np.ndarray, budget: int, m: int):
    """Group rows per owner, coarsening (in place) the grid of owners that exceed ``budget`` groups."""
    inv = np.empty(len(logs), dtype=np.int64)
    group_owner = []
    todo = np.arange(len(logs))
    k_total = 0
    while len(todo):
        sub_inv, k, g_own = _cells(logs[todo], owner[todo], res)
        over = (np.bincount(g_own, minlength=m) > budget) & (res > 1e-3)
        keep_group = ~over[g_own]
        keep_row = keep_group[sub_inv]
        new_id = np.cumsum(keep_group) - 1 + k_total
        inv[todo[keep_row]] = new_id[sub_inv[keep_row]]
        group_owner.append(g_own[keep_group])
        k_total += int(keep_group.sum())
        res[over] = np.minimum(res[over], 1e4) / 2
        todo = todo[~keep_row]
    return inv, k_total, np.concatenate(group_owner)


def binary_evolve_many(ps, n: int, budget: int = STATE_BUDGET, base_resolution: float = BASE_RESOLUTION):
    """:func:`binary_evolve` for a batch of starting states advanced together.

    Returns (trajectories (m, n+1, 5), live state counts (m, n+1), resolutions (m, n+1)).
    """
    ps = _check_state(np.atleast_2d(ps))
    m = len(ps)
    states = ps.copy()
    weights = np.ones(m)
    owner = np.arange(m)
    res = np.full(m, float(base_resolution))
    traj = np.zeros((m, n + 1, 5))
    traj[:, 0] = ps
    live = np.ones((m, n + 1), dtype=np.int64)
    res_used = np.full((m, n + 1), float(base_resolution))
    for level in range(1, n + 1):
        states = np.concatenate([binary_step(states, 0), binary_step(states, 1)])
        weights = np.concatenate([weights, weights]) / 2
        owner = np.concatenate([owner, owner])
        states /= states.sum(axis=1, keepdims=True)
        # states within VERTEX_SNAP of a vertex are treated as that vertex
        top = states.argmax(axis=1)
        snap = states[np.arange(len(states)), top] >= 1 - VERTEX_SNAP
        states[snap] = 0.0
        states[snap, top[snap]] = 1.0
        logs = np.log10(np.maximum(states, 1e-300))
        inv, k, group_owner = _merge_cells(logs, owner, res, budget, m)
        wsum = np.bincount(inv, weights=weights, minlength=k)
        merged = np.stack([np.bincount(inv, weights=weights * states[:, j], minlength=k) for j in range(5)], axis=1)
        states = merged / wsum[:, None]
        states /= states.sum(axis=1, keepdims=True)
        weights, owner = wsum, group_owner
        for j in range(5):
            traj[:, level, j] = np.bincount(owner, weights=weights * states[:, j], minlength=m)
        live[:, level] = np.bincount(owner, minlength=m)
        res_used[:, level] = res
    return traj, live, res_used


def binary_evolve(p, n: int, budget: int = STATE_BUDGET, base_resolution: float = BASE_RESOLUTION) -> Evolution:
    """Average of p^s over all sign sequences of each length 0..n.

    The branch tree is expanded level by level. States whose components agree
    on a logarithmic grid (``resolution`` cells per decade) are merged into
    their weighted centroid; the grid starts at ``base_resolution`` and is
    coarsened whenever more than ``budget`` states would survive. Centroid
    merging keeps every linear average exact, so I^(n) and the monotone
    trends are unaffected; only the nonlinear step sees the merge error.
    ``exact`` is False if any coarsening happened.
    """
    p = _check_state(p)
    traj, live, res = binary_evolve_many(p[None, :], n, budget, base_resolution)
    return Evolution(traj[0], live[0].tolist(), res[0].tolist(), bool(res[0, -1] == base_resolution))


@dataclass
class LossReport:
    n: int
    i1: float
    i2: float
    isum: float
    p3_trajectory: np.ndarray
    analytic_loss_flag: bool  # weight on span(11) does not exceed the larger of the other two lines
    numeric_loss_detected: bool  # positive p3 driven below LOSS_THRESHOLD by depth n
    converged: bool
    exact: bool


LOSS_THRESHOLD = 1e-6


def loss_report(p, n: int = 40) -> LossReport:
    p = _check_state(p)
    ev = binary_evolve(p, n)
    info = ev.info[-1]
    t = ev.trajectory
    conv = bool(n >= 1 and np.max(np.abs(t[-1] - t[-2])) < 1e-9)
    return LossReport(n, float(info[0]), float(info[1]), float(info[2]), t[:, 3].copy(),
                      bool(p[3] <= max(p[1], p[2])), bool(p[3] > LOSS_THRESHOLD and t[-1, 3] < LOSS_THRESHOLD),
                      conv, ev.exact)
