"""Polarization of multiple access channels with prime input alphabets.

Inputs of an m-user MAC are flattened in mixed radix (user 0 most
significant), so the flattened channel is an ordinary :class:`Dmc` over the
product group and the single-user transforms, survey and SC recursion apply
unchanged. Subsets of users are tuples of 0-based user indices.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import gf, kernels
from .algebra import BalancedPartition, Quasigroup, product_group
from .dmc import DEFAULT_TOL, Dmc, bhattacharyya, mutual_information
from .errors import (AlphabetTooLarge, LengthMismatch, MissingInfoSymbol, NotFullRank, ShapeMismatch,
                     UserCountTooLarge, ValidationError)
from .polarcode import sc_recursion
from .polarize import DEFAULT_DELTA, MAX_OUTPUTS, SignSequence, minus_transform, plus_transform, survey

MAX_USERS = 6
MAX_BLOCK_ALPHABET = 64


def _is_prime(q: int) -> bool:
    return q >= 2 and all(q % d for d in range(2, int(q ** 0.5) + 1))


class MacChannel:
    """``prob[x, y]`` with ``x`` the mixed-radix index of the input tuple."""

    __slots__ = ("users", "dmc")

    def __init__(self, users: Sequence[int], prob, labels=None, validate: bool = True):
        users = tuple(int(q) for q in users)
        for q in users:
            if not _is_prime(q):
                raise ValidationError(f"user alphabet {q} is not prime; split it into virtual users first")
        nx = int(np.prod(users)) if users else 1
        d = Dmc(prob, labels, validate)
        if d.input_size != nx:
            raise ShapeMismatch(f"{d.input_size} input rows for users {list(users)} (expected {nx})")
        self.users = users
        self.dmc = d

    @property
    def prob(self) -> np.ndarray:
        return self.dmc.prob

    @property
    def user_count(self) -> int:
        return len(self.users)

    @property
    def input_size(self) -> int:
        return self.dmc.input_size

    @property
    def output_size(self) -> int:
        return self.dmc.output_size

    @property
    def group(self) -> Quasigroup:
        return product_group(self.users)

    def __repr__(self):
        return f"MacChannel(users={list(self.users)}, outputs={self.output_size})"


def input_digits(users: Sequence[int]) -> np.ndarray:
    """(X, m) array of per-user symbols of every flattened input."""
    users = list(users)
    if not users:
        return np.zeros((1, 0), dtype=np.int64)
    return np.stack(np.unravel_index(np.arange(int(np.prod(users))), users), axis=1).astype(np.int64)


def split_users(sizes: Sequence[int]) -> list:
    """Replace each prime-power alphabet p^k by k virtual users over F_p.

    A symbol written in base p (most significant digit first) is exactly the
    mixed-radix index of its virtual users, so transition tables carry over
    unchanged.
    """
    out = []
    for q in sizes:
        q = int(q)
        p = next((d for d in range(2, q + 1) if q % d == 0), None)
        if p is None:
            raise ValidationError(f"alphabet size {q} is not a prime power")
        k, r = 0, q
        while r % p == 0:
            r //= p
            k += 1
        if r != 1:
            raise ValidationError(f"alphabet size {q} is not a prime power")
        out.extend([p] * k)
    return out


def mac_from_prime_powers(sizes: Sequence[int], prob, labels=None) -> MacChannel:
    return MacChannel(split_users(sizes), prob, labels)


def mac_minus(p: MacChannel, canonical: bool = True, tol: float = DEFAULT_TOL,
              max_outputs: Optional[int] = MAX_OUTPUTS) -> MacChannel:
    d = minus_transform(p.dmc, p.group, canonical=canonical, tol=tol, max_outputs=max_outputs)
    return MacChannel(p.users, d.prob, validate=False)


def mac_plus(p: MacChannel, canonical: bool = True, tol: float = DEFAULT_TOL,
             max_outputs: Optional[int] = MAX_OUTPUTS) -> MacChannel:
    d = plus_transform(p.dmc, p.group, canonical=canonical, tol=tol, max_outputs=max_outputs)
    return MacChannel(p.users, d.prob, validate=False)


def _cond_entropy(w: np.ndarray) -> float:
    """Mean entropy (bits) of the rows of ``w``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(w > 0, w * np.log2(np.where(w > 0, w, 1.0)), 0.0)
    return float(-t.sum(axis=1).mean())


def rate_region(p: MacChannel) -> dict:
    """I[S] = I(X_S; Y X_{S^c}) in bits for every nonempty subset S."""
    m = p.user_count
    if m > MAX_USERS:
        raise UserCountTooLarge(f"{m} users exceeds {MAX_USERS}")
    w = p.prob.reshape(tuple(p.users) + (p.output_size,))
    h_full = _cond_entropy(p.prob)
    out = {}
    for r in range(1, m + 1):
        for s in itertools.combinations(range(m), r):
            rest = w.mean(axis=s)
            out[s] = _cond_entropy(rest.reshape(-1, p.output_size)) - h_full
    return out


def sum_capacity(p: MacChannel) -> float:
    return mutual_information(p.dmc)


# ---------------------------------------------------------------- generalized matrices


def user_groups(users: Sequence[int]) -> list:
    """[(prime, [user indices])] with primes in order of first appearance."""
    groups: dict = {}
    for k, q in enumerate(users):
        groups.setdefault(int(q), []).append(k)
    return list(groups.items())


@dataclass(frozen=True)
class MatrixBlock:
    prime: int
    entries: np.ndarray  # rows x cols over F_prime

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def rank(self) -> int:
        return gf.rank(self.entries, self.prime) if self.cols else 0


@dataclass(frozen=True)
class GeneralizedMatrix:
    blocks: tuple

    @classmethod
    def from_column_spaces(cls, users: Sequence[int], bases) -> "GeneralizedMatrix":
        """One echelon basis (rows span the column space) per prime group."""
        blocks = []
        for (q, idx), b in zip(user_groups(users), bases):
            b = np.asarray(b, dtype=np.int64).reshape(-1, len(idx))
            blocks.append(MatrixBlock(q, b.T.copy()))
        return cls(tuple(blocks))

    @classmethod
    def identity(cls, users: Sequence[int]) -> "GeneralizedMatrix":
        return cls(tuple(MatrixBlock(q, np.eye(len(idx), dtype=np.int64)) for q, idx in user_groups(users)))

    @classmethod
    def empty(cls, users: Sequence[int]) -> "GeneralizedMatrix":
        return cls(tuple(MatrixBlock(q, np.zeros((len(idx), 0), dtype=np.int64)) for q, idx in user_groups(users)))

    @property
    def rank(self) -> int:
        return sum(b.rank for b in self.blocks)

    @property
    def full_rank(self) -> bool:
        return all(b.rank == b.cols for b in self.blocks)

    @property
    def lrank(self) -> float:
        return float(sum(b.rank * np.log2(b.prime) for b in self.blocks))

    @property
    def out_users(self) -> list:
        return [b.prime for b in self.blocks for _ in range(b.cols)]

    def signature(self) -> str:
        parts = []
        for b in self.blocks:
            cols = ",".join("".join(str(int(v)) for v in b.entries[:, j]) for j in range(b.cols))
            parts.append(f"F{b.prime}[{cols}]")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"blocks": [{"prime": b.prime, "columns": b.entries.T.tolist()} for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict, users: Sequence[int]) -> "GeneralizedMatrix":
        return cls.from_column_spaces(users, [np.asarray(b["columns"]) for b in d["blocks"]])

    def __eq__(self, other):
        return (isinstance(other, GeneralizedMatrix) and len(self.blocks) == len(other.blocks)
                and all(a.prime == b.prime and a.entries.shape == b.entries.shape
                        and np.array_equal(a.entries, b.entries) for a, b in zip(self.blocks, other.blocks)))

    def __hash__(self):
        return hash(tuple((b.prime, b.entries.shape, b.entries.tobytes()) for b in self.blocks))


def _check_shape(users: Sequence[int], a: GeneralizedMatrix):
    groups = user_groups(users)
    if len(groups) != len(a.blocks):
        raise ShapeMismatch(f"{len(a.blocks)} blocks for {len(groups)} prime groups")
    for (q, idx), b in zip(groups, a.blocks):
        if b.prime != q or b.rows != len(idx):
            raise ShapeMismatch(f"block over F{b.prime} with {b.rows} rows does not match F{q} with {len(idx)} users")
    if not a.full_rank:
        raise NotFullRank("generalized matrix is not full rank")


def coset_map(users: Sequence[int], a: GeneralizedMatrix) -> np.ndarray:
    """Flattened index of A^T x (block by block) for every flattened input x."""
    _check_shape(users, a)
    xd = input_digits(users)
    cols = []
    for (q, idx), b in zip(user_groups(users), a.blocks):
        if b.cols:
            cols.append((xd[:, idx] @ b.entries) % q)
    if not cols:
        return np.zeros(len(xd), dtype=np.int64)
    u = np.concatenate(cols, axis=1)
    return np.ravel_multi_index(tuple(u.T), a.out_users).astype(np.int64)


def project_mac(p: MacChannel, a: GeneralizedMatrix) -> MacChannel:
    """P[A](y|u) = (1/prod p_i^(m_i - l_i)) sum over A^T x = u of P(y|x)."""
    cm = coset_map(p.users, a)
    out_users = a.out_users
    nu = int(np.prod(out_users)) if out_users else 1
    w = np.zeros((nu, p.output_size))
    np.add.at(w, cm, p.prob)
    w /= p.input_size // nu
    return MacChannel(out_users, w, validate=False)


def coset_partition(users: Sequence[int], a: GeneralizedMatrix) -> BalancedPartition:
    return BalancedPartition(coset_map(users, a))


def candidate_matrices(users: Sequence[int]) -> list:
    """Every full-rank generalized matrix up to column operations, one per column-space tuple."""
    if len(users) > MAX_USERS:
        raise UserCountTooLarge(f"{len(users)} users exceeds {MAX_USERS}")
    per_block = []
    for q, idx in user_groups(users):
        if q ** len(idx) > MAX_BLOCK_ALPHABET:
            raise AlphabetTooLarge(f"F{q}^{len(idx)} exceeds {MAX_BLOCK_ALPHABET} symbols")
        per_block.append(list(gf.enumerate_subspaces(q, len(idx))))
    return [GeneralizedMatrix.from_column_spaces(users, combo) for combo in itertools.product(*per_block)]


# ---------------------------------------------------------------- survey


@dataclass
class MacBranchReport:
    signs: SignSequence
    sum_info: float
    matrix: Optional[GeneralizedMatrix]
    lrank: Optional[float]
    projected_info: Optional[float]
    z: Optional[float]
    info_stderr: float = 0.0

    @property
    def index(self) -> int:
        return self.signs.index

    @property
    def classified(self) -> bool:
        return self.matrix is not None


@dataclass
class MacSurveyResult:
    reports: list
    candidates: list
    delta: float
    z_threshold: float
    n: int
    mode: str
    base_info: float

    @property
    def classified_fraction(self) -> float:
        return float(np.mean([r.classified for r in self.reports]))

    @property
    def mean_info(self) -> float:
        return float(np.mean([r.sum_info for r in self.reports]))


def mac_survey(p: MacChannel, n: int, mode: str = "exact", delta: float = DEFAULT_DELTA,
               z_threshold: float = 1e-3, branch_sample: Optional[int] = None, seed: int = 0,
               samples: int = 10_000, max_outputs: int = MAX_OUTPUTS) -> MacSurveyResult:
    """Per branch, the qualifying full-rank A with the smallest Z(P^s[A]).

    P^s[A] equals the flattened channel projected on the cosets of ker A^T, so
    the single-user survey runs with those partitions and a min-Z preference.
    """
    cands = candidate_matrices(p.users)
    parts = [coset_partition(p.users, a) for a in cands]
    by_part = {h: a for h, a in zip(parts, cands)}
    res = survey(p.dmc, p.group, n, mode=mode, delta=delta, branch_sample=branch_sample, seed=seed,
                 samples=samples, partitions=parts, max_outputs=max_outputs, prefer="min_z")
    reports = []
    for r in res.reports:
        a = by_part.get(r.matched_partition) if r.matched_partition is not None else None
        reports.append(MacBranchReport(r.signs, r.mutual_info, a, a.lrank if a is not None else None,
                                       r.partition_info, r.z_projected, r.info_stderr))
    return MacSurveyResult(reports, cands, delta, z_threshold, n, res.mode, res.base_info)


# ---------------------------------------------------------------- codes


def choose_rows(entries: np.ndarray, prime: int, policy: str = "first") -> tuple:
    """Indices of rank-many linearly independent rows, scanned greedily in the policy's order."""
    r = gf.rank(entries, prime) if entries.shape[1] else 0
    if r == 0:
        return ()
    order = range(entries.shape[0]) if policy == "first" else range(entries.shape[0] - 1, -1, -1)
    if policy not in ("first", "last"):
        raise ValueError(f"unknown row policy {policy!r}")
    chosen = []
    for i in order:
        if gf.rank(entries[chosen + [i]], prime) == len(chosen) + 1:
            chosen.append(i)
            if len(chosen) == r:
                break
    return tuple(sorted(chosen))


@dataclass
class MacBranchPlan:
    signs: SignSequence
    matrix: Optional[GeneralizedMatrix]  # None: every user frozen
    active_rows: tuple  # per block, indices into that block's users
    frozen_values: np.ndarray  # one symbol per user (ignored for free users)
    z: Optional[float] = None

    @property
    def active(self) -> bool:
        return self.matrix is not None

    def free_users(self, users: Sequence[int]) -> list:
        if not self.active:
            return []
        out = []
        for (q, idx), rows in zip(user_groups(users), self.active_rows):
            out.extend(idx[j] for j in rows)
        return sorted(out)


@dataclass
class MacCodeConfig:
    n: int
    users: tuple
    plans: list
    z_threshold: float
    delta: float
    seed: int
    policy: str = "first"
    meta: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return 1 << self.n

    @property
    def group(self) -> Quasigroup:
        return product_group(self.users)

    @property
    def free_slots(self) -> list:
        """(branch, user) pairs carrying information, in branch then user order."""
        return [(i, k) for i, pl in enumerate(self.plans) for k in pl.free_users(self.users)]

    @property
    def user_rates(self) -> np.ndarray:
        """R_k in bits per channel use for every user."""
        r = np.zeros(len(self.users))
        for i, k in self.free_slots:
            r[k] += np.log2(self.users[k])
        return r / self.length

    @property
    def union_bound(self) -> float:
        total = 0.0
        for pl in self.plans:
            if pl.active:
                total += 2.0 ** pl.matrix.lrank * pl.z
        return float(total)

    def to_dict(self) -> dict:
        branches = []
        for pl in self.plans:
            d = {"signs": str(pl.signs), "frozen_values": [int(v) for v in pl.frozen_values]}
            if pl.active:
                d.update(kind="active", matrix=pl.matrix.to_dict(), active_rows=[list(r) for r in pl.active_rows],
                         z=pl.z)
            else:
                d["kind"] = "frozen"
            branches.append(d)
        return {"n": self.n, "users": list(self.users), "z_threshold": self.z_threshold, "delta": self.delta,
                "seed": self.seed, "policy": self.policy, "user_rates": self.user_rates.tolist(),
                "branches": branches}

    @classmethod
    def from_dict(cls, d: dict) -> "MacCodeConfig":
        users = tuple(int(q) for q in d["users"])
        n = int(d["n"])
        if len(d["branches"]) != 1 << n:
            raise ValidationError(f"expected {1 << n} branches, got {len(d['branches'])}")
        plans = []
        for i, b in enumerate(d["branches"]):
            s = SignSequence.parse(b["signs"])
            fv = np.asarray(b["frozen_values"], dtype=np.int64)
            if b["kind"] == "active":
                a = GeneralizedMatrix.from_dict(b["matrix"], users)
                rows = tuple(tuple(int(j) for j in r) for r in b["active_rows"])
                _validate_rows(a, rows, i)
                plans.append(MacBranchPlan(s, a, rows, fv, float(b.get("z", 0.0))))
            else:
                plans.append(MacBranchPlan(s, None, (), fv))
        return cls(n, users, plans, float(d["z_threshold"]), float(d["delta"]), int(d["seed"]),
                   d.get("policy", "first"))


def _validate_rows(a: GeneralizedMatrix, rows: tuple, branch: int):
    for blk, r in zip(a.blocks, rows):
        if len(r) != blk.rank or (r and gf.rank(blk.entries[list(r)], blk.prime) != len(r)):
            raise ValidationError(f"branch {branch}: active rows {r} are not an independent set of size {blk.rank}")


def construct_mac_code(p: MacChannel, n: int, delta: float = DEFAULT_DELTA, z_threshold: float = 1e-3,
                       mode: str = "exact", seed: int = 0, policy: str = "first", samples: int = 10_000,
                       max_outputs: int = MAX_OUTPUTS) -> MacCodeConfig:
    res = mac_survey(p, n, mode=mode, delta=delta, z_threshold=z_threshold, seed=seed, samples=samples,
                     max_outputs=max_outputs)
    rng = np.random.default_rng(seed)
    frozen = np.stack([rng.integers(0, q, size=1 << n) for q in p.users], axis=1) if p.users else \
        np.zeros((1 << n, 0), dtype=np.int64)
    plans = []
    for r in res.reports:
        fv = frozen[r.index]
        if r.classified and r.z < z_threshold and r.lrank > 0:
            rows = tuple(choose_rows(b.entries, b.prime, policy) for b in r.matrix.blocks)
            plans.append(MacBranchPlan(r.signs, r.matrix, rows, fv, r.z))
        else:
            plans.append(MacBranchPlan(r.signs, None, (), fv))
    return MacCodeConfig(n, tuple(p.users), plans, z_threshold, delta, seed, policy, {"mode": res.mode})


def mac_messages(c: MacCodeConfig, info) -> np.ndarray:
    """Per-branch user symbols ``u[..., branch, user]`` from info symbols.

    ``info`` is either a dict {(branch, user): symbol} or an array whose last
    axis runs over :attr:`MacCodeConfig.free_slots`.
    """
    slots = c.free_slots
    base = np.stack([pl.frozen_values for pl in c.plans]).astype(np.int64)
    if isinstance(info, dict):
        u = base.copy()
        for br, k in slots:
            if (br, k) not in info:
                raise MissingInfoSymbol(f"no info symbol for branch {br}, user {k}")
            u[br, k] = int(info[(br, k)])
        vals = u[tuple(np.array(slots).T)] if slots else np.zeros(0, dtype=np.int64)
        q = np.array([c.users[k] for _, k in slots], dtype=np.int64)
        if np.any(vals < 0) or np.any(vals >= q):
            raise ValidationError("info symbol outside its user's alphabet")
        return u
    arr = np.asarray(info, dtype=np.int64)
    if arr.shape[-1] != len(slots):
        raise MissingInfoSymbol(f"expected {len(slots)} info symbols, got {arr.shape[-1]}")
    q = np.array([c.users[k] for _, k in slots], dtype=np.int64)
    if np.any(arr < 0) or np.any(arr >= q):
        raise ValidationError("info symbol outside its user's alphabet")
    u = np.broadcast_to(base, arr.shape[:-1] + base.shape).copy()
    for j, (br, k) in enumerate(slots):
        u[..., br, k] = arr[..., j]
    return u


def _flatten(u: np.ndarray, users) -> np.ndarray:
    if not users:
        return np.zeros(u.shape[:-1], dtype=np.int64)
    return np.ravel_multi_index(tuple(np.moveaxis(u, -1, 0)), users).astype(np.int64)


def _unflatten(x: np.ndarray, users) -> np.ndarray:
    if not users:
        return np.zeros(x.shape + (0,), dtype=np.int64)
    return np.stack(np.unravel_index(x, users), axis=-1).astype(np.int64)


def mac_encode(c: MacCodeConfig, info) -> np.ndarray:
    """Per-user codewords ``x[..., user, position]`` (field-addition butterflies per user)."""
    u = mac_messages(c, info)
    x = kernels.encode(_flatten(u, c.users), c.group.table)
    return np.moveaxis(_unflatten(x, c.users), -1, -2)


class _Solver:
    """Recovers a branch's user symbols from A^T u and the frozen symbols."""

    def __init__(self, c: MacCodeConfig, plan: MacBranchPlan):
        self.users = c.users
        self.plan = plan
        self.ind_map = coset_map(c.users, plan.matrix)
        self.n_cosets = int(self.ind_map.max()) + 1
        self.out_users = plan.matrix.out_users
        self.parts = []
        off = 0
        for (q, idx), blk, rows in zip(user_groups(c.users), plan.matrix.blocks, plan.active_rows):
            l = blk.cols
            if l == 0:
                self.parts.append(None)
                continue
            rows = list(rows)
            frz = [j for j in range(len(idx)) if j not in rows]
            sq = blk.entries[rows].T % q  # l x l, applied to the free symbols
            inv = gf.solve(sq, np.eye(l, dtype=np.int64), q)
            fixed = (plan.frozen_values[[idx[j] for j in frz]] @ blk.entries[frz]) % q if frz else np.zeros(l, int)
            self.parts.append((q, [idx[j] for j in rows], inv, fixed, off, l))
            off += l

    def __call__(self, post: np.ndarray) -> np.ndarray:
        bsz = post.shape[0]
        pa = np.zeros((bsz, self.n_cosets))
        for x in range(post.shape[1]):
            pa[:, self.ind_map[x]] += post[:, x]
        v = _unflatten(kernels.decide(pa), self.out_users)
        u = np.broadcast_to(self.plan.frozen_values, (bsz, len(self.users))).copy()
        for part in self.parts:
            if part is None:
                continue
            q, free, inv, fixed, off, l = part
            rhs = (v[:, off:off + l] - fixed) % q
            u[:, free] = (rhs @ inv.T) % q
        return u


def mac_sc_decode_batch(c: MacCodeConfig, y: np.ndarray, p: MacChannel) -> np.ndarray:
    """Decoded user symbols ``u[b, branch, user]`` for received words ``y[b, position]``."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[1] != c.length:
        raise LengthMismatch(f"expected {c.length} outputs, got {y.shape[1]}")
    if tuple(p.users) != tuple(c.users):
        raise LengthMismatch("channel users do not match the code")
    bsz = y.shape[0]
    solvers = [_Solver(c, pl) if pl.active else None for pl in c.plans]
    out = np.zeros((bsz, c.length, len(c.users)), dtype=np.int64)

    def leaf(s, post):
        if solvers[s] is None:
            u = np.broadcast_to(c.plans[s].frozen_values, (bsz, len(c.users)))
        else:
            u = solvers[s](post)
        out[:, s] = u
        return _flatten(u, c.users)

    sc_recursion(np.transpose(p.prob[:, y], (1, 2, 0)), c.group.table, leaf)
    return out


def mac_sc_decode(c: MacCodeConfig, y, p: MacChannel) -> np.ndarray:
    """Decoded symbols ``u[branch, user]`` for one received word."""
    return mac_sc_decode_batch(c, np.asarray(y)[None, :], p)[0]


@dataclass
class MacSimulationResult:
    trials: int
    block_error_rate: float
    stderr: float
    union_bound: float
    user_rates: list


def mac_simulate(c: MacCodeConfig, p: MacChannel, trials: int, seed: int = 0, chunk: int = 512):
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    slots = c.free_slots
    q = np.array([c.users[k] for _, k in slots], dtype=np.int64)
    errors = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        info = rng.integers(0, 1 << 30, size=(b, len(slots))) % q if slots else np.zeros((b, 0), np.int64)
        u = mac_messages(c, info)
        x = kernels.encode(_flatten(u, c.users), c.group.table)
        y = kernels.sample_outputs(p.prob, x, rng)
        uh = mac_sc_decode_batch(c, y, p)
        if slots:
            br, us = np.array(slots).T
            errors += int(np.any(uh[:, br, us] != u[:, br, us], axis=1).sum())
        done += b
    rate = errors / trials
    return MacSimulationResult(trials, rate, float(np.sqrt(rate * (1 - rate) / trials)), c.union_bound,
                               c.user_rates.tolist())
