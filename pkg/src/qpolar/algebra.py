"""Finite quasigroups, balanced/stable partitions and group structure.

Elements are dense indices ``0..size-1``; labels are for presentation only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AlphabetTooLarge, NotAQuasigroup, NotBalanced, PartitionMismatch

ENUMERATION_LIMIT = 8


class Quasigroup:
    """A Latin-square Cayley table with precomputed division tables."""

    def __init__(self, table, labels: Optional[Sequence[str]] = None, name: Optional[str] = None):
        t = np.array(table, dtype=np.int64)
        t.setflags(write=False)
        self.table = t
        self.size = int(t.shape[0])
        self.labels = tuple(labels) if labels is not None else None
        self.name = name
        q = self.size
        rows = np.repeat(np.arange(q), q)
        cols = np.tile(np.arange(q), q)
        vals = t.ravel()
        # ldiv[b, a] = c with b*c = a ; rdiv[a, b] = c with c*b = a
        ldiv = np.empty((q, q), dtype=np.int64)
        ldiv[rows, vals] = cols
        rdiv = np.empty((q, q), dtype=np.int64)
        rdiv[vals, cols] = rows
        ldiv.setflags(write=False)
        rdiv.setflags(write=False)
        self.ldiv = ldiv
        self.rdiv = rdiv

    def op(self, a, b):
        return self.table[a, b]

    def label(self, x: int) -> str:
        return self.labels[x] if self.labels else str(x)

    def __eq__(self, other):
        return isinstance(other, Quasigroup) and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(self.table.tobytes())

    def __repr__(self):
        return f"Quasigroup(size={self.size}{', name=' + repr(self.name) if self.name else ''})"


def validate_quasigroup(table, labels=None, name=None) -> Quasigroup:
    t = np.asarray(table)
    if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] == 0:
        raise NotAQuasigroup(f"table must be a nonempty square array, got shape {t.shape}", "shape")
    if not np.issubdtype(t.dtype, np.integer):
        if not np.all(np.equal(np.mod(t, 1), 0)):
            raise NotAQuasigroup("table entries must be integers", "entry")
        t = t.astype(np.int64)
    q = t.shape[0]
    if t.min() < 0 or t.max() >= q:
        raise NotAQuasigroup(f"table entries must lie in [0,{q})", "entry")
    expect = np.arange(q)
    for i in range(q):
        row = np.sort(t[i])
        if not np.array_equal(row, expect):
            dup = int(row[np.argmax(np.diff(row) == 0)])
            raise NotAQuasigroup(f"row {i} repeats value {dup}", "row", i, dup)
    for j in range(q):
        col = np.sort(t[:, j])
        if not np.array_equal(col, expect):
            dup = int(col[np.argmax(np.diff(col) == 0)])
            raise NotAQuasigroup(f"column {j} repeats value {dup}", "col", j, dup)
    if labels is not None and len(labels) != q:
        raise NotAQuasigroup(f"expected {q} labels, got {len(labels)}", "labels")
    return Quasigroup(t, labels, name)


def left_divide(g: Quasigroup, b: int, a: int) -> int:
    """The unique c with b*c = a."""
    return int(g.ldiv[b, a])


def right_divide(g: Quasigroup, a: int, b: int) -> int:
    """The unique c with c*b = a."""
    return int(g.rdiv[a, b])


def derived_quasigroup(g: Quasigroup, which: str = "rightDiv") -> Quasigroup:
    """Quasigroup with operation (a, b) -> a/b ("rightDiv") or (a, b) -> b\\a ("leftDiv")."""
    if which == "rightDiv":
        t = g.rdiv
    elif which == "leftDiv":
        t = g.ldiv.T
    else:
        raise ValueError(f"unknown derived operation {which!r}")
    name = f"{g.name}/{which}" if g.name else None
    return Quasigroup(np.array(t), g.labels, name)


def cyclic_group(k: int) -> Quasigroup:
    a = np.arange(k)
    return Quasigroup((a[:, None] + a[None, :]) % k, name=f"Zn:{k}")


def xor_group(k: int) -> Quasigroup:
    a = np.arange(1 << k)
    labels = [format(int(x), f"0{k}b") if k else "" for x in a]
    return Quasigroup(a[:, None] ^ a[None, :], labels, name=f"XOR:{k}")


def example_quasigroup(n: int) -> Quasigroup:
    """Z_n x Z_n with (x1,y1)*(x2,y2) = (x1+y1+x2+y2, y1+y2); (x, y) has index x*n+y."""
    x = np.arange(n * n) // n
    y = np.arange(n * n) % n
    nx = (x[:, None] + y[:, None] + x[None, :] + y[None, :]) % n
    ny = (y[:, None] + y[None, :]) % n
    labels = [f"({i},{j})" for i, j in zip(x, y)]
    return Quasigroup(nx * n + ny, labels, name=f"paperExample:{n}")


def product_group(sizes: Sequence[int]) -> Quasigroup:
    """Componentwise addition on prod Z_{q_k}, mixed radix with the first factor most significant."""
    sizes = list(sizes)
    if not sizes:
        return Quasigroup(np.zeros((1, 1), dtype=np.int64), name="trivial")
    digits = np.array(np.unravel_index(np.arange(int(np.prod(sizes))), sizes))
    summed = (digits[:, :, None] + digits[:, None, :]) % np.array(sizes)[:, None, None]
    table = np.ravel_multi_index(tuple(summed), sizes)
    return Quasigroup(table, name="x".join(f"F{q}" for q in sizes))


# ---------------------------------------------------------------- partitions


class BalancedPartition:
    """Partition of ``[0, size)`` into equal-size blocks, in canonical order.

    Blocks are sorted by their minimal element, so equality is structural.
    """

    __slots__ = ("block_of", "blocks", "size")

    def __init__(self, block_of):
        lab = np.asarray(block_of, dtype=np.int64)
        # relabel blocks by order of first appearance
        _, first, inv = np.unique(lab, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        canon = order[inv.ravel()]
        counts = np.bincount(canon)
        if len(counts) and not np.all(counts == counts[0]):
            raise NotBalanced(f"block sizes differ: {sorted(set(counts.tolist()))}")
        canon.setflags(write=False)
        self.block_of = canon
        self.size = int(len(canon))
        self.blocks = tuple(tuple(int(x) for x in np.flatnonzero(canon == b)) for b in range(len(counts)))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], size: Optional[int] = None):
        blocks = [list(b) for b in blocks]
        n = size if size is not None else sum(len(b) for b in blocks)
        lab = np.full(n, -1, dtype=np.int64)
        for i, b in enumerate(blocks):
            for x in b:
                if x < 0 or x >= n or lab[x] != -1:
                    raise PartitionMismatch(f"element {x} is out of range or repeated")
                lab[x] = i
        if np.any(lab < 0):
            raise PartitionMismatch("blocks do not cover the alphabet")
        return cls(lab)

    @classmethod
    def singletons(cls, size: int):
        return cls(np.arange(size))

    @classmethod
    def whole(cls, size: int):
        return cls(np.zeros(size, dtype=np.int64))

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def block_size(self) -> int:
        return self.size // len(self.blocks)

    def signature(self) -> str:
        """Compact text form, e.g. ``{0,2}{1,3}``."""
        return "".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)

    def __eq__(self, other):
        if isinstance(other, StablePartition):
            other = other.partition
        return isinstance(other, BalancedPartition) and np.array_equal(self.block_of, other.block_of)

    def __hash__(self):
        return hash(self.block_of.tobytes())

    def __repr__(self):
        return f"BalancedPartition({self.signature()})"


@dataclass(frozen=True, eq=False)
class StablePartition:
    partition: BalancedPartition
    period: int
    orbit: tuple = field(default=())

    @property
    def blocks(self):
        return self.partition.blocks

    @property
    def block_of(self):
        return self.partition.block_of

    @property
    def block_count(self):
        return self.partition.block_count

    @property
    def block_size(self):
        return self.partition.block_size

    @property
    def size(self):
        return self.partition.size

    def signature(self):
        return self.partition.signature()

    def __eq__(self, other):
        if isinstance(other, StablePartition):
            return self.partition == other.partition
        return self.partition == other

    def __hash__(self):
        return hash(self.partition)

    def __repr__(self):
        return f"StablePartition({self.signature()}, period={self.period})"


def _as_partition(h) -> BalancedPartition:
    return h.partition if isinstance(h, StablePartition) else h


def partition_product(g: Quasigroup, h) -> Optional[BalancedPartition]:
    """The set {A*B : A, B blocks of h}, if it is a balanced partition."""
    h = _as_partition(h)
    if h.size != g.size:
        raise PartitionMismatch(f"partition over {h.size} elements, quasigroup has {g.size}")
    products = set()
    for a in h.blocks:
        sub = g.table[np.ix_(a, range(g.size))]
        for b in h.blocks:
            products.add(frozenset(sub[:, b].ravel().tolist()))
    lab = np.full(g.size, -1, dtype=np.int64)
    sizes = set()
    for i, s in enumerate(products):
        sizes.add(len(s))
        for x in s:
            if lab[x] != -1:
                return None
            lab[x] = i
    if np.any(lab < 0) or len(sizes) != 1:
        return None
    return BalancedPartition(lab)


def stable_partition_check(g: Quasigroup, h, max_period: int = 64) -> Optional[StablePartition]:
    """Return ``h`` with its minimal period if iterated products return to it."""
    h = _as_partition(h)
    orbit = [h]
    cur = h
    for _ in range(max_period):
        nxt = partition_product(g, cur)
        if nxt is None:
            return None
        if nxt == h:
            return StablePartition(h, len(orbit), tuple(orbit))
        if nxt in orbit:
            return None  # entered a cycle that excludes h
        orbit.append(nxt)
        cur = nxt
    return None


def _equal_block_partitions(n: int, d: int):
    """All partitions of range(n) into blocks of size d, canonical (block_of arrays)."""
    lab = [-1] * n

    def rec(next_block):
        try:
            first = lab.index(-1)
        except ValueError:
            yield list(lab)
            return
        lab[first] = next_block
        rest = [x for x in range(first + 1, n) if lab[x] == -1]
        for combo in itertools.combinations(rest, d - 1):
            for x in combo:
                lab[x] = next_block
            yield from rec(next_block + 1)
            for x in combo:
                lab[x] = -1
        lab[first] = -1

    yield from rec(0)


def balanced_partitions(n: int):
    for d in range(1, n + 1):
        if n % d == 0:
            for lab in _equal_block_partitions(n, d):
                yield BalancedPartition(lab)


def enumerate_stable_partitions(g: Quasigroup, limit: int = ENUMERATION_LIMIT) -> list:
    """All stable partitions of ``g``'s operation, ordered by block count then signature."""
    if g.size > limit:
        raise AlphabetTooLarge(f"|Q|={g.size} exceeds the enumeration limit {limit}")
    cands = list(balanced_partitions(g.size))
    found = []
    for h in cands:
        sp = stable_partition_check(g, h, max_period=len(cands) + 1)
        if sp is not None:
            found.append(sp)
    found.sort(key=lambda s: (s.block_count, s.partition.block_of.tolist()))
    return found


def wedge(h1, h2) -> BalancedPartition:
    """Nonempty pairwise intersections of the blocks of h1 and h2."""
    claimed = isinstance(h1, StablePartition) and isinstance(h2, StablePartition)
    a, b = _as_partition(h1), _as_partition(h2)
    if a.size != b.size:
        raise PartitionMismatch("partitions over different carriers")
    key = a.block_of * (b.block_count + 1) + b.block_of
    try:
        return BalancedPartition(key)
    except NotBalanced as exc:
        what = "stable inputs gave an unbalanced wedge" if claimed else "wedge is unbalanced"
        raise NotBalanced(what) from exc


# ---------------------------------------------------------------- groups


@dataclass(frozen=True)
class GroupInfo:
    is_group: bool
    identity: Optional[int] = None
    normal_subgroups: tuple = ()
    quotient_partitions: tuple = ()


def _generated_subgroup(g: Quasigroup, gens, identity) -> frozenset:
    elems = {identity}
    frontier = set(gens)
    while frontier:
        elems |= frontier
        new = set()
        for a in frontier:
            for b in list(elems):
                for c in (int(g.table[a, b]), int(g.table[b, a])):
                    if c not in elems:
                        new.add(c)
        frontier = new
    return frozenset(elems)


def group_analysis(g: Quasigroup) -> GroupInfo:
    t = g.table
    q = g.size
    assoc = np.array_equal(t[t, :], t[:, t])  # (a*b)*c vs a*(b*c), indexed [a,b,c]
    ident = None
    ar = np.arange(q)
    for e in range(q):
        if np.array_equal(t[e], ar) and np.array_equal(t[:, e], ar):
            ident = e
            break
    if not assoc or ident is None:
        return GroupInfo(False)
    inv = g.ldiv[:, ident]
    subgroups = {frozenset([ident])}
    frontier = [frozenset([ident])]
    while frontier:
        nxt = []
        for s in frontier:
            for x in range(q):
                if x not in s:
                    h = _generated_subgroup(g, set(s) | {x}, ident)
                    if h not in subgroups:
                        subgroups.add(h)
                        nxt.append(h)
        frontier = nxt
    normal = []
    for h in subgroups:
        hl = sorted(h)
        if all(set(t[t[x, hl], inv[x]].tolist()) == h for x in range(q)):
            normal.append(h)
    normal.sort(key=lambda s: (len(s), sorted(s)))
    quotients = []
    for h in normal:
        lab = np.full(q, -1, dtype=np.int64)
        hl = sorted(h)
        nb = 0
        for x in range(q):
            if lab[x] < 0:
                lab[t[x, hl]] = nb
                nb += 1
        sp = stable_partition_check(g, BalancedPartition(lab), max_period=1)
        quotients.append(sp)
    return GroupInfo(True, ident, tuple(tuple(sorted(h)) for h in normal), tuple(quotients))
