"""Polar codes over a quasigroup: construction, encoding, SC decoding, simulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .algebra import BalancedPartition, Quasigroup, StablePartition, xor_group
from .dmc import Dmc
from .errors import InvalidBlockIndex, LengthMismatch, MissingInfoSymbol, ValidationError
from .polarize import DEFAULT_DELTA, SignSequence, decode_order, survey

SIM_CHUNK = 512


@dataclass(frozen=True)
class SectionMapping:
    partition: object
    representative: tuple

    @classmethod
    def minimal(cls, h) -> "SectionMapping":
        return cls(h, tuple(min(b) for b in h.blocks))


@dataclass
class BranchPlan:
    signs: SignSequence
    kind: str  # "frozen" or "active"
    frozen_value: Optional[int] = None
    partition: Optional[object] = None
    section: Optional[SectionMapping] = None
    z: Optional[float] = None
    info: Optional[float] = None

    @property
    def active(self) -> bool:
        return self.kind == "active"


@dataclass
class CodeConfig:
    n: int
    quasigroup: Quasigroup
    plans: list
    z_threshold: float
    delta: float
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return 1 << self.n

    @property
    def active_branches(self) -> list:
        return [i for i, pl in enumerate(self.plans) if pl.active]

    @property
    def rate_bits(self) -> float:
        return sum(np.log2(pl.partition.block_count) for pl in self.plans if pl.active) / self.length

    @property
    def union_bound(self) -> float:
        return float(sum(pl.partition.block_count * pl.z for pl in self.plans if pl.active))

    def to_dict(self, quasigroup_ref: Optional[str] = None) -> dict:
        g = self.quasigroup
        branches = []
        for pl in self.plans:
            d = {"signs": str(pl.signs), "kind": pl.kind}
            if pl.active:
                d["partition"] = pl.partition.signature()
                d["blocks"] = [list(b) for b in pl.partition.blocks]
                d["representatives"] = list(pl.section.representative)
                d["z"] = pl.z
            else:
                d["frozen_value"] = int(pl.frozen_value)
            branches.append(d)
        return {
            "n": self.n,
            "quasigroup": quasigroup_ref or g.name or {"size": g.size, "table": g.table.tolist()},
            "quasigroup_table": g.table.tolist(),
            "z_threshold": self.z_threshold,
            "delta": self.delta,
            "seed": self.seed,
            "rate_bits": self.rate_bits,
            "branches": branches,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodeConfig":
        from .algebra import validate_quasigroup

        g = validate_quasigroup(d["quasigroup_table"], name=d["quasigroup"] if isinstance(d["quasigroup"], str) else None)
        n = int(d["n"])
        if len(d["branches"]) != 1 << n:
            raise ValidationError(f"expected {1 << n} branches, got {len(d['branches'])}")
        plans = []
        for i, b in enumerate(d["branches"]):
            s = SignSequence.parse(b["signs"])
            if s.index != i or len(s) != n:
                raise ValidationError(f"branch {i} has inconsistent signs {b['signs']!r}")
            if b["kind"] == "active":
                h = BalancedPartition.from_blocks(b["blocks"], g.size)
                sec = SectionMapping(h, tuple(int(r) for r in b["representatives"]))
                if any(r not in blk for r, blk in zip(sec.representative, h.blocks)):
                    raise ValidationError(f"branch {i}: representative outside its block")
                plans.append(BranchPlan(s, "active", None, h, sec, float(b.get("z", 0.0))))
            elif b["kind"] == "frozen":
                plans.append(BranchPlan(s, "frozen", int(b["frozen_value"])))
            else:
                raise ValidationError(f"branch {i}: unknown kind {b['kind']!r}")
        return cls(n, g, plans, float(d["z_threshold"]), float(d["delta"]), int(d["seed"]))


def _frozen_values(seed: int, q: int, count: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, q, size=count)


def construct_code(p: Dmc, g: Quasigroup, n: int, delta: float = DEFAULT_DELTA, z_threshold: float = 1e-3,
                   mode: str = "exact", samples: int = 10_000, seed: int = 0, partitions=None,
                   prefer: str = "largest") -> CodeConfig:
    """Active branches are those classified to a partition with projected Z below ``z_threshold``."""
    res = survey(p, g, n, mode=mode, delta=delta, seed=seed, samples=samples, partitions=partitions,
                 prefer=prefer)
    frozen = _frozen_values(seed, g.size, 1 << n)
    plans = []
    for r in res.reports:
        h = r.matched_partition
        if h is not None and h.block_count > 1 and r.z_projected < z_threshold:
            plans.append(BranchPlan(r.signs, "active", None, h, SectionMapping.minimal(h), r.z_projected,
                                    r.mutual_info))
        else:
            plans.append(BranchPlan(r.signs, "frozen", int(frozen[r.index]), info=r.mutual_info))
    return CodeConfig(n, g, plans, z_threshold, delta, seed, {"mode": mode})


def bec_branch_erasures(eps: float, n: int) -> np.ndarray:
    """Erasure probability of every synthetic BEC, indexed by branch index."""
    e = np.array([eps])
    for i in range(n):
        # the new sign occupies bit i: minus children first, then plus
        e = np.concatenate([2 * e - e * e, e * e])
    return e


def bec_code(eps: float, n: int, z_threshold: float, delta: float = DEFAULT_DELTA, seed: int = 0) -> CodeConfig:
    """Binary code for BEC(eps) built from the closed-form erasure recursion (Z equals erasure probability)."""
    g = xor_group(1)
    e = bec_branch_erasures(eps, n)
    frozen = _frozen_values(seed, 2, 1 << n)
    single = StablePartition(BalancedPartition.singletons(2), 1, (BalancedPartition.singletons(2),))
    plans = []
    for i, z in enumerate(e):
        s = SignSequence.from_index(i, n)
        # I = 1 - eps for the singleton partition, so classification needs eps < delta
        if z < delta and z < z_threshold:
            plans.append(BranchPlan(s, "active", None, single, SectionMapping.minimal(single), float(z), 1 - z))
        else:
            plans.append(BranchPlan(s, "frozen", int(frozen[i]), info=1 - z))
    return CodeConfig(n, g, plans, z_threshold, delta, seed, {"mode": "bec"})


def encode_by_stages(u, table) -> np.ndarray:
    """Stage-by-stage encoding that moves one sign from the message index to the channel index per stage."""
    u = np.asarray(u)
    n_len = u.shape[-1]
    n = n_len.bit_length() - 1
    cur = u.copy()
    idx = np.arange(n_len)
    for level in range(1, n + 1):
        low_mask = (1 << (level - 1)) - 1
        s1 = idx & low_mask
        b = (idx >> (level - 1)) & 1
        s2 = idx >> level
        base = s1 | (s2 << (level - 1))
        minus_src = base
        plus_src = base | (1 << (n - 1))
        nxt = np.where(b == 0, table[cur[..., minus_src], cur[..., plus_src]], cur[..., plus_src])
        cur = nxt
    return cur


def message_from_info(c: CodeConfig, info) -> np.ndarray:
    """Map info block indices (dict branch -> block, or array over active branches) to messages."""
    act = c.active_branches
    if not isinstance(info, dict):
        arr = np.asarray(info)
        if arr.shape[-1] != len(act):
            raise MissingInfoSymbol(f"expected {len(act)} info symbols, got {arr.shape[-1]}")
        info = None
    else:
        arr = None
    u = np.array([pl.frozen_value if not pl.active else 0 for pl in c.plans], dtype=np.int64)
    if arr is not None and arr.ndim == 2:
        u = np.tile(u, (arr.shape[0], 1))
    for j, i in enumerate(act):
        pl = c.plans[i]
        if info is not None:
            if i not in info:
                raise MissingInfoSymbol(f"no info symbol for branch {i}")
            blk = np.asarray(info[i])
        else:
            blk = arr[..., j]
        if np.any(blk < 0) or np.any(blk >= pl.partition.block_count):
            raise InvalidBlockIndex(f"branch {i}: block index out of range")
        u[..., i] = np.asarray(pl.section.representative)[blk]
    return u


def encode(c: CodeConfig, info) -> np.ndarray:
    """Codeword (channel inputs in position order) for the given info block indices."""
    return kernels.encode(message_from_info(c, info), c.quasigroup.table)


def _leaf_tables(c: CodeConfig):
    q = c.quasigroup.size
    tabs = []
    for pl in c.plans:
        if pl.active:
            ind = np.zeros((q, pl.partition.block_count))
            ind[np.arange(q), pl.partition.block_of] = 1.0
            tabs.append((ind, np.asarray(pl.section.representative)))
        else:
            tabs.append(None)
    return tabs


def sc_recursion(w: np.ndarray, table: np.ndarray, leaf) -> None:
    """Depth-first SC recursion over likelihoods ``w[b, position, symbol]``.

    ``leaf(branch, post)`` receives the normalized posteriors of one branch and
    returns the decided symbols (shape (B,)); branches are visited in decode order.
    """

    def rec(lik, idx):
        if lik.shape[1] == 1:
            return np.asarray(leaf(int(idx[0]), lik[:, 0, :]), dtype=np.int64)[:, None]
        h = lik.shape[1] // 2
        l1, l2 = lik[:, :h], lik[:, h:]
        x_lo = rec(kernels.normalize(kernels.minus_combine(l1, l2, table)), idx[0::2])
        x_hi = rec(kernels.normalize(kernels.plus_combine(l1, l2, x_lo, table)), idx[1::2])
        return np.concatenate([table[x_lo, x_hi], x_hi], axis=1)

    rec(kernels.normalize(w), np.arange(w.shape[1]))


def sc_decode_batch(c: CodeConfig, y: np.ndarray, p: Dmc, return_posteriors: bool = False):
    """Successive cancellation decoding of a batch of received words ``y[b, position]``.

    Returns decoded messages ``u[b, branch]`` (and per-branch posteriors over Q if asked).
    """
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[1] != c.length:
        raise LengthMismatch(f"expected {c.length} outputs, got {y.shape[1]}")
    if p.input_size != c.quasigroup.size:
        raise LengthMismatch("channel input size does not match the code alphabet")
    bsz = y.shape[0]
    leaves = _leaf_tables(c)
    u_out = np.zeros((bsz, c.length), dtype=np.int64)
    posts = np.zeros((bsz, c.length, c.quasigroup.size)) if return_posteriors else None

    def leaf(s, post):
        if posts is not None:
            posts[:, s] = post
        if leaves[s] is None:
            u = np.full(bsz, c.plans[s].frozen_value, dtype=np.int64)
        else:
            ind, rep = leaves[s]
            u = rep[kernels.decide(post @ ind)]
        u_out[:, s] = u
        return u

    sc_recursion(np.transpose(p.prob[:, y], (1, 2, 0)), c.quasigroup.table, leaf)
    return (u_out, posts) if return_posteriors else u_out


def sc_decode(c: CodeConfig, y, p: Dmc) -> dict:
    """Decoded element per branch, processed in successive-cancellation order."""
    u = sc_decode_batch(c, np.asarray(y)[None, :], p)[0]
    return {int(i): int(u[i]) for i in decode_order(c.n)}


@dataclass
class SimulationResult:
    trials: int
    block_error_rate: float
    symbol_error_rate: float
    stderr: float
    union_bound: float


def simulate(c: CodeConfig, p: Dmc, trials: int, seed: int = 0) -> SimulationResult:
    """Monte Carlo block and symbol error rates over uniformly random info symbols."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    act = c.active_branches
    counts = [c.plans[i].partition.block_count for i in act]
    block_err = 0
    sym_err = 0
    done = 0
    while done < trials:
        b = min(SIM_CHUNK, trials - done)
        info = np.stack([rng.integers(0, k, size=b) for k in counts], axis=1) if act else np.zeros((b, 0), int)
        u = message_from_info(c, info)
        x = kernels.encode(u, c.quasigroup.table)
        y = kernels.sample_outputs(p.prob, x, rng)
        uh = sc_decode_batch(c, y, p)
        wrong = uh[:, act] != u[:, act]
        block_err += int(wrong.any(axis=1).sum())
        sym_err += int(wrong.sum())
        done += b
    bler = block_err / trials
    ser = sym_err / (trials * len(act)) if act else 0.0
    return SimulationResult(trials, bler, ser, float(np.sqrt(bler * (1 - bler) / trials)), c.union_bound)
