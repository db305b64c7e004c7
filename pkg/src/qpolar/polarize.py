"""Polarization transforms over a quasigroup, branch surveys and classification."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .algebra import (
    BalancedPartition,
    Quasigroup,
    StablePartition,
    derived_quasigroup,
    enumerate_stable_partitions,
    partition_product,
)
from .dmc import (
    DEFAULT_TOL,
    Dmc,
    bhattacharyya,
    canonicalize,
    mutual_information,
    project_channel,
)
from .errors import OutputExplosion, PartitionMismatch, SizeMismatch

MAX_OUTPUTS = 200_000
# raw (pre-merge) transition entries allowed in one transform step
MAX_RAW_ENTRIES = 1 << 25
DEFAULT_DELTA = 0.1
MC_CHUNK = 256


@dataclass(frozen=True)
class SignSequence:
    """Signs as a tuple of 0 (minus) / 1 (plus); sign i sits at bit 2^(i-1) of ``index``."""

    signs: tuple

    @classmethod
    def parse(cls, s) -> "SignSequence":
        if isinstance(s, SignSequence):
            return s
        if isinstance(s, str):
            m = {"-": 0, "+": 1, "0": 0, "1": 1}
            return cls(tuple(m[c] for c in s))
        return cls(tuple(int(v) for v in s))

    @classmethod
    def from_index(cls, index: int, n: int) -> "SignSequence":
        return cls(tuple((index >> i) & 1 for i in range(n)))

    @property
    def index(self) -> int:
        return sum(b << i for i, b in enumerate(self.signs))

    def __len__(self):
        return len(self.signs)

    def __str__(self):
        return "".join("-+"[b] for b in self.signs)


def decode_order(n: int) -> np.ndarray:
    """Branch indices in successive-cancellation order (first sign most significant)."""
    idx = np.arange(1 << n)
    rev = np.zeros_like(idx)
    for i in range(n):
        rev |= ((idx >> i) & 1) << (n - 1 - i)
    return idx[np.argsort(rev)]


# ---------------------------------------------------------------- transforms


def _check(p: Dmc, g: Quasigroup):
    if p.input_size != g.size:
        raise SizeMismatch(f"channel has {p.input_size} inputs, quasigroup has {g.size} elements")


def _finish(w, labels, canonical, tol, max_outputs, step, keep_labels):
    out = Dmc(w, labels, validate=False)
    if canonical:
        out = canonicalize(out, tol, keep_labels=keep_labels)
    if max_outputs is not None and out.output_size > max_outputs:
        raise OutputExplosion(step, out.output_size)
    return out


def minus_transform(p: Dmc, g: Quasigroup, canonical: bool = True, tol: float = DEFAULT_TOL,
                    max_outputs: Optional[int] = MAX_OUTPUTS, keep_labels: bool = False, step: int = 1) -> Dmc:
    """P-(y1, y2 | u1) = (1/|Q|) sum_u2 P(y1 | u1*u2) P(y2 | u2); raw output index y1*|Y| + y2."""
    _check(p, g)
    q, ny = p.prob.shape
    if q * ny * ny > MAX_RAW_ENTRIES:
        raise OutputExplosion(step, ny * ny)
    w = np.einsum("aby,bz->ayz", p.prob[g.table], p.prob).reshape(q, ny * ny) / q
    labels = None
    if keep_labels:
        lab = p.labels if p.labels is not None else list(range(ny))
        labels = [(a, b) for a in lab for b in lab]
    return _finish(w, labels, canonical, tol, max_outputs, step, keep_labels)


def plus_transform(p: Dmc, g: Quasigroup, canonical: bool = True, tol: float = DEFAULT_TOL,
                   max_outputs: Optional[int] = MAX_OUTPUTS, keep_labels: bool = False, step: int = 1) -> Dmc:
    """P+(y1, y2, u1 | u2) = (1/|Q|) P(y1 | u1*u2) P(y2 | u2); raw output index (y1*|Y| + y2)*|Q| + u1."""
    _check(p, g)
    q, ny = p.prob.shape
    if q * ny * ny * q > MAX_RAW_ENTRIES:
        raise OutputExplosion(step, ny * ny * q)
    w = np.einsum("aby,bz->byza", p.prob[g.table], p.prob).reshape(q, ny * ny * q) / q
    labels = None
    if keep_labels:
        lab = p.labels if p.labels is not None else list(range(ny))
        labels = [(a, b, u) for a in lab for b in lab for u in range(q)]
    return _finish(w, labels, canonical, tol, max_outputs, step, keep_labels)


def transform(p: Dmc, g: Quasigroup, sign: int, **kw) -> Dmc:
    return plus_transform(p, g, **kw) if sign else minus_transform(p, g, **kw)


def polarize_path(p: Dmc, g: Quasigroup, s, max_outputs: Optional[int] = MAX_OUTPUTS,
                  tol: float = DEFAULT_TOL, canonical: bool = True) -> Dmc:
    """Apply the transforms for ``s`` left to right (first sign innermost)."""
    s = SignSequence.parse(s)
    cur = p
    for i, b in enumerate(s.signs):
        cur = transform(cur, g, b, canonical=canonical, tol=tol, max_outputs=max_outputs, step=i + 1)
    return cur


# ---------------------------------------------------------------- projected transforms


def _block_products(h: BalancedPartition, hd: BalancedPartition, g: Quasigroup) -> np.ndarray:
    """c[i, j] = index in h of the block (hd block i) * (h block j)."""
    c = np.empty((hd.block_count, h.block_count), dtype=np.int64)
    for i, a in enumerate(hd.blocks):
        for j, b in enumerate(h.blocks):
            prods = np.unique(h.block_of[g.table[np.ix_(a, b)]])
            if len(prods) != 1:
                raise PartitionMismatch("partition is not stable for the right-division quasigroup")
            c[i, j] = prods[0]
    return c


def divided_partition(h, g: Quasigroup) -> BalancedPartition:
    """The partition {A/B} obtained from the right-division product."""
    hp = h.partition if isinstance(h, StablePartition) else h
    hd = partition_product(derived_quasigroup(g, "rightDiv"), hp)
    if hd is None:
        raise PartitionMismatch("right-division product of the partition is not balanced")
    return hd


def projected_transforms(p: Dmc, h, g: Quasigroup, canonical: bool = False, tol: float = DEFAULT_TOL):
    """(P[H]-, P[H]+): the minus channel has the divided partition as input alphabet,
    the plus channel has raw output index (y1*|Y| + y2)*K + block of the divided partition."""
    _check(p, g)
    hp = h.partition if isinstance(h, StablePartition) else h
    if hp.size != g.size:
        raise PartitionMismatch("partition and quasigroup sizes differ")
    hd = divided_partition(hp, g)
    c = _block_products(hp, hd, g)
    ph = project_channel(p, hp).prob
    k, ny = ph.shape
    minus = np.einsum("aby,bz->ayz", ph[c], ph).reshape(hd.block_count, ny * ny) / k
    plus = np.einsum("aby,bz->byza", ph[c], ph).reshape(k, ny * ny * hd.block_count) / k
    pm, pp = Dmc(minus, validate=False), Dmc(plus, validate=False)
    if canonical:
        pm, pp = canonicalize(pm, tol), canonicalize(pp, tol)
    return pm, pp


def degradation_aggregation_check(p: Dmc, h, g: Quasigroup, tol: float = 1e-9,
                                  projected_plus: Optional[Dmc] = None) -> bool:
    """Summing P+[H] over x1 within each divided block must reproduce P[H]+ entrywise.

    ``projected_plus`` lets callers supply the left-hand channel (raw output order).
    """
    hp = h.partition if isinstance(h, StablePartition) else h
    hd = divided_partition(hp, g)
    if projected_plus is None:
        projected_plus = projected_transforms(p, hp, g)[1]
    q, ny = p.prob.shape
    k, kd = hp.block_count, hd.block_count
    plus_h = project_channel(plus_transform(p, g, canonical=False, max_outputs=None), hp).prob
    plus_h = plus_h.reshape(k, ny * ny, q)
    agg = np.zeros((k, ny * ny, kd))
    for x1 in range(q):
        agg[:, :, hd.block_of[x1]] += plus_h[:, :, x1]
    lhs = projected_plus.prob
    if lhs.shape != (k, ny * ny * kd):
        return False
    return bool(np.all(np.abs(lhs.reshape(k, ny * ny, kd) - agg) <= tol))


# ---------------------------------------------------------------- classification


@dataclass
class PartitionStat:
    partition: object
    info: float
    z: float


@dataclass
class BranchReport:
    signs: SignSequence
    mutual_info: float
    matched_partition: Optional[object] = None
    partition_info: Optional[float] = None
    z_projected: Optional[float] = None
    mode: str = "exact"
    sample_count: int = 0
    stats: list = field(default_factory=list, repr=False)
    info_stderr: float = 0.0

    @property
    def index(self):
        return self.signs.index


def classify_branch(mutual_info: float, stats: Sequence[PartitionStat], delta: float,
                    prefer: str = "largest") -> Optional[PartitionStat]:
    """Pick a partition whose log-size matches both I(P^s) and I(P^s[H]) within ``delta``.

    ``prefer="largest"`` takes the largest block count (smallest Z among equals);
    ``prefer="min_z"`` takes the smallest projected Z.
    """
    ok = []
    for st in stats:
        target = np.log2(st.partition.block_count)
        if abs(mutual_info - target) < delta and abs(st.info - target) < delta:
            ok.append(st)
    if not ok:
        return None
    if prefer == "min_z":
        return min(ok, key=lambda st: (st.z, -st.partition.block_count))
    return min(ok, key=lambda st: (-st.partition.block_count, st.z))


def survey_partitions(g: Quasigroup, limit: Optional[int] = None) -> list:
    """Stable partitions of the right-division quasigroup of ``g``."""
    d = derived_quasigroup(g, "rightDiv")
    return enumerate_stable_partitions(d) if limit is None else enumerate_stable_partitions(d, limit)


def _exact_stats(ch: Dmc, partitions) -> list:
    out = []
    for h in partitions:
        ph = project_channel(ch, h)
        out.append(PartitionStat(h, mutual_information(ph), bhattacharyya(ph)))
    return out


def _report(signs, info, stats, delta, mode, samples=0, prefer="largest", info_stderr=0.0):
    m = classify_branch(info, stats, delta, prefer)
    return BranchReport(signs, info, m.partition if m else None, m.info if m else None,
                        m.z if m else None, mode, samples, stats, info_stderr)


def _entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -t.sum(axis=-1)


def _block_indicator(h, q: int) -> np.ndarray:
    m = np.zeros((q, h.block_count))
    m[np.arange(q), h.block_of] = 1.0
    return m


class _Accumulator:
    """Running sums of posterior functionals per branch and partition."""

    def __init__(self, q, n_nodes, partitions):
        self.q = q
        self.partitions = partitions
        self.ind = [_block_indicator(h, q) for h in partitions]
        self.h_sum = np.zeros(n_nodes)
        self.h_sq = np.zeros(n_nodes)
        self.hb_sum = np.zeros((len(partitions), n_nodes))
        self.z_sum = np.zeros((len(partitions), n_nodes))
        self.count = 0

    def add(self, post):
        # post: (B, nodes, Q)
        h = _entropy(post)
        self.h_sum += h.sum(axis=0)
        self.h_sq += (h * h).sum(axis=0)
        for j, ind in enumerate(self.ind):
            k = ind.shape[1]
            blk = post @ ind
            self.hb_sum[j] += _entropy(blk).sum(axis=0)
            if k > 1:
                r = np.sqrt(blk)
                zz = (r.sum(axis=-1) ** 2 - blk.sum(axis=-1)) / (k - 1)
                self.z_sum[j] += zz.sum(axis=0)
        self.count += post.shape[0]

    def merge(self, other):
        self.h_sum += other.h_sum
        self.h_sq += other.h_sq
        self.hb_sum += other.hb_sum
        self.z_sum += other.z_sum
        self.count += other.count

    def results(self, node):
        c = self.count
        info = np.log2(self.q) - self.h_sum[node] / c
        var = max(self.h_sq[node] / c - (self.h_sum[node] / c) ** 2, 0.0)
        stats = []
        for j, h in enumerate(self.partitions):
            k = h.block_count
            pinfo = np.log2(k) - self.hb_sum[j, node] / c
            z = min(max(self.z_sum[j, node] / c, 0.0), 1.0) if k > 1 else 0.0
            stats.append(PartitionStat(h, float(pinfo), float(z)))
        return float(info), stats, float(np.sqrt(var / c))


def _mc_run(p: Dmc, g: Quasigroup, n: int, samples: int, seed: int, partitions, nodes=None, signs=None):
    """Shared Monte Carlo driver: returns an accumulator over ``nodes`` (or a single path)."""
    q = g.size
    table, rdiv = g.table, g.rdiv
    chunks = []
    left = samples
    while left > 0:
        chunks.append(min(MC_CHUNK, left))
        left -= chunks[-1]
    seeds = np.random.SeedSequence(seed).spawn(len(chunks))
    n_nodes = 1 if signs is not None else len(nodes)

    def work(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        acc = _Accumulator(q, n_nodes, partitions)
        x = rng.integers(0, q, size=(size, 1 << n))
        y = kernels.sample_outputs(p.prob, x, rng)
        w = np.transpose(p.prob[:, y], (1, 2, 0))
        if signs is not None:
            post, _ = kernels.genie_path(w, x, table, rdiv, signs)
            acc.add(post[:, None, :])
        else:
            post, _ = kernels.genie_all_branches(w, x, table, rdiv, nodes)
            acc.add(post)
        return acc

    threads = kernels.thread_count()
    jobs = list(zip(chunks, seeds))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as ex:
            accs = list(ex.map(work, jobs))
    else:
        accs = [work(j) for j in jobs]
    total = accs[0]
    for a in accs[1:]:
        total.merge(a)
    return total


def estimate_branch_montecarlo(p: Dmc, g: Quasigroup, s, samples: int, seed: int,
                               partitions=None, delta: float = DEFAULT_DELTA) -> BranchReport:
    """Sampling estimate of I(P^s) and, per partition, I(P^s[H]) and Z(P^s[H])."""
    _check(p, g)
    s = SignSequence.parse(s)
    if samples < 1:
        raise ValueError("samples must be positive")
    if partitions is None:
        partitions = survey_partitions(g)
    acc = _mc_run(p, g, len(s), samples, seed, partitions, signs=s.signs)
    info, stats, se = acc.results(0)
    return _report(s, info, stats, delta, "montecarlo", samples, info_stderr=se)


@dataclass
class SurveyResult:
    reports: list
    partitions: list
    delta: float
    n: int
    mode: str
    base_info: float

    @property
    def classified_fraction(self) -> float:
        return float(np.mean([r.matched_partition is not None for r in self.reports]))

    @property
    def mean_info(self) -> float:
        return float(np.mean([r.mutual_info for r in self.reports]))

    @property
    def rate_sum(self) -> float:
        """Mean of log2|H| over branches (zero for unclassified ones)."""
        return float(np.mean([np.log2(r.matched_partition.block_count) if r.matched_partition is not None else 0.0
                              for r in self.reports]))


def survey(p: Dmc, g: Quasigroup, n: int, mode: str = "exact", delta: float = DEFAULT_DELTA,
           branch_sample: Optional[int] = None, seed: int = 0, samples: int = 10_000,
           partitions=None, max_outputs: int = MAX_OUTPUTS, tol: float = DEFAULT_TOL,
           prefer: str = "largest") -> SurveyResult:
    """One report per branch (all 2^n, or a seeded uniform subset in Monte Carlo mode)."""
    _check(p, g)
    if partitions is None:
        partitions = survey_partitions(g)
    base = mutual_information(p)
    if mode == "exact":
        reports = []

        def walk(ch, prefix):
            if len(prefix) == n:
                s = SignSequence(tuple(prefix))
                reports.append(_report(s, mutual_information(ch), _exact_stats(ch, partitions), delta, "exact",
                                       prefer=prefer))
                return
            for b in (0, 1):
                walk(transform(ch, g, b, tol=tol, max_outputs=max_outputs, step=len(prefix) + 1), prefix + [b])

        walk(p, [])
        reports.sort(key=lambda r: r.index)
        return SurveyResult(reports, list(partitions), delta, n, mode, base)
    if mode not in ("mc", "montecarlo"):
        raise ValueError(f"unknown survey mode {mode!r}")
    total = 1 << n
    if branch_sample is None or branch_sample >= total:
        nodes = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        nodes = np.sort(rng.choice(total, size=branch_sample, replace=False))
    acc = _mc_run(p, g, n, samples, seed, partitions, nodes=nodes)
    reports = []
    for j, idx in enumerate(nodes):
        info, stats, se = acc.results(j)
        reports.append(_report(SignSequence.from_index(int(idx), n), info, stats, delta, "montecarlo", samples,
                               prefer=prefer, info_stderr=se))
    return SurveyResult(reports, list(partitions), delta, n, "montecarlo", base)
