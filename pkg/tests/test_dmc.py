import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channel
from qpolar.algebra import BalancedPartition, cyclic_group, enumerate_stable_partitions
from qpolar.dmc import (Dmc, bec, bhattacharyya, canonicalize, channel_stats, channels_equivalent,
                        identity_channel, ml_decode, ml_error_probability, mutual_information,
                        posterior_partition_score, project_channel, useless_channel)
from qpolar.errors import PartitionMismatch, ValidationError
from qpolar.polarize import minus_transform, projected_transforms, divided_partition


def test_constructor_validation():
    with pytest.raises(ValidationError):
        Dmc([[0.5, 0.6]])
    with pytest.raises(ValidationError):
        Dmc([[-0.1, 1.1]])
    with pytest.raises(ValidationError):
        Dmc(np.zeros((0, 2)))


def test_mutual_information_examples():
    assert mutual_information(identity_channel(4)) == pytest.approx(2.0, abs=1e-12)
    assert mutual_information(useless_channel(3)) == pytest.approx(0.0, abs=1e-12)
    assert mutual_information(bec(0.5)) == pytest.approx(0.5, abs=1e-12)


def test_bhattacharyya_examples():
    assert bhattacharyya(identity_channel(3)) == 0.0
    assert bhattacharyya(useless_channel(3)) == pytest.approx(1.0)
    for e in (0.1, 0.37, 0.9):
        assert bhattacharyya(bec(e)) == pytest.approx(e, abs=1e-12)


def test_projection_examples():
    p = identity_channel(4)
    assert np.allclose(project_channel(p, BalancedPartition.singletons(4)).prob, p.prob)
    w = project_channel(p, BalancedPartition.whole(4))
    assert w.input_size == 1 and mutual_information(w) == pytest.approx(0.0)
    h = BalancedPartition.from_blocks([[0, 2], [1, 3]], 4)
    assert mutual_information(project_channel(p, h)) == pytest.approx(1.0)
    with pytest.raises(PartitionMismatch):
        project_channel(p, BalancedPartition.singletons(2))


def test_ml_decode_and_error():
    assert [ml_decode(identity_channel(3), y) for y in range(3)] == [0, 1, 2]
    assert ml_decode(useless_channel(3), 0) == 0
    assert ml_decode(bec(0.3), 2) == 0
    assert ml_error_probability(identity_channel(3)) == 0.0
    assert ml_error_probability(useless_channel(2)) == pytest.approx(0.5)
    assert ml_error_probability(bec(0.3)) == pytest.approx(0.15)


def test_canonicalize_examples():
    p = identity_channel(3)
    c = canonicalize(p, 0)
    assert np.array_equal(c.prob, p.prob)
    dup = Dmc([[0.3, 0.3, 0.4], [0.1, 0.1, 0.8]])
    c = canonicalize(dup)
    assert c.output_size == 2
    assert mutual_information(c) == pytest.approx(mutual_information(dup), abs=1e-12)
    zero = Dmc([[0.5, 0.0, 0.5], [0.2, 0.0, 0.8]])
    assert canonicalize(zero).output_size == 2


def test_posterior_partition_score_examples():
    assert posterior_partition_score(identity_channel(4), BalancedPartition.singletons(4), 0.1) == pytest.approx(1)
    assert posterior_partition_score(useless_channel(4), BalancedPartition.whole(4), 0.1) == pytest.approx(1)
    assert posterior_partition_score(bec(0.3), BalancedPartition.singletons(2), 0.1) == pytest.approx(0.7)


def test_equivalence_examples(rng):
    p = random_channel(rng, 3, 5)
    perm = rng.permutation(5)
    assert channels_equivalent(p, Dmc(p.prob[:, perm]))
    assert not channels_equivalent(identity_channel(3), useless_channel(3))
    g = cyclic_group(4)
    for sp in enumerate_stable_partitions(g):
        q = random_channel(rng, 4, 3)
        pm, _ = projected_transforms(q, sp, g)
        assert channels_equivalent(pm, project_channel(minus_transform(q, g, canonical=False),
                                                       divided_partition(sp, g)))


def test_channel_stats_bundle():
    s = channel_stats(bec(0.2))
    assert s.mutual_info == pytest.approx(0.8) and s.bhattacharyya == pytest.approx(0.2)


# ---------------------------------------------------------------- properties

channels = st.builds(lambda seed, nx, ny: random_channel(np.random.default_rng(seed), nx, ny, 0.4),
                     st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 6))


@settings(max_examples=100, deadline=None)
@given(channels)
def test_stat_ranges(p):
    i = mutual_information(p)
    z = bhattacharyya(p)
    assert -1e-12 <= i <= np.log2(p.input_size) + 1e-12
    assert 0 <= z <= 1
    assert ml_error_probability(p) <= p.input_size * z + 1e-12


@settings(max_examples=60, deadline=None)
@given(channels)
def test_canonicalize_idempotent_and_preserving(p):
    tol = 1e-9
    c = canonicalize(p, tol)
    assert np.allclose(c.prob.sum(axis=1), 1, atol=1e-9)
    c2 = canonicalize(c, tol)
    assert c2.output_size == c.output_size
    assert np.allclose(c2.prob, c.prob, atol=1e-12)
    assert abs(mutual_information(c) - mutual_information(p)) < 10 * tol
    assert abs(bhattacharyya(c) - bhattacharyya(p)) < 10 * tol


def test_z_zero_iff_disjoint_supports(rng):
    p = Dmc([[0.5, 0.5, 0, 0], [0, 0, 0.3, 0.7]])
    assert bhattacharyya(p) == 0.0
    q = Dmc([[0.5, 0.5, 0, 0], [0, 0.01, 0.29, 0.7]])
    assert bhattacharyya(q) > 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_projected_information_matches_joint(seed):
    rng = np.random.default_rng(seed)
    p = random_channel(rng, 4, 4)
    h = BalancedPartition.from_blocks([[0, 3], [1, 2]], 4)
    # I(block(X); Y) from the joint distribution of (block, Y)
    joint = np.zeros((2, 4))
    for x in range(4):
        joint[h.block_of[x]] += p.prob[x] / 4
    pb, py = joint.sum(1), joint.sum(0)
    m = joint > 0
    direct = np.sum(joint[m] * np.log2(joint[m] / np.outer(pb, py)[m]))
    assert mutual_information(project_channel(p, h)) == pytest.approx(direct, abs=1e-12)
    assert np.allclose(project_channel(p, h).prob.sum(axis=1), 1)
