import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpolar import gf
from qpolar.errors import AlphabetTooLarge, AmbientMismatch, LatticeTooLarge, ValidationError
from qpolar.linmac import (LinearMixture, Subspace, binary_branch_states, binary_evolve, binary_step,
                           binary_subspaces, closure, intersect, is_consistent, lin_minus, lin_plus,
                           lin_rate_region, loss_report, mixture_from_state, proj, state_from_mixture,
                           subspace_sum, sufficient_preservation, to_dmc)
from qpolar.macpolar import mac_minus, mac_plus, rate_region

V0, V1, V2, V3, V4 = binary_subspaces()
SUBSETS = [(0,), (1,), (0, 1)]


def random_state(rng, conc=1.0):
    return rng.dirichlet(np.full(5, conc))


def random_subspace(rng, q, m):
    k = int(rng.integers(0, m + 1))
    return Subspace(q, m, rng.integers(0, q, size=(k, m)))


# ---------------------------------------------------------------- subspaces


def test_subspace_examples():
    assert intersect(V1, V2) == V0
    assert subspace_sum(V1, V2) == V4
    assert proj(V3, [0]) == Subspace.full(2, 1)
    for v in binary_subspaces():
        assert intersect(v, v) == v and subspace_sum(v, v) == v


def test_canonical_form():
    assert Subspace(2, 3, [[1, 1, 0], [0, 1, 1]]) == Subspace(2, 3, [[1, 0, 1], [1, 1, 0], [0, 1, 1]])
    assert Subspace(3, 2, [[2, 2]]) == Subspace(3, 2, [[1, 1]])
    assert Subspace(3, 2, [[1, 2]]) != Subspace(3, 2, [[1, 1]])
    assert Subspace(5, 2, [[0, 0]]).dim == 0


def test_ambient_mismatch():
    with pytest.raises(AmbientMismatch):
        intersect(Subspace(2, 2), Subspace(3, 2))
    with pytest.raises(AmbientMismatch):
        subspace_sum(Subspace(2, 2), Subspace(2, 3))
    with pytest.raises(AmbientMismatch):
        proj(V3, [2])


def test_elements_match_brute_force(rng):
    for _ in range(20):
        q = int(rng.choice([2, 3, 5]))
        v = random_subspace(rng, q, 3)
        brute = {tuple((np.array(c) @ v.basis) % q) for c in itertools.product(range(q), repeat=v.dim)}
        assert {tuple(e) for e in v.elements()} == brute


@settings(max_examples=80, deadline=None)
@given(st.sampled_from([2, 3, 5]), st.integers(1, 4), st.integers(0, 10**6))
def test_dimension_formula(q, m, seed):
    rng = np.random.default_rng(seed)
    a, b = random_subspace(rng, q, m), random_subspace(rng, q, m)
    assert subspace_sum(a, b).dim == a.dim + b.dim - intersect(a, b).dim
    # intersection by explicit element sets
    if q ** m <= 125:
        ea = {tuple(e) for e in a.elements()}
        eb = {tuple(e) for e in b.elements()}
        assert {tuple(e) for e in intersect(a, b).elements()} == ea & eb


# ---------------------------------------------------------------- mixtures


def test_mixture_validation():
    with pytest.raises(ValidationError):
        LinearMixture.build(2, 2, [(0.5, V1), (0.4, V3)])
    with pytest.raises(ValidationError):
        LinearMixture.build(2, 2, [(-0.5, V1), (1.5, V3)])
    merged = LinearMixture.build(2, 2, [(0.25, V1), (0.5, V3), (0.25, [[1, 0]])])
    assert merged.weight_of(V1) == 0.5 and len(merged.components) == 2


def test_rate_examples():
    assert lin_rate_region(LinearMixture.build(2, 2, [(1.0, V4)]), (0, 1)) == 2
    assert lin_rate_region(LinearMixture.build(2, 2, [(1.0, V3)]), (0,)) == 1
    half = LinearMixture.build(2, 2, [(0.5, V1), (0.5, V3)])
    assert lin_rate_region(half, (0,)) == pytest.approx(1.0)


def test_transform_examples():
    single = LinearMixture.build(2, 2, [(1.0, V3)])
    assert lin_minus(single) == single and lin_plus(single) == single
    half = LinearMixture.build(2, 2, [(0.5, V1), (0.5, V3)])
    m, p = lin_minus(half), lin_plus(half)
    assert [m.weight_of(v) for v in (V0, V1, V3)] == [0.5, 0.25, 0.25]
    assert [p.weight_of(v) for v in (V4, V1, V3)] == [0.5, 0.25, 0.25]
    full = (0, 1)
    assert lin_rate_region(m, full) + lin_rate_region(p, full) == pytest.approx(2 * lin_rate_region(half, full))


def test_to_dmc_examples():
    perfect = to_dmc(LinearMixture.build(2, 2, [(1.0, V4)]))
    assert np.array_equal(perfect.prob, np.eye(4))
    useless = to_dmc(LinearMixture.build(2, 2, [(1.0, V0)]))
    assert useless.prob.shape == (4, 1)
    half = LinearMixture.build(2, 2, [(0.5, V1), (0.5, V3)])
    r = rate_region(to_dmc(half))
    for s in SUBSETS:
        assert r[s] == pytest.approx(lin_rate_region(half, s), abs=1e-9)
    with pytest.raises(AlphabetTooLarge):
        to_dmc(LinearMixture.build(2, 13, [(1.0, Subspace.full(2, 13))]))


def test_to_dmc_base_q_units(rng):
    # rate_region is in bits; the linear formula is in base-q units
    for _ in range(5):
        comps = [(w, random_subspace(rng, 3, 2)) for w in rng.dirichlet(np.ones(3))]
        ch = LinearMixture.build(3, 2, comps)
        r = rate_region(to_dmc(ch))
        for s in SUBSETS:
            assert r[s] / np.log2(3) == pytest.approx(lin_rate_region(ch, s), abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_oracle_equivalence_two_steps(seed):
    rng = np.random.default_rng(seed)
    ch = mixture_from_state(random_state(rng, 0.7))
    lin_level, mac_level = [ch], [to_dmc(ch)]
    for _ in range(2):
        lin_level = [f(c) for c in lin_level for f in (lin_minus, lin_plus)]
        mac_level = [f(c) for c in mac_level for f in (mac_minus, mac_plus)]
        for lc, mc in zip(lin_level, mac_level):
            r = rate_region(mc)
            for s in SUBSETS:
                assert r[s] == pytest.approx(lin_rate_region(lc, s), abs=1e-9)


def test_binary_step_matches_pair_expansion(rng):
    for _ in range(30):
        p = random_state(rng, 0.5)
        ch = mixture_from_state(p)
        assert np.allclose(binary_step(p, 0), state_from_mixture(lin_minus(ch)), atol=1e-14)
        assert np.allclose(binary_step(p, 1), state_from_mixture(lin_plus(ch)), atol=1e-14)


# ---------------------------------------------------------------- closure / consistency


def test_closure_examples():
    assert closure([V4]) == [V4]
    assert set(closure([V1, V2])) == {V0, V1, V2, V4}
    assert set(closure([V1, V3])) == {V0, V1, V3, V4}
    with pytest.raises(ValidationError):
        closure([])
    with pytest.raises(LatticeTooLarge):
        closure([Subspace(2, 3, [[1, 0, 0]]), Subspace(2, 3, [[0, 1, 0]]), Subspace(2, 3, [[0, 0, 1]]),
                 Subspace(2, 3, [[1, 1, 1]])], bound=5)


def test_closure_is_closed(rng):
    vs = [random_subspace(rng, 2, 3) for _ in range(3)]
    cl = set(closure(vs))
    assert set(vs) <= cl
    for a in cl:
        for b in cl:
            assert intersect(a, b) in cl and subspace_sum(a, b) in cl


def test_consistency_examples():
    assert is_consistent([V3], (0,)) == (True, None)
    ok, wit = is_consistent([V1, V3], (0,))
    assert not ok
    a, b = wit
    assert proj(intersect(a, b), (0,)) != intersect(proj(a, (0,)), proj(b, (0,)))
    assert {a, b} == {V1, V3}
    assert is_consistent([V1, V3], (1,)) == (True, None)


def test_sufficient_preservation_examples():
    assert sufficient_preservation([V3], (0,)) == V3
    assert sufficient_preservation([V4], (0, 1)) == V4
    assert sufficient_preservation([V1, V3], (0,)) is None


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=4, unique=True), st.integers(0, 2))
def test_sufficient_witness_implies_consistency(idx, si):
    vs = [binary_subspaces()[i] for i in idx]
    s = SUBSETS[si]
    if sufficient_preservation(vs, s) is not None:
        assert is_consistent(vs, s)[0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=4, unique=True), st.integers(0, 2), st.integers(0, 10**6))
def test_consistency_means_preserved_rate(idx, si, seed):
    vs = [binary_subspaces()[i] for i in idx]
    s = SUBSETS[si]
    rng = np.random.default_rng(seed)
    ch = LinearMixture.build(2, 2, zip(rng.dirichlet(np.ones(len(vs))), vs))
    if is_consistent(vs, s)[0]:
        # preserved through two levels of transforms
        level = [ch]
        for _ in range(2):
            level = [f(c) for c in level for f in (lin_minus, lin_plus)]
        avg = np.mean([lin_rate_region(c, s) for c in level])
        assert avg == pytest.approx(lin_rate_region(ch, s), abs=1e-12)


def test_strict_loss_for_inconsistent_pair():
    half = LinearMixture.build(2, 2, [(0.5, V1), (0.5, V3)])
    before = 2 * lin_rate_region(half, (0,))
    after = lin_rate_region(lin_minus(half), (0,)) + lin_rate_region(lin_plus(half), (0,))
    assert before > after + 0.1


# ---------------------------------------------------------------- binary evolution


def test_binary_step_examples():
    top = np.array([0, 0, 0, 0, 1.0])
    assert np.array_equal(binary_step(top, 0), top) and np.array_equal(binary_step(top, 1), top)
    p = np.array([0, 0.25, 0.25, 0.5, 0])
    assert binary_step(p, 0)[3] == pytest.approx(0.25)
    assert binary_step(p, 1)[3] == pytest.approx(0.25)
    ev = binary_evolve(p, 1)
    assert ev.trajectory[1, 3] == pytest.approx(0.25)


def test_vertex_states_are_fixed():
    for k in range(5):
        e = np.eye(5)[k]
        for sign in (0, 1):
            if k in (0, 4):
                assert np.array_equal(binary_step(e, sign), e)
        assert binary_step(e, 0)[k] + binary_step(e, 1)[k] >= 1.0


def test_log_states_match_linear(rng):
    p = random_state(rng)
    lin = binary_branch_states(p, 6, log=False)
    lg = np.exp(binary_branch_states(p, 6, log=True))
    assert np.allclose(lin, lg, rtol=1e-10, atol=1e-300)
    assert np.allclose(lin.sum(axis=1), 1.0)


def test_branch_states_indexing():
    p = np.array([0.1, 0.2, 0.3, 0.15, 0.25])
    s = binary_branch_states(p, 2, log=False)
    # sign i occupies bit 2^(i-1); bit set means plus
    assert np.allclose(s[0b00], binary_step(binary_step(p, 0), 0))
    assert np.allclose(s[0b01], binary_step(binary_step(p, 1), 0))
    assert np.allclose(s[0b10], binary_step(binary_step(p, 0), 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_step_is_martingale_in_sum_info(seed):
    p = random_state(np.random.default_rng(seed))
    dims = np.array([0, 1, 1, 1, 2])
    avg = (binary_step(p, 0) + binary_step(p, 1)) / 2
    assert avg @ dims == pytest.approx(p @ dims, abs=1e-14)
    assert avg[0] >= p[0] - 1e-15 and avg[4] >= p[4] - 1e-15
    assert np.all(avg[1:4] <= p[1:4] + 1e-15)


def test_exact_evolution_for_small_depth(rng):
    p = random_state(rng)
    ev = binary_evolve(p, 8)
    brute = binary_branch_states(p, 8, log=False).mean(axis=0)
    assert np.allclose(ev.trajectory[-1], brute, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_order_preserved_on_every_branch(seed):
    rng = np.random.default_rng(100 + seed)
    p = random_state(rng)
    order = np.argsort(p[1:4])
    assert len(set(p[1:4])) == 3
    ls = binary_branch_states(p, 10, log=True)[:, 1:4]
    assert np.all(np.argsort(ls, axis=1) == order)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_killing_on_strict_states(seed):
    rng = np.random.default_rng(seed)
    p = random_state(rng)
    # a line weight below another line weight shrinks under both steps relative to the leader
    lo, hi = sorted([1, 2, 3], key=lambda k: p[k])[:2]
    for sign in (0, 1):
        q = binary_step(p, sign)
        if p[lo] < p[hi]:
            assert q[lo] <= q[hi] + 1e-15


def test_loss_report_examples():
    r = loss_report([0, 0, 0, 0, 1.0], 10)
    assert r.isum == pytest.approx(2.0) and not r.numeric_loss_detected
    r = loss_report([0.1, 0.3, 0.1, 0.2, 0.3], 40)
    assert r.analytic_loss_flag and r.numeric_loss_detected
    assert r.isum == pytest.approx(0.3 + 0.1 + 0.2 + 0.6, abs=1e-12)
    # span(11) mass is split between {0} and the full space, so I1 drops by roughly p3/2
    assert r.i1 < 0.3 + 0.2 + 0.3 - 0.05


def test_exploratory_dominant_line_state():
    # p3 above both other lines lies outside the proven loss condition; only reported
    r = loss_report([0, 0.2, 0.2, 0.6, 0], 40)
    assert not r.analytic_loss_flag
    print("p3 after 40 steps:", r.p3_trajectory[-1])


def test_state_validation():
    with pytest.raises(ValidationError):
        loss_report([0.5, 0.5, 0.5, 0, 0])
    with pytest.raises(AmbientMismatch):
        state_from_mixture(LinearMixture.build(3, 2, [(1.0, Subspace.full(3, 2))]))
