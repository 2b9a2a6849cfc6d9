import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qauction.allocation import AuctionConfig
from qauction.bidlang import BidSuperposition, synthesize_operator
from qauction.search import (
    Scheme,
    SearchSchedule,
    d_hamming,
    d_permuted,
    driver_phases,
    probe_pass_probability,
    probe_test,
    run_null_check,
    run_search,
    subspace_indices,
    subspace_reference_search,
)
from qauction.statevec import UnitaryMatrix
from conftest import two_term, within_3sigma

# dense Kronecker oracle values, 2 bidders bidding 2 and 3, permuted driver, delta 1
HONEST_S10 = {0: 0.0423053633396, 3: 0.648589938758, 8: 0.266799334563, 11: 0.0423053633396}
HONEST_S100 = {0: 0.000161631679339, 3: 0.996085906164, 8: 0.00359083047684, 11: 0.000161631679339}
DEVIANT_S1000 = {0: 0.406495934105, 3: 3.94289024133e-06, 8: 0.12754497201, 11: 0.465955150994}
DEVIANT_S1000_HAMMING = {0: 3.1671770351e-05, 3: 1.01916618925e-06, 8: 0.999950736483, 11: 1.65725804134e-05}


def ops_for(config, prices, minus=()):
    lang = config.language
    plus = [synthesize_operator(two_term((j,), lang.bid(p)), lang) for j, p in enumerate(prices)]
    init = [synthesize_operator(two_term((j,), lang.bid(p), minus=True), lang) if j in minus else plus[j]
            for j, p in enumerate(prices)]
    return init, plus


def assert_dist(got, expect, tol=1e-10):
    for x, p in expect.items():
        assert abs(got.get(x, 0.0) - p) <= tol, (x, got.get(x), p)


def test_schedule_validation():
    with pytest.raises(ValueError):
        SearchSchedule(-1)
    with pytest.raises(ValueError):
        SearchSchedule(10, 0.0)
    with pytest.raises(ValueError):
        SearchSchedule(10, 4.0)
    assert SearchSchedule(10, np.pi).delta == np.pi


def test_driver_examples():
    n, b = 3, 2
    assert d_permuted(0, n, b) == 0
    assert d_permuted(0b00_10_00, n, b) == n
    for k, x in enumerate([0, 0b01_00_00, 0b01_10_00, 0b01_10_11]):
        if k:
            assert d_permuted(x, n, b) == n + 1 - k
    assert d_hamming(0b1011) == 3


@pytest.mark.parametrize("scheme", list(Scheme))
def test_driver_table_matches_scalars(scheme):
    cfg = AuctionConfig.single_item(3, 2)
    table = driver_phases(cfg.layout, scheme)
    assert table[0] == 0 and table.max() == 1.0
    if scheme is Scheme.PERMUTED:
        assert all(table[x] * 3 == d_permuted(x, 3, 2) for x in range(64))


def test_honest_frozen_distributions(cfg22, backend):
    init, ops = ops_for(cfg22, [2, 3])
    assert_dist(run_search(init, ops, SearchSchedule(10), cfg22).distribution, HONEST_S10)
    res = run_search(init, ops, SearchSchedule(100), cfg22)
    assert_dist(res.distribution, HONEST_S100)
    assert res.distribution[3] >= 0.9


def test_deviant_frozen_distributions(cfg22, backend):
    init, ops = ops_for(cfg22, [2, 3], minus=(0,))
    assert_dist(run_search(init, ops, SearchSchedule(1000), cfg22).distribution, DEVIANT_S1000)
    ham = run_search(init, ops, SearchSchedule(1000, scheme=Scheme.HAMMING), cfg22)
    assert_dist(ham.distribution, DEVIANT_S1000_HAMMING)


def test_excluded_null_subspace_single_outcome(cfg22):
    lang = cfg22.language
    a = synthesize_operator(two_term((0,), lang.bid(2)), lang)
    b_only = synthesize_operator(BidSuperposition(((lang.bid(3), 1.0),), (1,)), lang)
    for S in (1, 37, 400):
        res = run_search([a, b_only], [a, b_only], SearchSchedule(S), cfg22)
        assert set(res.distribution) <= {3, 11}  # bidder 2 wins or nobody does
    res = run_search([a, b_only], [a, b_only], SearchSchedule(2000), cfg22)
    assert res.distribution[3] >= 0.99


def test_all_exclude_null_means_no_winner(cfg22):
    lang = cfg22.language
    ops = [synthesize_operator(BidSuperposition(((lang.bid(p), 1.0),), (j,)), lang) for j, p in enumerate([2, 3])]
    res = run_search(ops, ops, SearchSchedule(200), cfg22)
    assert res.distribution == {11: pytest.approx(1.0, abs=1e-12)}


def test_transcript_shape(cfg22):
    init, ops = ops_for(cfg22, [2, 3])
    res = run_search(init, ops, SearchSchedule(3), cfg22)
    actions = [e["action"] for e in res.transcript if e["step"] == 2]
    assert actions == ["phase_cost", "apply_adjoint", "apply_adjoint", "phase_driver", "apply", "apply"]
    assert abs(res.transcript[-1]["norm"] - 1) <= 1e-12
    assert res.transcript[-1]["f"] == 1.0


def test_zero_steps_returns_initial_state(cfg22):
    init, ops = ops_for(cfg22, [2, 3], minus=(0,))
    res = run_search(init, ops, SearchSchedule(0), cfg22)
    assert np.array_equal(res.final_state.amplitudes, res.initial_state.amplitudes)


def test_degenerate_flag(cfg22):
    init, ops = ops_for(cfg22, [3, 3])
    assert run_search(init, ops, SearchSchedule(5), cfg22).degenerate
    init, ops = ops_for(cfg22, [2, 3])
    assert not run_search(init, ops, SearchSchedule(5), cfg22).degenerate


def test_step_dependent_ops_match_static(cfg22, backend):
    init, ops = ops_for(cfg22, [1, 3])
    a = run_search(init, ops, SearchSchedule(40), cfg22).final_state.amplitudes
    b = run_search(init, lambda s: (ops, ops), SearchSchedule(40), cfg22).final_state.amplitudes
    assert np.array_equal(a, b)


def test_observer_sees_every_step(cfg22):
    init, ops = ops_for(cfg22, [1, 3])
    seen = []
    run_search(init, ops, SearchSchedule(7), cfg22, observer=lambda s, psi: seen.append(s))
    assert seen == list(range(8))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), S=st.integers(1, 60), scheme=st.sampled_from(list(Scheme)))
def test_norm_preserved_for_random_ops(seed, S, scheme):
    rng = np.random.default_rng(seed)
    cfg = AuctionConfig.single_item(3, 2)
    init = [UnitaryMatrix.random(4, rng, (j,)) for j in range(3)]
    ops = [UnitaryMatrix.random(4, rng, (j,)) for j in range(3)]
    res = run_search(init, ops, SearchSchedule(S, float(rng.uniform(0.1, np.pi)), scheme), cfg)
    assert np.max(np.abs(res.norms - 1)) <= 1e-9


def test_null_check(backend):
    cfg = AuctionConfig.single_item(3, 2)
    lang = cfg.language
    ops = [synthesize_operator(two_term((j,), lang.bid(p)), lang) for j, p in enumerate([1, 2, 3])]
    honest = run_null_check(ops, SearchSchedule(1000), cfg, np.random.default_rng(0))
    assert honest.search.distribution.get(0, 0) >= 0.9 and honest.outcome == 0 and not honest.excluded
    ops[1] = synthesize_operator(BidSuperposition.uniform([lang.bid(2), lang.bid(3)], (1,)), lang)
    res = run_null_check(ops, SearchSchedule(1000), cfg, np.random.default_rng(0))
    assert 1 in res.excluded and res.flag_probabilities[1] >= 0.9


def test_null_check_single_bidder():
    cfg = AuctionConfig.single_item(1, 2)
    op = synthesize_operator(two_term((0,), cfg.language.bid(2)), cfg.language)
    assert run_null_check([op], SearchSchedule(500), cfg, np.random.default_rng(1)).outcome == 0


def test_probe_identity_and_orthogonal(rng):
    claimed = UnitaryMatrix.random(4, rng)
    v = UnitaryMatrix.random(4, rng)
    out = [probe_test(claimed, claimed, v, rng) for _ in range(200)]
    assert all(o.passed for o in out) and abs(out[0].analytic_pass_prob - 1) <= 1e-12
    # actual sends phi to V|1>, orthogonal to phi
    swap = np.eye(4)[:, [1, 0, 2, 3]]
    actual = UnitaryMatrix(v.matrix @ swap @ v.adjoint @ claimed.matrix)
    out = [probe_test(claimed, actual, v, rng) for _ in range(200)]
    assert not any(o.passed for o in out) and out[0].analytic_pass_prob <= 1e-12


def test_probe_phase_flip_frequency():
    g = np.random.default_rng(77)
    claimed = UnitaryMatrix.random(4, g)
    actual = UnitaryMatrix(claimed.matrix @ np.diag([1, 1, -1, 1]))
    v = UnitaryMatrix(np.fft.fft(np.eye(4)) / 2)
    phi = v.matrix[:, 0]
    alpha = np.vdot(phi, actual.matrix @ claimed.adjoint @ phi)
    p = probe_pass_probability(claimed.matrix, actual.matrix, v.matrix)
    assert abs(p - abs(alpha) ** 2) <= 1e-12 and p < 1
    hits = sum(probe_test(claimed, actual, v, g).passed for _ in range(10000))
    assert within_3sigma(hits, 10000, p)


def test_probe_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        probe_test(UnitaryMatrix.random(4, rng), UnitaryMatrix.random(2, rng), UnitaryMatrix.random(4, rng), rng)


@pytest.mark.parametrize("bids", [(b1, b2) for b1 in (1, 2, 3) for b2 in (1, 2, 3)])
def test_subspace_reference_equivalence(bids, cfg22, backend):
    lang = cfg22.language
    ops = [synthesize_operator(two_term((j,), lang.bid(p)), lang) for j, p in enumerate(bids)]
    sched = SearchSchedule(120, 1.0, Scheme.DIGIT_COUNT)
    idx = subspace_indices(cfg22.layout, bids)
    outside = np.ones(16, bool)
    outside[idx] = False
    leaks = []
    full = run_search(ops, ops, sched, cfg22,
                      observer=lambda s, psi: leaks.append(np.abs(psi[outside]).max()))
    ref = subspace_reference_search(ops, bids, sched, cfg22)
    assert max(leaks) == 0.0
    assert np.max(np.abs(full.final_state.probabilities[idx] - np.abs(ref.amplitudes) ** 2)) <= 1e-9


def test_subspace_reference_single_bidder():
    cfg = AuctionConfig.single_item(1, 2)
    op = synthesize_operator(two_term((0,), cfg.language.bid(3)), cfg.language)
    ref = subspace_reference_search([op], [3], SearchSchedule(2000, 1.0, Scheme.DIGIT_COUNT), cfg)
    assert ref.distribution[3] >= 0.99


def test_subspace_reference_rejects_mixing_operator(cfg22, rng):
    ops = [UnitaryMatrix.random(4, rng, (j,)) for j in range(2)]
    with pytest.raises(ValueError, match="mixes"):
        subspace_reference_search(ops, [1, 2], SearchSchedule(5, 1.0, Scheme.DIGIT_COUNT), cfg22)


def test_subspace_reference_rejects_hamming(cfg22):
    lang = cfg22.language
    ops = [synthesize_operator(two_term((j,), lang.bid(1)), lang) for j in range(2)]
    with pytest.raises(ValueError):
        subspace_reference_search(ops, [1, 1], SearchSchedule(5, 1.0, Scheme.HAMMING), cfg22)


def test_phase_maps_trivial_at_endpoints(cfg22):
    # f = 1 leaves only the cost phase and f = 0 only the driver phase
    from qauction.search import PackedStep, cost_phases

    ident = [UnitaryMatrix.identity(4, (j,)) for j in range(2)]
    packed = PackedStep.build(ident, ident, cfg22.layout)
    psi = np.full(16, 0.25, complex)
    c, d = cost_phases(cfg22), driver_phases(cfg22.layout, Scheme.PERMUTED)
    at1 = packed.step(psi.copy(), c, d, 1.0, 1.0)
    assert np.allclose(at1, psi * np.exp(-1j * c), atol=1e-15)
    at0 = packed.step(psi.copy(), c, d, 0.0, 1.0)
    assert np.allclose(at0, psi * np.exp(-1j * d), atol=1e-15)
