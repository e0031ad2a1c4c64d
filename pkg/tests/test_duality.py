import numpy as np
import pytest

from bdcat import (
    CEMETERY,
    DegenerateDenominator,
    Generator,
    HypothesisViolated,
    NotMonotone,
    RateSchedule,
    absorption_ratios_from_tail,
    build_generator,
    detailed_balance_product,
    dual_stationary_from_absorption,
    siegmund_dual,
    solve_absorption,
    solve_stationary_tail,
    stationary_distribution,
    tail_ratios_from_absorption,
    verify_bar_identity,
    verify_duality,
    verify_ratio_identities,
    first_passage_prob,
)

from conftest import rand_sched


def _max_rate_diff(g1, g2):
    assert set(g1.states) == set(g2.states)
    worst = 0.0
    for s in g1.states:
        for t in g1.states:
            if s != t:
                worst = max(worst, abs(g1.rate(s, t) - g2.rate(s, t)))
    return worst


def test_dual_of_killed_matches_table():
    rng = np.random.default_rng(201)
    for _ in range(10):
        s = rand_sched(rng, nmax=20)
        x = build_generator("killed", s)
        dual = siegmund_dual(x)
        # 0 is isolated (and no cemetery arises: the dual rows conserve)
        assert 0 in dual.meta["isolated"]
        assert not dual.has_cemetery
        built = build_generator("killed_dual", s)
        assert _max_rate_diff(dual.drop_isolated(), built) <= 1e-12


def test_dual_of_catastrophe_matches_table():
    rng = np.random.default_rng(202)
    for _ in range(10):
        s = rand_sched(rng, nmax=20)
        z = build_generator("catastrophe", s)
        dual = siegmund_dual(z)
        built = build_generator("catastrophe_dual", s)
        assert dual.has_cemetery
        assert _max_rate_diff(dual, built) <= 1e-12


def test_dual_detects_non_monotone_chain():
    # a long downward jump with no mass pushed from the state below
    toy = Generator((0, 1, 2), {2: {0: 1.0}})
    with pytest.raises(NotMonotone) as err:
        siegmund_dual(toy)
    assert err.value.witness == (1, 2)


def test_dual_of_dual_recovers_shifted_killed_chain():
    rng = np.random.default_rng(203)
    for _ in range(6):
        s = rand_sched(rng, nmax=20)
        n = s.extent.n
        x = build_generator("killed", s)
        ddual = siegmund_dual(siegmund_dual(x).drop_isolated())
        # states relabel i -> i+1; the killed chain's 0 becomes absorbing 1
        for i in range(1, n + 1):
            assert ddual.rate(i + 1, i + 2) == pytest.approx(
                i * s.lam(i), abs=1e-12
            )
            assert ddual.rate(i + 1, i) == pytest.approx(i * s.mu(i), abs=1e-12)
            assert ddual.rate(i + 1, CEMETERY) == pytest.approx(
                i * s.kappa, abs=1e-12
            )


def test_duality_pairing_at_zero(micro_sched):
    x = build_generator("killed", micro_sched)
    dual = siegmund_dual(x).drop_isolated()
    rep = verify_duality(x, dual, [0.0], tol=1e-12)
    assert rep.passed and rep.max_discrepancy == 0.0


def test_duality_pairing_micro(micro_sched):
    x = build_generator("killed", micro_sched)
    xd = siegmund_dual(x).drop_isolated()
    rep = verify_duality(x, xd, [0.1, 1.0, 10.0], tol=1e-8)
    assert rep.passed
    z = build_generator("catastrophe", micro_sched)
    zd = siegmund_dual(z)
    rep_z = verify_duality(z, zd, [0.1, 1.0, 10.0], tol=1e-8)
    assert rep_z.passed


def test_duality_subsample_branch():
    s = RateSchedule.from_arrays([1.0] * 69, [1.0] * 70, 0.5, n=70)
    z = build_generator("catastrophe", s)
    zd = siegmund_dual(z)
    rep = verify_duality(z, zd, [0.05], tol=1e-8, seed=1)
    assert rep.n_pairs == 256
    assert rep.passed


def test_duality_long_time_reaches_absorption_split(micro_sched):
    # as t grows, P(X_t >= x*) tends to the kill probability 1 - b_x
    import bdcat

    x = build_generator("killed", micro_sched)
    b = solve_absorption(micro_sched)
    v = bdcat.transient_distribution(x, 200.0, {2: 1.0})
    kill_mass = v[x.index(CEMETERY)]
    assert kill_mass == pytest.approx(1 - b[2], abs=1e-10)


def test_dual_stationary_from_absorption_micro(micro_sched):
    b = solve_absorption(micro_sched)
    rho = dual_stationary_from_absorption(b)
    assert rho.lo == 1
    assert rho.values == pytest.approx([3 / 5, 1 / 5, 1 / 5], abs=1e-12)
    assert rho.values.sum() == pytest.approx(1.0, abs=1e-12)


def test_dual_stationary_matches_solver():
    rng = np.random.default_rng(204)
    for _ in range(8):
        s = rand_sched(rng, nmax=15)
        rho = dual_stationary_from_absorption(solve_absorption(s))
        w = stationary_distribution(build_generator("killed_dual", s))
        assert np.max(np.abs(rho.values - w.values)) <= 1e-10


def test_dual_stationary_tail_equals_absorption():
    rng = np.random.default_rng(205)
    for _ in range(8):
        s = rand_sched(rng, nmax=15)
        n = s.extent.n
        b = solve_absorption(s)
        w = stationary_distribution(build_generator("killed_dual", s))
        tails = np.cumsum(w.values[::-1])[::-1]
        # P(dual > i) = b_i for i in [0:N]
        for i in range(0, n + 1):
            assert tails[i] == pytest.approx(b[i], abs=1e-10)


def test_catastrophe_dual_absorption_equals_tail():
    rng = np.random.default_rng(206)
    for _ in range(8):
        s = rand_sched(rng, nmax=15)
        n = s.extent.n
        a = solve_stationary_tail(s)
        zs = build_generator("catastrophe_dual", s)
        for i in range(2, n + 1):
            got = first_passage_prob(zs, i, {1})
            assert got == pytest.approx(a[i - 1], abs=1e-10)


def test_ratio_identities_micro(micro_sched):
    a = solve_stationary_tail(micro_sched)
    ratios = absorption_ratios_from_tail(a, micro_sched)
    assert ratios[1] == pytest.approx(1.0)
    assert ratios[2] == pytest.approx(0.5, abs=1e-12)  # b_2 / b_1
    b = solve_absorption(micro_sched)
    back = tail_ratios_from_absorption(b, micro_sched)
    assert back[1] == pytest.approx(1.0)


def test_ratio_closure_randomized():
    rng = np.random.default_rng(207)
    for _ in range(25):
        s = rand_sched(rng, nmax=50)
        rep = verify_ratio_identities(s, tol=1e-9)
        assert rep.passed, rep


def test_absorption_ratios_vanish_past_zero_death():
    s = RateSchedule.from_arrays([1.0, 1.0, 1.0], [1.0, 0.0, 1.0, 1.0], 1.0, n=4)
    a = solve_stationary_tail(s)
    ratios = absorption_ratios_from_tail(a, s)
    assert ratios[2] == 0.0 and ratios[3] == 0.0 and ratios[4] == 0.0


def test_tail_ratios_refuse_zero_death():
    s = RateSchedule.from_arrays([1.0, 1.0], [1.0, 0.0, 1.0], 1.0, n=3)
    b = solve_absorption(s)
    with pytest.raises(HypothesisViolated):
        tail_ratios_from_absorption(b, s)


def test_degenerate_denominator_raises(micro_sched):
    from bdcat.solvers import SolutionVector

    corrupted = SolutionVector(lo=0, values=np.array([1.0, 1.0, 0.0]))
    with pytest.raises(DegenerateDenominator):
        absorption_ratios_from_tail(corrupted, micro_sched)


def test_detailed_balance_product_values(micro_sched):
    assert detailed_balance_product(micro_sched, 1) == 1.0
    assert detailed_balance_product(micro_sched, 2) == pytest.approx(1.0)
    rng = np.random.default_rng(208)
    s = rand_sched(rng, nmax=10, nmin=5)
    want = 1.0
    for j in range(2, 5):
        want *= s.mu(j + 1) / s.lam(j)
    assert detailed_balance_product(s, 5, k=2) == pytest.approx(want)


def test_small_kappa_approaches_detailed_balance():
    # with negligible collapse intensity, the stationary ratios of the
    # catastrophe chain approach the reversible birth-death form
    rng = np.random.default_rng(209)
    lam = rng.uniform(0.5, 2.0, size=5)
    mu = rng.uniform(0.5, 2.0, size=6)
    s = RateSchedule.from_arrays(lam, mu, 1e-7, n=6)
    w = stationary_distribution(build_generator("catastrophe", s))
    for i in range(1, 6):
        assert w[i + 1] / w[i] == pytest.approx(
            s.lam(i) / s.mu(i + 1), rel=1e-5
        )


def test_bar_identity_micro(micro_sched):
    rep = verify_bar_identity(micro_sched, tol=1e-9)
    assert rep.passed


def test_bar_identity_randomized():
    rng = np.random.default_rng(210)
    for _ in range(10):
        s = rand_sched(rng, nmax=20)
        assert verify_bar_identity(s, tol=1e-9).passed
