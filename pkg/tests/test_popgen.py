import math

import numpy as np
import pytest

from bdcat import (
    DiffusionParams,
    MoranParams,
    ValidationError,
    ancestral_type_prob_diffusion,
    ancestral_type_prob_finite,
    build_generator,
    diffusion_kasg_schedule,
    diffusion_pldasg_schedule,
    diffusion_relations,
    fearnhead_tails,
    finite_relations,
    kasg_schedule,
    moran_forward,
    pldasg_schedule,
    sampling_moment,
    solve_absorption,
    solve_stationary_tail,
    wright_moments,
)
from bdcat.solvers import SolutionVector


def rand_moran(rng, nmax=40, nmin=2):
    return MoranParams(
        n=int(rng.integers(nmin, nmax + 1)),
        s=float(rng.uniform(0.1, 5.0)),
        u=float(rng.uniform(0.1, 5.0)),
        nu0=float(rng.uniform(0.15, 0.85)),
    )


def test_params_validation():
    with pytest.raises(ValidationError):
        MoranParams(n=0, s=1.0, u=1.0, nu0=0.5)
    with pytest.raises(ValidationError):
        MoranParams(n=2, s=1.0, u=0.0, nu0=0.5)
    with pytest.raises(ValidationError):
        MoranParams(n=2, s=1.0, u=1.0, nu0=0.5, nu1=0.6)
    with pytest.raises(ValidationError):
        DiffusionParams(sigma=-1.0, theta=1.0, nu0=0.5)
    p = DiffusionParams(sigma=1.0, theta=1.0, nu0=0.3)
    assert p.nu1 == pytest.approx(0.7)


def test_moran_stationary_micro():
    mf = moran_forward(MoranParams(n=2, s=1.0, u=1.0, nu0=0.5))
    assert mf.pi.values == pytest.approx([3 / 7, 2 / 7, 2 / 7], abs=1e-12)


def test_moran_stationary_symmetry_without_selection():
    # s = 0 with balanced mutation makes the chain symmetric under i <-> N-i
    mf = moran_forward(MoranParams(n=6, s=0.0, u=0.9, nu0=0.5))
    assert np.max(np.abs(mf.pi.values - mf.pi.values[::-1])) <= 1e-12


def test_moran_single_site_mutation_balance():
    u, nu0 = 1.3, 0.25
    mf = moran_forward(MoranParams(n=1, s=2.0, u=u, nu0=nu0))
    assert mf.pi.values == pytest.approx([nu0, 1 - nu0], abs=1e-12)


def test_schedule_values_micro():
    p = MoranParams(n=2, s=1.0, u=1.0, nu0=0.5)
    ks = kasg_schedule(p)
    assert ks.lam(1) == pytest.approx(0.5)
    assert ks.mu(1) == pytest.approx(0.5)
    assert ks.mu(2) == pytest.approx(1.0)
    assert ks.kappa == pytest.approx(0.5)
    pl = pldasg_schedule(p)
    assert pl.mu(2) == pytest.approx(1.5)
    assert ks.lam(2) == 0.0  # boundary factor N - i


def test_sampling_moments_edge_cases():
    mf = moran_forward(MoranParams(n=5, s=0.7, u=0.9, nu0=0.4))
    assert sampling_moment(mf.pi, 0) == 1.0
    assert sampling_moment(mf.pi, 5) == pytest.approx(mf.pi[5])


def test_sampling_moments_equal_absorption_micro():
    p = MoranParams(n=2, s=1.0, u=1.0, nu0=0.5)
    mf = moran_forward(p)
    b = solve_absorption(kasg_schedule(p))
    assert b.values == pytest.approx([1.0, 3 / 7, 2 / 7], abs=1e-12)
    for i in range(0, 3):
        assert sampling_moment(mf.pi, i) == pytest.approx(b[i], abs=1e-12)


def test_sampling_moments_equal_absorption_randomized():
    rng = np.random.default_rng(401)
    for _ in range(20):
        p = rand_moran(rng)
        mf = moran_forward(p)
        b = solve_absorption(kasg_schedule(p))
        for i in range(0, p.n + 1):
            got = sampling_moment(mf.pi, i)
            assert abs(got - b[i]) <= 1e-10


def test_ancestral_type_prob_boundaries():
    p = MoranParams(n=2, s=1.0, u=1.0, nu0=0.5)
    a = solve_stationary_tail(pldasg_schedule(p))
    assert a.values == pytest.approx([1.0, 0.2, 0.0], abs=1e-12)
    assert ancestral_type_prob_finite(a, 0) == pytest.approx(0.0, abs=1e-14)
    assert ancestral_type_prob_finite(a, 1) == pytest.approx(0.4, abs=1e-12)
    assert ancestral_type_prob_finite(a, 2) == pytest.approx(1.0, abs=1e-14)


def test_ancestral_type_prob_neutral_is_linear():
    # tails collapse to the head when there is no selection
    n = 9
    a = SolutionVector(lo=0, values=np.array([1.0] + [0.0] * n))
    for i in range(0, n + 1):
        assert ancestral_type_prob_finite(a, i) == pytest.approx(i / n, abs=1e-14)
    # the unshifted variant breaks exactly these checks
    assert ancestral_type_prob_finite(a, 0, strict_paper=True) != pytest.approx(
        0.0, abs=1e-6
    )


def test_ancestral_type_prob_monotone():
    rng = np.random.default_rng(402)
    for _ in range(5):
        p = rand_moran(rng, nmax=25, nmin=3)
        a = solve_stationary_tail(pldasg_schedule(p))
        g = [ancestral_type_prob_finite(a, i) for i in range(0, p.n + 1)]
        assert g[0] == pytest.approx(0.0, abs=1e-12)
        assert g[-1] == pytest.approx(1.0, abs=1e-12)
        assert all(b >= a_ - 1e-12 for a_, b in zip(g, g[1:]))


def test_wright_moments_uniform_case():
    # sigma = 0, theta*nu = 1 on both sides: the uniform law on [0,1]
    beta = wright_moments(DiffusionParams(sigma=0.0, theta=2.0, nu1=0.5), 8)
    assert beta.values == pytest.approx([1 / (i + 1) for i in range(9)], abs=1e-12)


def test_wright_moments_neutral_closed_form():
    theta, nu1 = 1.7, 0.3
    beta = wright_moments(DiffusionParams(sigma=0.0, theta=theta, nu1=nu1), 10)
    want = [
        np.prod([(theta * nu1 + j) / (theta + j) for j in range(i)])
        for i in range(11)
    ]
    assert np.max(np.abs(beta.values - np.asarray(want))) <= 1e-10


def test_wright_moments_monotone_in_unit_interval():
    beta = wright_moments(DiffusionParams(sigma=3.0, theta=0.8, nu1=0.6), 15)
    assert np.all(np.diff(beta.values) <= 0.0)
    assert np.all(beta.values > 0.0) and beta[0] == 1.0


def test_wright_moments_satisfy_sampling_recursion():
    p = DiffusionParams(sigma=2.0, theta=1.3, nu1=0.45)
    beta = wright_moments(p, 20)
    tn1 = p.theta * p.nu1
    worst = 0.0
    for i in range(1, 19):
        lhs = (i - 1 + p.sigma + p.theta) * beta[i]
        rhs = p.sigma * beta[i + 1] + (i - 1 + tn1) * beta[i - 1]
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    assert worst <= 1e-8


def test_wright_moments_match_absorption_solve():
    # independent route: the unbounded killed chain with the same rates
    p = DiffusionParams(sigma=1.5, theta=0.9, nu1=0.55)
    beta = wright_moments(p, 12)
    b = solve_absorption(diffusion_kasg_schedule(p), tol=1e-12)
    assert all(abs(beta[i] - b[i]) <= 1e-9 for i in range(0, 13))


def test_fearnhead_neutral_short_circuit():
    alpha = fearnhead_tails(DiffusionParams(sigma=0.0, theta=1.0, nu1=0.5))
    assert alpha[0] == 1.0
    assert np.all(alpha.values[1:] == 0.0)


def test_fearnhead_residual_and_envelope():
    p = DiffusionParams(sigma=2.5, theta=1.1, nu1=0.5)
    alpha = fearnhead_tails(p, tol=1e-10)
    assert alpha.residual <= 1e-10
    env = p.sigma / (1.0 + p.theta * p.nu1)
    for i in range(0, min(alpha.hi, 40) + 1):
        assert alpha[i] <= env**i + 1e-12


def test_fearnhead_tails_solve_the_pldasg_chain():
    # cross-route: dense stationary solve of the truncated catastrophe chain
    from bdcat import stationary_distribution

    p = DiffusionParams(sigma=1.0, theta=1.0, nu1=0.5)
    alpha = fearnhead_tails(p, tol=1e-12)
    z = build_generator("catastrophe", diffusion_pldasg_schedule(p), trunc=80)
    w = stationary_distribution(z)
    tails = np.cumsum(w.values[::-1])[::-1]
    for i in range(1, 20):
        assert abs(alpha[i] - tails[i]) <= 1e-8


def test_gamma_boundaries_and_neutrality():
    p = DiffusionParams(sigma=1.0, theta=1.0, nu1=0.5)
    alpha = fearnhead_tails(p, tol=1e-12)
    assert ancestral_type_prob_diffusion(alpha, 0.0) == 0.0
    assert ancestral_type_prob_diffusion(alpha, 1.0) == 1.0
    neutral = fearnhead_tails(DiffusionParams(sigma=0.0, theta=1.0, nu1=0.5))
    for y in (0.0, 0.25, 0.7, 1.0):
        assert ancestral_type_prob_diffusion(neutral, y) == pytest.approx(y)
    # unshifted variant misses the lower boundary
    assert ancestral_type_prob_diffusion(neutral, 0.3, strict_paper=True) \
        != pytest.approx(0.3)


def test_diffusion_relations_reference_point():
    rep = diffusion_relations(DiffusionParams(sigma=1.0, theta=1.0, nu1=0.5),
                              imax=20, tol=1e-8)
    assert rep.passed, rep.errors


def test_diffusion_relations_stress_sigma():
    rep = diffusion_relations(DiffusionParams(sigma=10.0, theta=1.0, nu1=0.5),
                              imax=20, tol=1e-7)
    assert rep.passed, rep.errors


def test_diffusion_relations_neutral_degenerate():
    rep = diffusion_relations(DiffusionParams(sigma=0.0, theta=2.0, nu1=0.5),
                              imax=10, tol=1e-10)
    assert rep.passed, rep.errors


def test_finite_relations_micro_exact():
    rep = finite_relations(MoranParams(n=2, s=1.0, u=1.0, nu0=0.5), tol=1e-12)
    assert rep.passed, rep.errors


def test_finite_relations_randomized():
    rng = np.random.default_rng(403)
    for _ in range(10):
        p = rand_moran(rng, nmax=40)
        rep = finite_relations(p, tol=1e-9)
        assert rep.passed, (p, rep.errors)


def test_finite_relations_approach_diffusion_limit():
    sigma = theta = 1.0
    prev = None
    for n in (50, 100, 200):
        p = MoranParams(n=n, s=sigma / n, u=theta / n, nu0=0.5)
        b = solve_absorption(kasg_schedule(p))
        beta = wright_moments(DiffusionParams(sigma=sigma, theta=theta, nu1=0.5), 5)
        err = max(abs(b[i] - beta[i]) for i in range(0, 6))
        if prev is not None:
            assert err < prev
        prev = err
    assert prev < 0.01


def test_neutral_schedules_are_rejected_outside_shortcuts():
    with pytest.raises(ValidationError):
        kasg_schedule(MoranParams(n=4, s=0.0, u=1.0, nu0=0.5))
