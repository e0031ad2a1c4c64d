import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdcat import (
    Finite,
    Infinite,
    RateSchedule,
    SpecError,
    TruncationError,
    ValidationError,
    bar_transform,
    make_schedule,
    tail_sum_diagnostic,
)
from bdcat.schedules import constant_schedule


def test_minimal_two_state_schedule():
    s = RateSchedule.from_arrays([1.0], [1.0, 1.0], 1.0, n=2)
    assert s.extent == Finite(2)
    assert s.lam(1) == 1.0
    assert s.lam(2) == 0.0  # boundary convention
    assert s.mu(2) == 1.0
    assert s.mu(3) == 0.0


def test_kappa_must_be_positive():
    with pytest.raises(ValidationError, match="kappa"):
        RateSchedule.from_arrays([0.5], [1.0, 1.0], 0.0, n=2)
    with pytest.raises(ValidationError, match="kappa"):
        RateSchedule.from_arrays([0.5], [1.0, 1.0], -1.0, n=2)


def test_interior_birth_rates_must_be_positive():
    with pytest.raises(ValidationError, match="lambda_1"):
        RateSchedule.from_arrays([0.0, 1.0], [1.0, 1.0, 1.0], 1.0, n=3)


def test_negative_death_rate_rejected():
    with pytest.raises(ValidationError, match="mu_2"):
        RateSchedule.from_arrays([1.0, 1.0], [1.0, -0.5, 1.0], 1.0, n=3)


def test_nonzero_boundary_entries_are_errors_not_zeroed():
    # a trailing lambda_N or mu_{N+1} may only be supplied as an exact zero
    with pytest.raises(ValidationError, match="lambda_3"):
        RateSchedule.from_arrays([1.0, 1.0, 0.5], [1.0, 1.0, 1.0], 1.0, n=3)
    with pytest.raises(ValidationError, match="mu_4"):
        RateSchedule.from_arrays([1.0, 1.0], [1.0, 1.0, 1.0, 0.1], 1.0, n=3)
    padded = RateSchedule.from_arrays([1.0, 1.0, 0.0], [1.0, 1.0, 1.0, 0.0], 1.0, n=3)
    assert padded.lam(2) == 1.0 and padded.mu(3) == 1.0


def test_zero_death_rates_are_legal():
    s = RateSchedule.from_arrays([1.0, 1.0], [1.0, 0.0, 1.0], 1.0, n=3)
    assert s.mu(2) == 0.0


def test_truncation_hint_required_for_unbounded():
    s = RateSchedule(extent=Infinite(), kappa=1.0,
                     birth=lambda i: 1.0, death=lambda i: 1.0)
    with pytest.raises(TruncationError):
        s.truncation_level()
    assert s.truncation_level(128) == 128
    hinted = RateSchedule(extent=Infinite(64), kappa=1.0,
                          birth=lambda i: 1.0, death=lambda i: 1.0)
    assert hinted.truncation_level() == 64


def test_make_schedule_minimal():
    s = make_schedule({
        "version": 1,
        "extent": {"finite": 2},
        "kappa": 1.0,
        "lambda": [1.0],
        "mu": [1.0, 1.0],
    })
    assert s.n == 2 and s.kappa == 1.0


def test_make_schedule_missing_kappa_names_the_key():
    with pytest.raises(SpecError, match="kappa"):
        make_schedule({"extent": {"finite": 2}, "lambda": [1.0], "mu": [1.0, 1.0]})


def test_make_schedule_missing_extent():
    with pytest.raises(SpecError, match="extent"):
        make_schedule({"kappa": 1.0, "lambda": [1.0], "mu": [1.0, 1.0]})


def test_make_schedule_unknown_family():
    with pytest.raises(SpecError, match="unknown schedule family"):
        make_schedule({"extent": {"finite": 2}, "kappa": 1.0,
                       "family": {"name": "nope", "params": {}}})


def test_make_schedule_diffusion_kasg_family():
    s = make_schedule({
        "family": {"name": "diffusion-kasg",
                   "params": {"sigma": 1.0, "theta": 1.0, "nu1": 0.5}},
    })
    assert isinstance(s.extent, Infinite)
    assert s.lam(7) == 1.0
    assert s.mu(3) == pytest.approx(3 - 1 + 0.5)
    assert s.kappa == pytest.approx(0.5)


def test_make_schedule_moran_families_match_direct_constructors():
    from bdcat import kasg_schedule, pldasg_schedule, MoranParams

    doc = {"family": {"name": "moran-kasg",
                      "params": {"N": 5, "s": 1.2, "u": 0.8, "nu0": 0.4}}}
    s = make_schedule(doc)
    p = MoranParams(n=5, s=1.2, u=0.8, nu0=0.4)
    direct = kasg_schedule(p)
    for i in range(1, 5):
        assert s.lam(i) == direct.lam(i)
        assert s.mu(i) == direct.mu(i)
    doc["family"]["name"] = "moran-pldasg"
    s2 = make_schedule(doc)
    direct2 = pldasg_schedule(p)
    assert all(s2.mu(i) == direct2.mu(i) for i in range(1, 6))


def test_bar_transform_micro():
    s = RateSchedule.from_arrays([1.0], [1.0, 1.0], 1.0, n=2)
    bar = bar_transform(s)
    assert bar.extent == Finite(3)
    assert bar.lam(1) == 1.0 and bar.lam(2) == 1.0
    assert bar.mu(1) == 0.0   # undefined lambda_0 defaults to 0
    assert bar.mu(2) == 1.0
    assert bar.mu(3) == 0.0   # lambda_N = 0 carries over
    assert bar.kappa == 1.0


def test_bar_transform_constant_interior():
    s = constant_schedule(2.0, 2.0, 1.0, Finite(6))
    bar = bar_transform(s)
    assert all(bar.lam(i) == 2.0 for i in range(1, 6))
    assert all(bar.mu(i) == 2.0 for i in range(2, 6))


def test_bar_transform_diffusion_swaps_roles():
    from bdcat import DiffusionParams, diffusion_kasg_schedule

    s = diffusion_kasg_schedule(DiffusionParams(sigma=1.0, theta=1.0, nu1=0.5))
    bar = bar_transform(s)
    assert bar.lam(4) == pytest.approx(4 - 1 + 0.5)
    assert bar.mu(4) == pytest.approx(1.0)


def test_bar_transform_requires_positive_deaths():
    s = RateSchedule.from_arrays([1.0, 1.0], [1.0, 0.0, 1.0], 1.0, n=3)
    with pytest.raises(ValidationError):
        bar_transform(s)


def test_bar_transform_involution_on_constants():
    s = constant_schedule(3.0, 3.0, 0.5, Finite(5))
    bar2 = bar_transform(bar_transform(s, mu1=1.0), check=False)
    # the double swap reproduces the original rates shifted up one state
    for i in range(2, 6):
        assert bar2.lam(i) == s.mu(i - 1) == 3.0
    for i in range(3, 6):
        assert bar2.mu(i) == s.lam(i - 2) == 3.0


def test_tail_diagnostic_constant_rates():
    s = constant_schedule(2.0, 2.0, 1.0, Infinite(64))
    rep = tail_sum_diagnostic(s, 1000)
    assert rep.lambda_partial_sum == pytest.approx(1000 / 2.0)
    assert rep.lambda_divergence_plausible
    assert rep.mu_divergence_plausible


def test_tail_diagnostic_quadratic_rates_not_plausible():
    s = RateSchedule(extent=Infinite(64), kappa=1.0,
                     birth=lambda i: float(i * i), death=lambda i: 1.0)
    rep = tail_sum_diagnostic(s, 1000)
    assert rep.lambda_partial_sum < 1.65
    assert not rep.lambda_divergence_plausible
    assert rep.mu_divergence_plausible


def test_tail_diagnostic_flags_zero_rates():
    s = RateSchedule.from_arrays([1.0, 1.0], [1.0, 0.0, 1.0], 1.0, n=3)
    rep = tail_sum_diagnostic(s, 3)
    assert rep.mu_skipped == (2,)
    # a vanishing death rate makes the condition vacuous
    assert rep.mu_divergence_plausible


def test_tail_diagnostic_harmonic_boundary():
    s = RateSchedule(extent=Infinite(64), kappa=1.0,
                     birth=lambda i: float(i), death=lambda i: 1.0)
    rep = tail_sum_diagnostic(s, 10_000)
    assert rep.lambda_divergence_plausible
    assert rep.lambda_partial_sum == pytest.approx(
        sum(1.0 / i for i in range(1, 10_001))
    )


@given(
    n=st.integers(2, 12),
    kap=st.floats(0.01, 10.0),
    data=st.data(),
)
@settings(max_examples=50, deadline=None)
def test_array_schedules_round_trip(n, kap, data):
    lam = data.draw(st.lists(st.floats(0.01, 100.0), min_size=n - 1, max_size=n - 1))
    mu = data.draw(st.lists(st.floats(0.0, 100.0), min_size=n, max_size=n))
    s = RateSchedule.from_arrays(lam, mu, kap, n=n)
    assert [s.lam(i) for i in range(1, n)] == lam
    assert [s.mu(i) for i in range(1, n + 1)] == mu
    assert s.lam(n) == 0.0 and s.mu(n + 1) == 0.0
    assert math.isclose(s.kappa, kap)
