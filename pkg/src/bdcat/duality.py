"""Siegmund duality: dual construction, finite-time verification, and the
ratio identities linking absorption probabilities to stationary tails.

For a stochastically monotone chain on an integer range (cemetery counted
as +infinity), the Siegmund dual satisfies

    P(X_t >= y | X_0 = x) = P(x >= Y_t | Y_0 = y)

and its rates follow from threshold sums of the primal rates:

    q_dual(i, j) = sum_{k >= i} (q(j, k) - q(j - 1, k)),

with rows of states below the primal range read as zero.  Probability the
dual rates fail to conserve is routed to a dual cemetery; genuinely
negative dual rates mean the primal was not monotone.

The two ratio identities implemented here convert between the absorption
vector of the killed chain and the stationary tail vector of the
catastrophe chain, in both directions, using only rate-ratio products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import rel_err
from .errors import (
    DegenerateDenominator,
    HypothesisViolated,
    NotMonotone,
    ValidationError,
)
from .generators import CEMETERY, Generator
from .schedules import RateSchedule, bar_transform
from .solvers import (
    SolutionVector,
    solve_absorption,
    solve_stationary_tail,
    transition_matrix,
)

FULL_GRID_MAX_PAIRS = 64 * 64
SUBSAMPLE_PAIRS = 256


def _int_labels(gen):
    fin = gen.finite_states()
    if not all(isinstance(s, (int, np.integer)) for s in fin):
        raise ValidationError("Siegmund dual needs integer state labels")
    lo, hi = min(fin), max(fin)
    if sorted(fin) != list(range(lo, hi + 1)):
        raise ValidationError("Siegmund dual needs a contiguous state range")
    return lo, hi


def siegmund_dual(gen: Generator, neg_tol: float = 1e-12) -> Generator:
    """Construct the Siegmund dual of a finite monotone generator.

    The dual's finite range is the primal's, extended by one above when the
    primal has a cemetery (the threshold "at least top+1" then means "got
    killed").  States the dual neither enters nor leaves are flagged in
    ``meta['isolated']`` rather than dropped; use ``drop_isolated()`` to
    restrict.  A computed dual rate below ``-neg_tol`` (relative to the
    rate scale) raises :class:`NotMonotone` with the offending pair.
    """
    lo, hi = _int_labels(gen)
    has_cem = gen.has_cemetery
    fin = list(range(lo, hi + 1))
    nf = len(fin)

    q = np.zeros((nf, nf))
    cem = np.zeros(nf)
    for s in fin:
        i = s - lo
        for t, r in gen.row_items(s):
            if t is CEMETERY:
                cem[i] += r
            else:
                q[i, t - lo] += r
    out = q.sum(axis=1) + cem
    q[np.arange(nf), np.arange(nf)] -= out

    # suffix[x, i] = sum_{k >= lo + i} q(x, k), cemetery counted everywhere
    suffix = np.empty((nf, nf + 1))
    suffix[:, nf] = cem
    for i in range(nf - 1, -1, -1):
        suffix[:, i] = suffix[:, i + 1] + q[:, i]

    def tsum(x, thr):
        # sum_{k >= thr} q(x, k) for a primal state label x, threshold label thr
        if x < lo or x > hi:
            return 0.0
        if thr > hi + 1:
            return 0.0
        return suffix[x - lo, max(thr, lo) - lo]

    dual_fin = list(range(lo, hi + 2)) if has_cem else list(range(lo, hi + 1))
    scale = max(1.0, float(out.max()) if nf else 1.0)
    edges: dict = {}
    cem_rates: dict = {}
    any_cem = False
    for i in dual_fin:
        row = {}
        diag = tsum(i, i) - tsum(i - 1, i)
        acc = diag
        for j in dual_fin:
            if j == i:
                continue
            r = tsum(j, i) - tsum(j - 1, i)
            if r < -neg_tol * scale:
                raise NotMonotone(
                    f"negative dual rate {r} from {i} to {j}: primal not monotone",
                    witness=(i, j),
                )
            # |r| within the noise band is cancellation residue, not a rate
            if r > neg_tol * scale:
                row[j] = r
                acc += r
        deficit = -acc
        if deficit > neg_tol * scale:
            cem_rates[i] = deficit
            any_cem = True
        edges[i] = row

    states = tuple(dual_fin) + ((CEMETERY,) if any_cem else ())
    if any_cem:
        for i, r in cem_rates.items():
            edges[i][CEMETERY] = r
    dual = Generator(states, edges, kind="siegmund_dual",
                     meta={"primal_kind": gen.kind})

    incoming = {s: 0.0 for s in dual.states}
    for s in dual.states:
        for t, r in dual.row_items(s):
            incoming[t] += r
    isolated = tuple(
        s for s in dual.states
        if dual.out_rate(s) == 0.0 and incoming[s] == 0.0
    )
    dual.meta["isolated"] = isolated
    return dual


@dataclass(frozen=True)
class DualityReport:
    """Finite-time check of the duality pairing over a (x, y) grid."""

    times: tuple[float, ...]
    tol: float
    n_pairs: int
    max_discrepancy: float
    per_time: tuple[float, ...]
    passed: bool
    pairs: tuple = ()  # optional (t, x, y, discrepancy) rows


def verify_duality(gen: Generator, dual: Generator, times, tol: float = 1e-8,
                   seed: int = 0, keep_pairs: bool = False) -> DualityReport:
    """Evaluate both sides of the duality identity by uniformization.

    Uses the full (x, y) grid when it has at most 64*64 pairs, otherwise a
    seeded 256-pair subsample.  The primal cemetery counts as +infinity on
    the left side; the dual cemetery never satisfies x >= y on the right.
    """
    times = tuple(float(t) for t in times)
    if any(t < 0 for t in times):
        raise ValidationError("times must be >= 0")
    plo, phi = _int_labels(gen)
    dlo, dhi = _int_labels(dual)
    pstates = list(range(plo, phi + 1))
    dstates = list(range(dlo, dhi + 1))

    all_pairs = [(x, y) for x in pstates for y in dstates]
    if len(all_pairs) > FULL_GRID_MAX_PAIRS:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(all_pairs), size=SUBSAMPLE_PAIRS, replace=False)
        pairs = [all_pairs[k] for k in sorted(picks)]
    else:
        pairs = all_pairs

    pidx = {s: gen.index(s) for s in pstates}
    didx = {s: dual.index(s) for s in dstates}
    pcem = gen.index(CEMETERY) if gen.has_cemetery else None

    per_time = []
    rows = []
    worst = 0.0
    for t in times:
        kp = transition_matrix(gen, t)
        kd = transition_matrix(dual, t)
        tmax = 0.0
        for x, y in pairs:
            left = sum(kp[pidx[x], pidx[s]] for s in pstates if s >= y)
            if pcem is not None:
                left += kp[pidx[x], pcem]
            right = sum(kd[didx[y], didx[s]] for s in dstates if s <= x)
            d = float(abs(left - right))
            tmax = max(tmax, d)
            if keep_pairs:
                rows.append((t, x, y, d))
        per_time.append(tmax)
        worst = max(worst, tmax)
    return DualityReport(
        times=times, tol=tol, n_pairs=len(pairs),
        max_discrepancy=worst, per_time=tuple(per_time),
        passed=bool(worst <= tol), pairs=tuple(rows),
    )


def detailed_balance_product(sched: RateSchedule, i: int, k: int = 1) -> float:
    """prod_{j=k}^{i-1} mu_{j+1} / lambda_j.

    With all the mu positive this is the inverse of the relative stationary
    weight of state i (against state k) in the kappa-free reversible
    birth-death chain with the same rates.
    """
    if not 1 <= k <= i:
        raise ValidationError("need 1 <= k <= i")
    out = 1.0
    for j in range(k, i):
        out *= sched.mu(j + 1) / sched.lam(j)
    return out


def _extent_top(v: SolutionVector, sched: RateSchedule) -> int:
    n = sched.n
    if n is None:
        n = v.hi
    if v.lo != 0 or v.hi < n:
        raise ValidationError(f"vector must cover [0:{n}], got [{v.lo}:{v.hi}]")
    return n


def absorption_ratios_from_tail(a: SolutionVector, sched: RateSchedule) -> SolutionVector:
    """Ratios b_i / b_1 of absorption probabilities, from the tail vector.

    Implements b_i/b_1 = ((a_{i-1} - a_i) / (a_0 - a_1)) * prod mu_{j+1}/lambda_j
    over i in [1:N].  The product telescopes from any base index, so
    relative ratios b_i/b_k are ``out[i] / out[k]``.
    """
    n = _extent_top(a, sched)
    denom = a[0] - a[1]
    if denom <= 0.0:
        raise DegenerateDenominator(
            f"a_0 - a_1 = {denom} must be positive (corrupted tail vector?)"
        )
    vals = np.empty(n)
    prod = 1.0
    for i in range(1, n + 1):
        if i > 1:
            prod *= sched.mu(i) / sched.lam(i - 1)
        vals[i - 1] = (a[i - 1] - a[i]) / denom * prod
    return SolutionVector(lo=1, values=vals, name="absorption_ratios")


def tail_ratios_from_absorption(b: SolutionVector, sched: RateSchedule) -> SolutionVector:
    """Ratios a_i / a_1 of stationary tails, from the absorption vector.

    Implements a_i/a_1 = ((b_i - b_{i+1}) / (b_1 - b_2)) * prod lambda_{j+1}/mu_{j+1}
    over i in [1:N-1].  Requires every mu_i > 0; refuses otherwise rather
    than extrapolating through a vanishing product.
    """
    n = _extent_top(b, sched)
    for i in range(1, n + 1):
        if sched.mu(i) <= 0.0:
            raise HypothesisViolated(
                f"identity requires mu_i > 0 for all i in [1:{n}]; mu_{i} = {sched.mu(i)}"
            )
    if n < 2:
        return SolutionVector(lo=1, values=np.empty(0), name="tail_ratios")
    denom = b[1] - b[2]
    if denom <= 0.0:
        raise DegenerateDenominator(
            f"b_1 - b_2 = {denom} must be positive (corrupted absorption vector?)"
        )
    vals = np.empty(n - 1)
    prod = 1.0
    for i in range(1, n):
        if i > 1:
            prod *= sched.lam(i) / sched.mu(i)
        vals[i - 1] = (b[i] - b[i + 1]) / denom * prod
    return SolutionVector(lo=1, values=vals, name="tail_ratios")


def dual_stationary_from_absorption(b: SolutionVector) -> SolutionVector:
    """Stationary law of the dual of the killed chain: successive drops of b.

    Entry i in [1:N] is b_{i-1} - b_i and entry N+1 is b_N; the vector
    telescopes to b_0 = 1.
    """
    if b.lo != 0:
        raise ValidationError("absorption vector must start at index 0")
    v = b.values
    if np.any(np.diff(v) > 1e-12):
        raise ValidationError("absorption vector must be non-increasing")
    vals = np.empty(len(v))
    vals[:-1] = v[:-1] - v[1:]
    vals[-1] = v[-1]
    return SolutionVector(lo=1, values=vals, name="dual_stationary")


@dataclass(frozen=True)
class ClosureReport:
    """Both ratio identities checked against independent direct solves."""

    tol: float
    absorption_direction_error: float
    tail_direction_error: float | None
    max_rel_error: float
    passed: bool


def verify_ratio_identities(sched: RateSchedule, tol: float = 1e-9) -> ClosureReport:
    """Check both conversion directions against the direct solvers."""
    b = solve_absorption(sched)
    a = solve_stationary_tail(sched)
    n = _extent_top(b, sched)

    ratios = absorption_ratios_from_tail(a, sched)
    err_b = 0.0
    for i in range(1, n + 1):
        err_b = max(err_b, rel_err(ratios[i], b[i] / b[1]))

    err_a = None
    if all(sched.mu(i) > 0.0 for i in range(1, n + 1)):
        ratios_a = tail_ratios_from_absorption(b, sched)
        err_a = 0.0
        for i in range(1, n):
            err_a = max(err_a, rel_err(ratios_a[i], a[i] / a[1]))

    worst = max(err_b, err_a or 0.0)
    return ClosureReport(
        tol=tol,
        absorption_direction_error=err_b,
        tail_direction_error=err_a,
        max_rel_error=worst,
        passed=worst <= tol,
    )


@dataclass(frozen=True)
class BarIdentityReport:
    tol: float
    max_rel_error: float
    passed: bool


def verify_bar_identity(sched: RateSchedule, tol: float = 1e-9) -> BarIdentityReport:
    """Check the swapped-role identity bbar_{i+1}/bbar_2 = a_i/a_1, i in [2:N].

    The swapped schedule's boundary death rate at 1 is a free parameter that
    scales all its absorption probabilities jointly; it is floored to 1 here
    so the individual values are nonzero, which leaves the checked ratios
    unchanged.
    """
    n = sched.n
    if n is None or n < 2:
        raise ValidationError("bar identity check needs a finite extent >= 2")
    barred = bar_transform(sched, mu1=1.0)
    bbar = solve_absorption(barred)
    a = solve_stationary_tail(sched)
    worst = 0.0
    for i in range(2, n + 1):
        worst = max(worst, rel_err(bbar[i + 1] / bbar[2], a[i] / a[1]))
    return BarIdentityReport(tol=tol, max_rel_error=worst, passed=worst <= tol)
