"""Exact linear-algebra solvers: absorption, stationary, first-passage,
and transient distributions, with controlled truncation for unbounded
state spaces.

The two boundary-value recursions

    (lambda_i + mu_i + kappa) b_i = lambda_i b_{i+1} + mu_i b_{i-1}
    (mu_{i+1} + lambda_i + kappa) a_i = lambda_i a_{i-1} + mu_{i+1} a_{i+1}

are tridiagonal and diagonally dominant (kappa > 0).  They are solved by
the standard two-sweep elimination written in ratio form: eliminating from
the far boundary expresses each unknown as a positive multiple of its
predecessor, so the solution comes out as a product of positive ratios.
That makes even exponentially small entries componentwise accurate, which
the downstream ratio identities rely on.

Unbounded extents are truncated with an artificial zero boundary, and the
truncation level is doubled until the solution stops moving; the artificial
boundary only lowers the values, so refinement is monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.stats import poisson

from .errors import (
    NoConvergence,
    NotIrreducible,
    SingularSystem,
    ValidationError,
)
from .generators import CEMETERY, Generator
from .schedules import Finite, RateSchedule

TRUNCATION_CAP = 2**20
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SolutionVector:
    """Indexed probabilities with provenance metadata.

    ``values[k]`` is the entry at index ``lo + k``.  ``truncation`` is the
    level the defining system was cut at (None for exact finite solves),
    ``residual`` the normalized sup-norm residual of that system, and
    ``history`` the refinement trail as (level, sup-change) pairs.
    """

    lo: int
    values: np.ndarray
    name: str = ""
    residual: float = 0.0
    truncation: int | None = None
    history: tuple[tuple[int, float], ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        self.values.setflags(write=False)

    @property
    def hi(self) -> int:
        return self.lo + len(self.values) - 1

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i: int) -> float:
        if not self.lo <= i <= self.hi:
            raise IndexError(f"index {i} outside [{self.lo}:{self.hi}]")
        return float(self.values[i - self.lo])


def _absorption_ratios(sched: RateSchedule, top: int, pinned_top: bool):
    """Downward ratios r_i = b_i / b_{i-1} for i in [1:top].

    ``pinned_top`` pins b_{top} = 0 (artificial truncation boundary); the
    returned ratio at the top is then 0.
    """
    kap = sched.kappa
    r = np.empty(top + 1)
    nxt = 0.0  # plays the role of r_{top+1}
    for i in range(top, 0, -1):
        if i == top and pinned_top:
            r[i] = 0.0
        else:
            lam, mu = sched.lam(i), sched.mu(i)
            r[i] = mu / (mu + kap + lam * (1.0 - nxt))
        nxt = r[i]
    return r


def _tail_ratios(sched: RateSchedule, top: int):
    """Downward ratios s_i = a_i / a_{i-1} for i in [1:top-1], a_top = 0."""
    kap = sched.kappa
    s = np.zeros(top + 1)
    nxt = 0.0  # s_top = 0 is the boundary a_top = 0
    for i in range(top - 1, 0, -1):
        lam, mu = sched.lam(i), sched.mu(i + 1)
        s[i] = lam / (lam + kap + mu * (1.0 - nxt))
        nxt = s[i]
    return s


def _absorption_values(sched, top, pinned_top):
    r = _absorption_ratios(sched, top, pinned_top)
    b = np.empty(top + 1)
    b[0] = 1.0
    np.cumprod(r[1:], out=b[1:])
    return b


def _tail_values(sched, top):
    s = _tail_ratios(sched, top)
    a = np.empty(top + 1)
    a[0] = 1.0
    np.cumprod(s[1:top], out=a[1:top])
    a[top] = 0.0
    return a


def _absorption_residual(sched, b):
    top = len(b) - 1
    res = 0.0
    for i in range(1, top):
        lam, mu, kap = sched.lam(i), sched.mu(i), sched.kappa
        lhs = (lam + mu + kap) * b[i]
        rhs = lam * b[i + 1] + mu * b[i - 1]
        res = max(res, abs(lhs - rhs) / (lam + mu + kap))
    return res


def _tail_residual(sched, a):
    top = len(a) - 1
    res = 0.0
    for i in range(1, top):
        lam, mu, kap = sched.lam(i), sched.mu(i + 1), sched.kappa
        lhs = (mu + lam + kap) * a[i]
        rhs = lam * a[i - 1] + mu * a[i + 1]
        res = max(res, abs(lhs - rhs) / (mu + lam + kap))
    return res


def _refine(sched, tol, trunc, solve_at, name):
    """Double the truncation level until the solution stops moving.

    The sup-change is measured over the lower half of the previous grid:
    the upper half is dominated by the artificial zero boundary (for
    slowly decaying solutions it never settles), while the boundary's
    influence on the lower half dies off by a product of per-step factors
    and is what actually certifies convergence at the indices a caller
    reads.
    """
    m = max(64, sched.truncation_level(trunc))
    prev = None
    history = []
    while m <= TRUNCATION_CAP:
        vals = solve_at(m)
        if prev is not None:
            probe = (len(prev) - 1) // 2 + 1
            change = float(np.max(np.abs(vals[:probe] - prev[:probe])))
            history.append((m, change))
            if change < tol:
                return vals, m, tuple(history), probe - 1
        prev = vals
        m *= 2
    raise NoConvergence(
        f"{name}: truncation cap {TRUNCATION_CAP} reached without sup-change < {tol}"
    )


def solve_absorption(sched: RateSchedule, tol: float = DEFAULT_TOL) -> SolutionVector:
    """Probability of reaching 0 before the cemetery, per start state.

    Finite extent: exact solve over [0:N].  Unbounded: solved over [0:M]
    with an artificial zero at M, doubling M until the sup-change drops
    below ``tol``.  The change is certified over ``meta['certified']``
    leading indices; entries near the top of the grid remain contaminated
    by the artificial boundary.  If mu_m = 0 for some m, every entry from
    m up is exactly 0.
    """
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    if isinstance(sched.extent, Finite):
        n = sched.extent.n
        b = _absorption_values(sched, n, pinned_top=False)
        return SolutionVector(
            lo=0, values=b, name="absorption",
            residual=_absorption_residual(sched, b),
        )
    vals, m, history, certified = _refine(
        sched, tol, None, lambda mm: _absorption_values(sched, mm, pinned_top=True),
        "solve_absorption",
    )
    return SolutionVector(
        lo=0, values=vals, name="absorption",
        residual=_absorption_residual(sched, vals),
        truncation=m, history=history, meta={"certified": certified},
    )


def solve_stationary_tail(sched: RateSchedule, tol: float = DEFAULT_TOL) -> SolutionVector:
    """Stationary tail probabilities of the catastrophe process.

    Entry i is P(stationary state > i).  Finite extent: exact over [0:N]
    with a_N = 0.  Unbounded: truncated with an artificial zero boundary
    and refined as in :func:`solve_absorption`.
    """
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    if isinstance(sched.extent, Finite):
        n = sched.extent.n
        a = _tail_values(sched, n)
        return SolutionVector(
            lo=0, values=a, name="stationary_tail",
            residual=_tail_residual(sched, a),
        )
    vals, m, history, certified = _refine(
        sched, tol, None, lambda mm: _tail_values(sched, mm), "solve_stationary_tail"
    )
    return SolutionVector(
        lo=0, values=vals, name="stationary_tail",
        residual=_tail_residual(sched, vals),
        truncation=m, history=history, meta={"certified": certified},
    )


def _contiguous_int_lo(states):
    if not all(isinstance(s, (int, np.integer)) for s in states):
        raise ValidationError("stationary solve needs integer state labels")
    lo = min(states)
    if sorted(states) != list(range(lo, lo + len(states))):
        raise ValidationError("stationary solve needs a contiguous state range")
    return lo


def stationary_distribution(gen: Generator, tol: float = DEFAULT_TOL) -> SolutionVector:
    """Unique stationary distribution of an irreducible finite generator.

    Solves w Q = 0 with the normalization row replacing one equation, by
    dense LU with partial pivoting.  The sup-norm residual of w Q is
    reported on the result.  Reducible inputs (absorbing or unreachable
    states) raise :class:`NotIrreducible`.
    """
    if gen.has_cemetery:
        raise NotIrreducible("generator has a cemetery state")
    q = gen.dense()
    n = gen.n_states
    if n == 1:
        return SolutionVector(lo=_contiguous_int_lo(gen.states), values=np.ones(1),
                              name="stationary")
    adj = sp.csr_matrix((np.abs(q) > 0.0).astype(np.int8))
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    if ncomp != 1:
        raise NotIrreducible(
            f"generator is not irreducible ({ncomp} strongly connected components)"
        )
    lo = _contiguous_int_lo(gen.states)
    a = q.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        w = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"stationary solve failed: {exc}") from exc
    w = np.where(np.abs(w) < 1e-15, np.maximum(w, 0.0), w)
    if np.any(w < 0.0):
        raise SingularSystem("stationary solve produced negative probabilities")
    w = w / w.sum()
    residual = float(np.max(np.abs(w @ q)))
    # report in label order, whatever the storage order was
    w_sorted = np.array([w[gen.index(lo + k)] for k in range(n)])
    return SolutionVector(lo=lo, values=w_sorted, name="stationary", residual=residual)


def _reachable(gen, start, stop_set):
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        if s in stop_set:
            continue
        for t, r in gen.row_items(s):
            if r > 0.0 and t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


def first_passage_prob(gen: Generator, start, target, taboo=()) -> float:
    """P(hit ``target`` before ``taboo`` | start), via the harmonic system.

    The cemetery, when present, is treated as taboo unless explicitly
    listed in ``target``.  States that cannot reach ``target`` contribute
    0; if neither set is reachable from ``start`` the problem is
    degenerate and :class:`SingularSystem` is raised.
    """
    target = frozenset(target)
    taboo = frozenset(taboo)
    if gen.has_cemetery and CEMETERY not in target:
        taboo = taboo | {CEMETERY}
    if target & taboo:
        raise ValidationError("target and taboo must be disjoint")
    if start in target or start in taboo:
        raise ValidationError("start must lie outside target and taboo")

    boundary = target | taboo
    reached = _reachable(gen, start, boundary)
    if not (reached & target):
        if not (reached & taboo):
            raise SingularSystem("neither target nor taboo is reachable from start")
        return 0.0

    # Dead ends (zero out-rate off the boundary) can never reach the target.
    transient = [
        s for s in reached if s not in boundary and gen.out_rate(s) > 0.0
    ]
    idx = {s: k for k, s in enumerate(transient)}
    m = len(transient)
    a = np.zeros((m, m))
    rhs = np.zeros(m)
    for s in transient:
        i = idx[s]
        a[i, i] = -gen.out_rate(s)
        for t, r in gen.row_items(s):
            if t in idx:
                a[i, idx[t]] += r
            elif t in target:
                rhs[i] -= r
    try:
        h = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"first-passage solve failed: {exc}") from exc
    val = float(h[idx[start]])
    if not -1e-9 <= val <= 1.0 + 1e-9:
        raise SingularSystem(f"first-passage probability {val} outside [0,1]")
    return min(max(val, 0.0), 1.0)


def _uniformized(gen):
    q = gen.dense()
    rate = float(max(gen.out_rate(s) for s in gen.states))
    if rate == 0.0:
        return None, 0.0
    p = np.eye(gen.n_states) + q / rate
    return p, rate


def _poisson_weights(mu):
    if mu == 0.0:
        return np.ones(1)
    kmax = int(poisson.isf(1e-13, mu)) + 1
    return poisson.pmf(np.arange(kmax + 1), mu)


def transient_distribution(gen: Generator, t: float, init) -> np.ndarray:
    """Distribution at time t from ``init``, by uniformization.

    ``init`` is either an array aligned with ``gen.states`` or a mapping
    from state labels to probabilities.  The Poisson sum is truncated when
    its tail mass drops below 1e-12, so the result sums to 1 within 1e-10.
    """
    if t < 0:
        raise ValidationError("t must be >= 0")
    if isinstance(init, dict):
        v = np.zeros(gen.n_states)
        for s, p in init.items():
            v[gen.index(s)] = p
    else:
        v = np.asarray(init, dtype=float).copy()
        if v.shape != (gen.n_states,):
            raise ValidationError("init length does not match the state count")
    p, rate = _uniformized(gen)
    if p is None or t == 0.0:
        return v
    weights = _poisson_weights(rate * t)
    acc = weights[0] * v
    for k in range(1, len(weights)):
        v = v @ p
        acc = acc + weights[k] * v
    return acc


def transition_matrix(gen: Generator, t: float) -> np.ndarray:
    """Matrix exponential e^{Qt} by the same uniformized Poisson sum."""
    if t < 0:
        raise ValidationError("t must be >= 0")
    p, rate = _uniformized(gen)
    n = gen.n_states
    if p is None or t == 0.0:
        return np.eye(n)
    weights = _poisson_weights(rate * t)
    term = np.eye(n)
    acc = weights[0] * term
    for k in range(1, len(weights)):
        term = term @ p
        acc = acc + weights[k] * term
    return acc
