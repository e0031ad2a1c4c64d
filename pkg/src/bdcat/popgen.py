"""Population-genetics application: Moran model, ancestral-graph line
counting processes, Wright's distribution, and the identities tying
sampling probabilities to ancestral-type probabilities.

Finite population of size N with two types under selection (rate
advantage s for the fit type) and mutation (rate u, target type j with
probability nu_j).  The killed ancestral selection graph (k-ASG) is the
killed chain with

    lambda_i = s (N - i) / N,   mu_i = (i - 1) / N + u nu_1,   kappa = u nu_0,

and its absorption vector lists the probabilities of drawing only unfit
types when sampling without replacement from the stationary population.
The pruned lookdown ASG (pLD-ASG) is the catastrophe chain with the same
birth rates but mu_i = i / N + u nu_1; its stationary tail vector encodes
the distribution of the common ancestor's type.  In the diffusion limit
(N s -> sigma, N u -> theta) the same pair becomes lambda_i = sigma,
mu_i = i - 1 + theta nu_1 (k-ASG) and mu_i = i + theta nu_1 (pLD-ASG)
with kappa = theta nu_0, and the stationary law of the forward frequency
process is Wright's distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import roots_jacobi

from ._util import falling_ratio, rel_err
from .errors import QuadratureNoConvergence, ValidationError
from .generators import Generator
from .schedules import Finite, Infinite, RateSchedule
from .solvers import (
    SolutionVector,
    solve_absorption,
    solve_stationary_tail,
    stationary_distribution,
)

QUADRATURE_START_NODES = 32
QUADRATURE_MAX_NODES = 2**15


def _resolve_nu(nu0, nu1):
    if nu0 is None and nu1 is None:
        raise ValidationError("need nu0 or nu1")
    if nu0 is None:
        nu0 = 1.0 - nu1
    if nu1 is None:
        nu1 = 1.0 - nu0
    if not (0.0 < nu0 < 1.0 and 0.0 < nu1 < 1.0):
        raise ValidationError(f"nu0={nu0}, nu1={nu1} must lie in (0,1)")
    if abs(nu0 + nu1 - 1.0) > 1e-12:
        raise ValidationError(f"nu0 + nu1 must be 1, got {nu0 + nu1}")
    return float(nu0), float(nu1)


@dataclass(frozen=True)
class MoranParams:
    """Finite Moran model: size, selection, mutation, and type bias."""

    n: int
    s: float
    u: float
    nu0: float
    nu1: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("population size must be >= 1")
        if self.s < 0:
            raise ValidationError("selection rate must be >= 0")
        if self.u <= 0:
            raise ValidationError("mutation rate must be > 0")
        nu0, nu1 = _resolve_nu(self.nu0, self.nu1)
        object.__setattr__(self, "nu0", nu0)
        object.__setattr__(self, "nu1", nu1)


@dataclass(frozen=True)
class DiffusionParams:
    """Diffusion limit: scaled selection sigma and scaled mutation theta."""

    sigma: float
    theta: float
    nu0: float | None = None
    nu1: float | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")
        if self.theta <= 0:
            raise ValidationError("theta must be > 0")
        nu0, nu1 = _resolve_nu(self.nu0, self.nu1)
        object.__setattr__(self, "nu0", nu0)
        object.__setattr__(self, "nu1", nu1)


def kasg_schedule(p: MoranParams) -> RateSchedule:
    """Killed-ASG line-counting schedule for a population of size N."""
    n, s, u, nu1 = p.n, p.s, p.u, p.nu1
    return RateSchedule(
        extent=Finite(n), kappa=u * p.nu0,
        birth=lambda i: s * (n - i) / n,
        death=lambda i: (i - 1) / n + u * nu1,
        label="kasg",
    ).validate()


def pldasg_schedule(p: MoranParams) -> RateSchedule:
    """Pruned lookdown ASG line-counting schedule for size N."""
    n, s, u, nu1 = p.n, p.s, p.u, p.nu1
    return RateSchedule(
        extent=Finite(n), kappa=u * p.nu0,
        birth=lambda i: s * (n - i) / n,
        death=lambda i: i / n + u * nu1,
        label="pldasg",
    ).validate()


def _diffusion_hint(p: DiffusionParams, hint):
    return hint if hint is not None else 64 + math.ceil(10.0 * p.sigma)


def diffusion_kasg_schedule(p: DiffusionParams, hint=None) -> RateSchedule:
    """Diffusion-limit k-ASG: lambda_i = sigma, mu_i = i - 1 + theta nu_1."""
    sigma, tn1 = p.sigma, p.theta * p.nu1
    return RateSchedule(
        extent=Infinite(_diffusion_hint(p, hint)), kappa=p.theta * p.nu0,
        birth=lambda i: sigma,
        death=lambda i: i - 1 + tn1,
        label="diffusion-kasg",
    ).validate()


def diffusion_pldasg_schedule(p: DiffusionParams, hint=None) -> RateSchedule:
    """Diffusion-limit pLD-ASG: lambda_i = sigma, mu_i = i + theta nu_1."""
    sigma, tn1 = p.sigma, p.theta * p.nu1
    return RateSchedule(
        extent=Infinite(_diffusion_hint(p, hint)), kappa=p.theta * p.nu0,
        birth=lambda i: sigma,
        death=lambda i: i + tn1,
        label="diffusion-pldasg",
    ).validate()


class MoranForward(NamedTuple):
    generator: Generator
    pi: SolutionVector


def moran_forward(p: MoranParams, cross_check_tol: float = 1e-10) -> MoranForward:
    """Forward frequency chain of the Moran model and its stationary law.

    The stationary distribution comes from the detailed-balance product
    (the chain is a reversible birth-death chain) and is cross-checked
    against the dense stationary solve.
    """
    n, s, u = p.n, p.s, p.u
    nu0, nu1 = p.nu0, p.nu1

    def up(i):
        return i * (n - i) / n + u * nu1 * (n - i)

    def down(i):
        return (1.0 + s) * i * (n - i) / n + u * nu0 * i

    edges = {}
    for i in range(0, n + 1):
        row = {}
        if i < n:
            row[i + 1] = up(i)
        if i > 0:
            row[i - 1] = down(i)
        edges[i] = row
    gen = Generator(tuple(range(0, n + 1)), edges, kind="moran_forward",
                    meta={"n": n})

    logw = np.zeros(n + 1)
    for i in range(1, n + 1):
        logw[i] = logw[i - 1] + math.log(up(i - 1)) - math.log(down(i))
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    pi = SolutionVector(lo=0, values=w, name="moran_stationary")

    check = stationary_distribution(gen)
    worst = float(np.max(np.abs(check.values - w)))
    if worst > cross_check_tol:
        raise ValidationError(
            f"stationary cross-check failed: product vs solve differ by {worst}"
        )
    return MoranForward(generator=gen, pi=pi)


def sampling_moment(pi, i: int) -> float:
    """P(an i-sample without replacement is all type 1) under ``pi``.

    ``pi`` is the stationary law over counts [0:N]; the moment is the mean
    of the falling-factorial ratio k_(i) / N_(i).
    """
    vals = pi.values if isinstance(pi, SolutionVector) else np.asarray(pi, float)
    n = len(vals) - 1
    if not 0 <= i <= n:
        raise ValidationError(f"sample size {i} outside [0:{n}]")
    if i == 0:
        return 1.0
    return float(sum(vals[k] * falling_ratio(k, n, i) for k in range(0, n + 1)))


def ancestral_type_prob_finite(a: SolutionVector, i: int,
                               strict_paper: bool = False) -> float:
    """Probability the common ancestor is unfit, given i unfit among N now.

    Default evaluation uses the index convention forced by the boundary
    values g(0) = 0 and g(N) = 1 and by neutrality (g(i) = i/N when the
    tail vector collapses to its head):

        g(i) = 1 - (N - i) * sum_{j=1}^{N} a_{j-1} * i_(j-1) / N_(j),

    with x_(m) the falling factorial.  ``strict_paper=True`` instead
    evaluates the shifted-by-one variant sum_{j=1}^N a_j i_(j) / N_(j-1),
    which fails those boundary checks; it is kept for comparison only.
    """
    n = a.hi
    if a.lo != 0:
        raise ValidationError("tail vector must start at index 0")
    if not 0 <= i <= n:
        raise ValidationError(f"count {i} outside [0:{n}]")
    if strict_paper:
        term = float(i)  # i_(1) / N_(0)
        acc = 0.0
        for j in range(1, n + 1):
            acc += a[j] * term
            term *= (i - j) / (n - j + 1)
            if term == 0.0:
                break
        return 1.0 - (n - i) * acc
    term = 1.0 / n  # i_(0) / N_(1)
    acc = 0.0
    for j in range(1, n + 1):
        acc += a[j - 1] * term
        if i - (j - 1) <= 0 or j == n:
            break
        term *= (i - (j - 1)) / (n - j)
    return 1.0 - (n - i) * acc


def _wright_node_ratios(p: DiffusionParams, pairs, n_nodes):
    # Gauss-Jacobi on [-1,1] with weight (1-x)^(theta nu0 - 1) (1+x)^(theta nu1 - 1);
    # y = (1+x)/2 maps it onto Wright's density kernel on [0,1].
    with np.errstate(invalid="ignore"):
        x, w = roots_jacobi(n_nodes, p.theta * p.nu0 - 1.0, p.theta * p.nu1 - 1.0)
    y = 0.5 * (x + 1.0)
    base = w * np.exp(-p.sigma * y)
    denom = base.sum()
    return [float((base * y**a * (1.0 - y) ** b).sum() / denom) for a, b in pairs]


def wright_polynomial_means(p: DiffusionParams, pairs,
                            tol: float = 1e-11) -> list[float]:
    """E[Y^a (1-Y)^b] under Wright's distribution for each (a, b) pair.

    Gauss-Jacobi quadrature absorbs the endpoint singularities of the
    density; the node count doubles from 32 until every requested mean
    moves by less than ``tol`` relatively.  The rule itself loses accuracy
    at large node counts when theta*nu approaches 0 (weight exponents near
    -1), so the loop also stops once doubling makes the successive change
    grow instead of shrink; if the requested tol was not reached by then,
    that is a genuine failure.
    """
    n = QUADRATURE_START_NODES
    prev = None
    last_change = math.inf
    while n <= QUADRATURE_MAX_NODES:
        cur = _wright_node_ratios(p, pairs, n)
        if prev is not None:
            change = max(rel_err(c, q) for c, q in zip(cur, prev))
            if change < tol:
                return cur
            if change > last_change:
                raise QuadratureNoConvergence(
                    f"Wright quadrature stabilised only to {last_change:.2e} "
                    f"(requested {tol}); theta*nu too close to 0 for finer "
                    "stabilisation"
                )
            last_change = change
        prev = cur
        n *= 2
    raise QuadratureNoConvergence(
        f"Wright quadrature did not stabilise below {tol} within "
        f"{QUADRATURE_MAX_NODES} nodes"
    )


def wright_moments(p: DiffusionParams, imax: int, tol: float = 1e-11) -> SolutionVector:
    """Moments E[Y^i], i in [0:imax], of Wright's distribution.

    These equal the absorption probabilities of the diffusion-limit k-ASG,
    so they satisfy the same three-term recursion; the normalized moment
    at i = 0 is exactly 1.
    """
    if imax < 0:
        raise ValidationError("imax must be >= 0")
    vals = wright_polynomial_means(p, [(i, 0) for i in range(imax + 1)], tol)
    return SolutionVector(lo=0, values=np.array(vals), name="wright_moments",
                          meta={"sigma": p.sigma, "theta": p.theta, "nu1": p.nu1})


def fearnhead_tails(p: DiffusionParams, tol: float = 1e-10,
                    imax: int | None = None) -> SolutionVector:
    """Stationary tails of the diffusion pLD-ASG (Fearnhead's recursion).

    Solved as the stationary-tail system of the diffusion pLD-ASG schedule
    with refinement of the truncation level.  With sigma = 0 the chain is
    stuck at 1, so the tails vanish from index 1 on.
    """
    if p.sigma == 0.0:
        top = imax if imax is not None else 63
        vals = np.zeros(max(top, 1) + 1)
        vals[0] = 1.0
        return SolutionVector(lo=0, values=vals, name="fearnhead_tails")
    sched = diffusion_pldasg_schedule(p)
    out = solve_stationary_tail(sched, tol)
    if imax is not None and out.meta.get("certified", out.hi) < imax:
        raise ValidationError(
            f"certified range {out.meta.get('certified')} too shallow for "
            f"requested imax {imax}"
        )
    return SolutionVector(lo=0, values=out.values, name="fearnhead_tails",
                          residual=out.residual, truncation=out.truncation,
                          history=out.history)


def ancestral_type_prob_diffusion(alpha: SolutionVector, y: float,
                                  strict_paper: bool = False) -> float:
    """Probability the common ancestor is unfit at frequency y of unfit types.

    Default: gamma(y) = 1 - (1-y) * sum_{i>=0} alpha_i y^i, the index
    convention forced by gamma(0) = 0 and neutrality.  ``strict_paper=True``
    starts the sum at i = 1 instead.  The sum truncates once the remaining
    terms are below 1e-16 (the tails decay superexponentially).
    """
    if not 0.0 <= y <= 1.0:
        raise ValidationError(f"frequency {y} outside [0,1]")
    if y == 1.0:
        return 1.0
    start = 1 if strict_paper else 0
    acc = 0.0
    power = y**start
    for i in range(start, alpha.hi + 1):
        term = alpha[i] * power
        acc += term
        if term < 1e-16 and i > 4:
            break
        power *= y
    return 1.0 - (1.0 - y) * acc


@dataclass(frozen=True)
class RelationReport:
    """Max relative errors of a family of cross-route identity checks."""

    label: str
    params: dict
    tol: float
    errors: dict
    max_rel_error: float
    passed: bool


def _report(label, params, tol, errors):
    worst = max(errors.values()) if errors else 0.0
    return RelationReport(
        label=label, params=params, tol=tol, errors=errors,
        max_rel_error=worst, passed=worst <= tol,
    )


def diffusion_relations(p: DiffusionParams, imax: int = 20, tol: float = 1e-8,
                        quad_tol: float = 1e-10,
                        solver_tol: float = 1e-12) -> RelationReport:
    """Cross-check the diffusion-limit identities over [0:imax].

    Routes compared: Wright-moment quadrature (beta), the Fearnhead tail
    solve (alpha), the two difference-product identities linking them, the
    closed form for beta_1/beta_2, and the integral representation of the
    tails through E[Y^{i+1}(1-Y)].
    """
    beta = wright_moments(p, imax + 2, quad_tol)
    alpha = fearnhead_tails(p, solver_tol, imax=imax + 2)
    tn1 = p.theta * p.nu1
    sigma = p.sigma
    errors: dict[str, float] = {}

    # beta ratios from alpha differences
    err = 0.0
    prod = 1.0
    for i in range(2, imax + 1):
        if i > 2:
            if sigma == 0.0:
                break
            prod *= (i - 1 + tn1) / sigma
        rhs = (alpha[i - 2] - alpha[i - 1]) / (alpha[0] - alpha[1]) * prod
        err = max(err, rel_err(beta[i] / beta[2], rhs))
    errors["beta_from_alpha"] = err

    # alpha from beta differences
    err = 0.0
    prod = 1.0
    for i in range(0, imax + 1):
        if i > 0:
            prod *= sigma / (i + tn1)
        rhs = (beta[i + 1] - beta[i + 2]) / (beta[1] - beta[2]) * prod
        err = max(err, rel_err(alpha[i], rhs))
    errors["alpha_from_beta"] = err

    # closed form for the leading moment ratio
    lead = (1.0 + sigma + p.theta) / (1.0 + tn1) - (
        (alpha[1] - alpha[2]) / (alpha[0] - alpha[1]) * (2.0 + tn1) / (1.0 + tn1)
    )
    errors["leading_ratio"] = rel_err(beta[1] / beta[2], lead)

    # integral representation of the tails
    pairs = [(i + 1, 1) for i in range(0, imax + 1)] + [(1, 1)]
    means = wright_polynomial_means(p, pairs, quad_tol)
    den = means[-1]
    err = 0.0
    prod = 1.0
    for i in range(0, imax + 1):
        if i > 0:
            prod *= sigma / (i + tn1)
        err = max(err, rel_err(alpha[i], means[i] / den * prod))
    errors["integral_representation"] = err

    return _report(
        "diffusion_relations",
        {"sigma": sigma, "theta": p.theta, "nu0": p.nu0, "nu1": p.nu1,
         "imax": imax},
        tol, errors,
    )


def left_shift_mutation(p: MoranParams) -> float:
    """Mutation rate pairing a size-N model with the size-(N-1) tail side."""
    return p.n * p.u / (p.n - 1)


def right_shift_mutation(p: MoranParams) -> float:
    """Mutation rate pairing a size-N model with the size-(N+1) sampling side."""
    return p.n * p.u / (p.n + 1)


def finite_relations(p: MoranParams, tol: float = 1e-9) -> RelationReport:
    """Cross-check the finite-population identities for one parameter set.

    The sampling vector of the size-N k-ASG is tied to the tail vector of
    the size-(N-1) pLD-ASG at mutation rate N u/(N-1), and the size-N tail
    vector to the size-(N+1) sampling vector at N u/(N+1).  Also checked:
    the stationary-ratio bridge through the catastrophe chain with k-ASG
    rates, the sampling-moment identity, the stationary-moment integral
    representation of the tails, and (for N > 2) the recursion-closed form
    for the leading sampling ratio.
    """
    n, s, u, nu1 = p.n, p.s, p.u, p.nu1
    if n < 2:
        raise ValidationError("finite relations need population size >= 2")
    errors: dict[str, float] = {}

    b = solve_absorption(kasg_schedule(p))
    a = solve_stationary_tail(pldasg_schedule(p))

    # sampling moments of the forward chain reproduce the absorption vector
    pi = moran_forward(p).pi
    errors["sampling_moments"] = max(
        rel_err(sampling_moment(pi, i), b[i]) for i in range(0, n + 1)
    )

    # tail side: size N-1 at the left-shifted mutation rate
    p_left = MoranParams(n=n - 1, s=s, u=left_shift_mutation(p), nu0=p.nu0)
    a_left = solve_stationary_tail(pldasg_schedule(p_left))
    err = 0.0
    prod = 1.0
    r3 = None
    for i in range(2, n + 1):
        if i > 2:
            prod *= (i - 1 + n * u * nu1) / ((n - i + 1) * s)
        rhs = (a_left[i - 2] - a_left[i - 1]) / (1.0 - a_left[1]) * prod
        if i == 3:
            r3 = rhs
        err = max(err, rel_err(b[i] / b[2], rhs))
    errors["tail_identity"] = err

    # sampling side: size N+1 at the right-shifted mutation rate
    p_right = MoranParams(n=n + 1, s=s, u=right_shift_mutation(p), nu0=p.nu0)
    b_right = solve_absorption(kasg_schedule(p_right))
    denom = b_right[1] - b_right[2]
    err = 0.0
    prod = 1.0
    for i in range(0, n):
        if i > 0:
            prod *= (n - i) * s / (i + n * u * nu1)
        rhs = (b_right[i + 1] - b_right[i + 2]) / denom * prod
        err = max(err, rel_err(a[i], rhs))
    errors["absorption_identity"] = err

    # stationary-ratio bridge: the catastrophe chain with k-ASG rates vs
    # the size-(N-1) pLD-ASG.  Ratios come from tail differences of the
    # ratio-cascade solves, which stay componentwise accurate across the
    # huge dynamic ranges a strong up-drift produces (a dense LU route
    # loses the small weights to absolute rounding).
    hat_tail = solve_stationary_tail(kasg_schedule(p))
    hat_w = hat_tail.values[:-1] - hat_tail.values[1:]   # weight of state j at [j-1]
    left_w = a_left.values[:-1] - a_left.values[1:]
    err_w = max(
        rel_err(hat_w[j - 1] / hat_w[1], left_w[j - 2] / left_w[0])
        for j in range(2, n + 1)
    )
    errors["hat_weight_ratios"] = err_w
    err_a = max(
        rel_err(hat_tail[j] / hat_tail[1], a_left[j - 1])
        for j in range(1, n + 1)
    )
    errors["hat_tail_ratios"] = err_a

    # integral representation: size-(N+1) stationary moments replace the
    # sampling-vector differences
    pi_right = moran_forward(p_right).pi.values
    m = n + 1
    den = sum(pi_right[k] * (k / m) * (1.0 - (k - 1) / n) for k in range(0, m + 1))
    err = 0.0
    prod = 1.0
    for i in range(0, n):
        if i > 0:
            prod *= (n - i) * s / (i + n * u * nu1)
        num = sum(
            pi_right[k] * falling_ratio(k, m, i + 1) * (1.0 - (k - i - 1) / (n - i))
            for k in range(0, m + 1)
        )
        err = max(err, rel_err(a[i], num / den * prod))
    errors["integral_representation"] = err

    # leading sampling ratio via the recursion (needs states 1..3 distinct)
    if n > 2:
        lead = (
            (1.0 / n + s * (n - 2) / n + u) - s * (n - 2) / n * r3
        ) / (1.0 / n + u * nu1)
        errors["leading_ratio"] = rel_err(b[1] / b[2], lead)

    return _report(
        "finite_relations",
        {"n": n, "s": s, "u": u, "nu0": p.nu0, "nu1": nu1},
        tol, errors,
    )


def finite_table(p: MoranParams):
    """Columns (i, b_i, a_i, g(i)) for the size-N model."""
    b = solve_absorption(kasg_schedule(p))
    a = solve_stationary_tail(pldasg_schedule(p))
    g = [ancestral_type_prob_finite(a, i) for i in range(0, p.n + 1)]
    return {
        "i": list(range(0, p.n + 1)),
        "absorption": [b[i] for i in range(0, p.n + 1)],
        "tail": [a[i] for i in range(0, p.n + 1)],
        "ancestral_unfit": g,
    }


def diffusion_table(p: DiffusionParams, imax: int = 20, tol: float = 1e-10):
    """Columns (i, beta_i, alpha_i) plus a gamma grid over y in [0:1]."""
    beta = wright_moments(p, imax, tol)
    alpha = fearnhead_tails(p, tol, imax=imax)
    ys = [k / 50 for k in range(0, 51)]
    gam = [ancestral_type_prob_diffusion(alpha, y) for y in ys]
    return {
        "i": list(range(0, imax + 1)),
        "moments": [beta[i] for i in range(0, imax + 1)],
        "tails": [alpha[i] for i in range(0, imax + 1)],
        "y": ys,
        "ancestral_unfit": gam,
    }
