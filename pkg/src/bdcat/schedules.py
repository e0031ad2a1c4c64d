"""Rate schedules for birth-death processes with killing and catastrophes.

A schedule holds the per-capita birth rates lambda_i (i >= 1), per-capita
death rates mu_i, and the killing/catastrophe intensity kappa > 0.  For a
finite extent N the conventions lambda_N = 0 and mu_{N+1} = 0 are enforced;
unbounded schedules carry a truncation hint that downstream solvers refine.

Schedule indices are 1-based throughout, matching the usual birth-death
convention; state 0 and the cemetery are distinct states of the processes
built from a schedule, never of the schedule itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import SpecError, TruncationError, ValidationError

SCHEDULE_SCHEMA = "bdcat.schedule/v1"

# Families accepted by make_schedule; moran-* defer to the popgen module.
_FAMILIES = (
    "constant",
    "affine",
    "moran-kasg",
    "moran-pldasg",
    "diffusion-kasg",
    "diffusion-pldasg",
)


@dataclass(frozen=True)
class Finite:
    """Finite extent: states of the catastrophe process are [1:n]."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"finite extent must be >= 1, got {self.n}")


@dataclass(frozen=True)
class Infinite:
    """Unbounded extent with an optional truncation hint for consumers."""

    hint: int | None = None

    def __post_init__(self):
        if self.hint is not None and self.hint < 1:
            raise ValidationError(f"truncation hint must be >= 1, got {self.hint}")


@dataclass(frozen=True)
class RateSchedule:
    """Per-capita rates (lambda_i, mu_i) and intensity kappa over an extent.

    ``birth`` and ``death`` map a 1-based index to a rate.  Use
    :meth:`from_arrays` or :func:`make_schedule` for validated construction;
    the raw constructor trusts its inputs (used by closed-form families).
    """

    extent: Finite | Infinite
    kappa: float
    birth: Callable[[int], float] = field(repr=False)
    death: Callable[[int], float] = field(repr=False)
    label: str = ""

    @property
    def n(self) -> int | None:
        """Finite extent N, or None for unbounded schedules."""
        return self.extent.n if isinstance(self.extent, Finite) else None

    def lam(self, i: int) -> float:
        """Per-capita birth rate at i; honors lambda_N = 0 for finite extent."""
        if i < 1:
            raise ValidationError(f"birth rate index must be >= 1, got {i}")
        n = self.n
        if n is not None and i >= n:
            return 0.0
        return float(self.birth(i))

    def mu(self, i: int) -> float:
        """Per-capita death rate at i; honors mu_{N+1} = 0 for finite extent."""
        if i < 1:
            raise ValidationError(f"death rate index must be >= 1, got {i}")
        n = self.n
        if n is not None and i > n:
            return 0.0
        return float(self.death(i))

    def truncation_level(self, override: int | None = None) -> int:
        """Number of states to materialize: N, or the hint for unbounded."""
        if self.n is not None:
            return self.n
        if override is not None:
            return override
        if isinstance(self.extent, Infinite) and self.extent.hint is not None:
            return self.extent.hint
        raise TruncationError(
            "unbounded schedule has no truncation hint; pass one explicitly"
        )

    def validate(self, scan: int | None = None) -> "RateSchedule":
        """Check kappa > 0, interior lambda_i > 0 and mu_i >= 0.

        Finite schedules are checked exhaustively; unbounded ones over the
        first ``scan`` indices (default: the truncation hint or 64).
        """
        if not (self.kappa > 0.0) or not math.isfinite(self.kappa):
            raise ValidationError(f"kappa must be > 0, got {self.kappa}")
        if self.n is not None:
            birth_hi, death_hi = self.n - 1, self.n
        else:
            top = scan if scan is not None else (self.extent.hint or 64)
            birth_hi, death_hi = top, top
        for i in range(1, birth_hi + 1):
            v = self.lam(i)
            if not (v > 0.0) or not math.isfinite(v):
                raise ValidationError(f"lambda_{i} must be > 0, got {v}")
        for i in range(1, death_hi + 1):
            v = self.mu(i)
            if v < 0.0 or not math.isfinite(v):
                raise ValidationError(f"mu_{i} must be >= 0, got {v}")
        return self

    @classmethod
    def from_arrays(cls, lam, mu, kappa, n=None, label=""):
        """Build a finite schedule from explicit arrays.

        ``lam`` lists lambda_1..lambda_{N-1} and ``mu`` lists mu_1..mu_N.
        A trailing entry for lambda_N (resp. mu_{N+1}) is tolerated only if
        it is exactly 0; nonzero values there contradict the boundary
        convention and are rejected rather than silently zeroed.
        """
        lam = [float(v) for v in lam]
        mu = [float(v) for v in mu]
        if n is None:
            n = len(mu) if len(mu) == len(lam) + 1 else len(mu)
        if len(lam) == n:
            if lam[-1] != 0.0:
                raise ValidationError(
                    f"lambda_{n} must be 0 for finite extent {n} (got {lam[-1]})"
                )
            lam = lam[:-1]
        if len(lam) != n - 1:
            raise ValidationError(
                f"expected {n - 1} birth rates for extent {n}, got {len(lam)}"
            )
        if len(mu) == n + 1:
            if mu[-1] != 0.0:
                raise ValidationError(
                    f"mu_{n + 1} must be 0 for finite extent {n} (got {mu[-1]})"
                )
            mu = mu[:-1]
        if len(mu) != n:
            raise ValidationError(
                f"expected {n} death rates for extent {n}, got {len(mu)}"
            )
        lam_t, mu_t = tuple(lam), tuple(mu)
        sched = cls(
            extent=Finite(n),
            kappa=float(kappa),
            birth=lambda i: lam_t[i - 1] if i <= n - 1 else 0.0,
            death=lambda i: mu_t[i - 1] if i <= n else 0.0,
            label=label,
        )
        return sched.validate()


def constant_schedule(lam, mu, kappa, extent):
    """Schedule with lambda_i = lam and mu_i = mu everywhere in range."""
    lam, mu = float(lam), float(mu)
    return RateSchedule(
        extent=extent, kappa=float(kappa),
        birth=lambda i: lam, death=lambda i: mu,
        label="constant",
    ).validate()


def affine_schedule(lam0, lam1, mu0, mu1, kappa, extent):
    """Schedule with lambda_i = lam0 + lam1*i and mu_i = mu0 + mu1*i."""
    return RateSchedule(
        extent=extent, kappa=float(kappa),
        birth=lambda i: lam0 + lam1 * i,
        death=lambda i: mu0 + mu1 * i,
        label="affine",
    ).validate()


def bar_transform(sched: RateSchedule, mu1: float = 0.0, check: bool = True):
    """Swap birth and death roles: new lambda_i = mu_i, new mu_i = lambda_{i-1}.

    The result lives on extent N+1 (finite case).  The boundary death rate
    at state 1 maps to the undefined lambda_0 and defaults to 0; absorption
    ratios b_{i+1}/b_2 upward of state 2 do not depend on it, so callers
    checking those ratios may pass any mu1 > 0 to make the absorption
    probabilities individually nonzero.

    Requires every mu_i > 0 in range (they become interior birth rates).
    """
    if isinstance(sched.extent, Finite):
        new_extent = Finite(sched.extent.n + 1)
    else:
        new_extent = sched.extent
    mu1 = float(mu1)
    out = RateSchedule(
        extent=new_extent,
        kappa=sched.kappa,
        birth=sched.mu,
        death=lambda i: mu1 if i == 1 else sched.lam(i - 1),
        label=f"bar({sched.label})" if sched.label else "bar",
    )
    if check:
        out.validate()
    return out


@dataclass(frozen=True)
class TailSumReport:
    """Partial sums of 1/lambda_i and 1/mu_i with divergence heuristics.

    The verdicts are heuristic only: "divergence plausible" means the
    partial sum keeps growing at least logarithmically across the last
    decades of indices.  Nothing here is a proof.
    """

    m: int
    lambda_partial_sum: float
    mu_partial_sum: float
    lambda_skipped: tuple[int, ...]
    mu_skipped: tuple[int, ...]
    lambda_divergence_plausible: bool
    mu_divergence_plausible: bool


def _partial_sums(rate, m):
    sums = [0.0]
    skipped = []
    acc = 0.0
    for i in range(1, m + 1):
        v = rate(i)
        if v == 0.0:
            skipped.append(i)
        else:
            acc += 1.0 / v
        sums.append(acc)
    return sums, tuple(skipped)


def _log_growth_verdict(sums, skipped, m):
    # Divergent-looking if the last decade's increment has not collapsed
    # relative to the previous decade's (harmonic-type growth keeps the
    # ratio near 1; convergent series send it to 0).
    if skipped:
        # Zero rates: the corresponding condition is treated as granted.
        return True
    if m >= 100:
        inc_last = sums[m] - sums[m // 10]
        inc_prev = sums[m // 10] - sums[m // 100]
        if inc_prev == 0.0:
            return inc_last > 0.0
        return inc_last >= 0.5 * inc_prev
    # Too few indices for two decades: compare against the mean term size.
    inc = sums[m] - sums[max(1, m // 10)]
    return inc >= 0.5 * (sums[m] / m) * math.log(10.0) * min(m, 9)


def tail_sum_diagnostic(sched: RateSchedule, m: int) -> TailSumReport:
    """Report partial sums of reciprocal rates up to index m.

    Zero rates are skipped and flagged; a death schedule with zeros makes
    the corresponding divergence condition vacuous, so its verdict is True.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    lam_sums, lam_skip = _partial_sums(sched.lam, m)
    mu_sums, mu_skip = _partial_sums(sched.mu, m)
    return TailSumReport(
        m=m,
        lambda_partial_sum=lam_sums[m],
        mu_partial_sum=mu_sums[m],
        lambda_skipped=lam_skip,
        mu_skipped=mu_skip,
        lambda_divergence_plausible=_log_growth_verdict(lam_sums, lam_skip, m),
        mu_divergence_plausible=_log_growth_verdict(mu_sums, mu_skip, m),
    )


def _parse_extent(doc):
    if "extent" not in doc:
        raise SpecError("schedule is missing 'extent'")
    ext = doc["extent"]
    if isinstance(ext, int):
        return Finite(ext)
    if isinstance(ext, dict):
        if "finite" in ext:
            return Finite(int(ext["finite"]))
        if "infinite" in ext:
            inner = ext["infinite"]
            if inner is True or inner is None:
                return Infinite()
            if isinstance(inner, dict):
                hint = inner.get("hint")
                return Infinite(int(hint) if hint is not None else None)
            return Infinite(int(inner))
    raise SpecError(f"unrecognized extent description: {ext!r}")


def _family_schedule(name, params, extent):
    if name in ("moran-kasg", "moran-pldasg", "diffusion-kasg", "diffusion-pldasg"):
        from . import popgen  # deferred: popgen depends on solvers/schedules

        if name.startswith("moran"):
            p = popgen.MoranParams(
                n=int(params["N"]),
                s=float(params["s"]),
                u=float(params["u"]),
                nu0=float(params["nu0"]),
                nu1=float(params["nu1"]) if "nu1" in params else None,
            )
            maker = popgen.kasg_schedule if name.endswith("kasg") else popgen.pldasg_schedule
            return maker(p)
        p = popgen.DiffusionParams(
            sigma=float(params["sigma"]),
            theta=float(params["theta"]),
            nu0=float(params["nu0"]) if "nu0" in params else None,
            nu1=float(params["nu1"]) if "nu1" in params else None,
        )
        if extent is None:
            extent = Infinite(params.get("hint"))
        maker = (
            popgen.diffusion_kasg_schedule
            if name.endswith("kasg")
            else popgen.diffusion_pldasg_schedule
        )
        return maker(p, hint=extent.hint if isinstance(extent, Infinite) else None)
    if extent is None:
        raise SpecError(f"family '{name}' requires an extent")
    if name == "constant":
        return constant_schedule(
            params["lambda"], params["mu"], params["kappa"], extent
        )
    if name == "affine":
        return affine_schedule(
            params.get("lambda0", 0.0), params.get("lambda1", 0.0),
            params.get("mu0", 0.0), params.get("mu1", 0.0),
            params["kappa"], extent,
        )
    raise SpecError(f"unknown schedule family '{name}' (known: {', '.join(_FAMILIES)})")


def make_schedule(doc: dict) -> RateSchedule:
    """Build a validated schedule from a v1 description document.

    The document carries either explicit ``lambda``/``mu`` arrays together
    with ``extent`` and ``kappa``, or a ``family`` block {name, params}.
    """
    if not isinstance(doc, dict):
        raise SpecError("schedule description must be a mapping")
    version = doc.get("version", 1)
    if version != 1:
        raise SpecError(f"unsupported schedule schema version {version!r}")

    if "family" in doc:
        fam = doc["family"]
        if not isinstance(fam, dict) or "name" not in fam:
            raise SpecError("family block must carry 'name' (and 'params')")
        extent = _parse_extent(doc) if "extent" in doc else None
        params = dict(fam.get("params", {}))
        if "kappa" in doc and "kappa" not in params:
            params["kappa"] = doc["kappa"]
        return _family_schedule(fam["name"], params, extent)

    extent = _parse_extent(doc)
    if "kappa" not in doc:
        raise SpecError("schedule is missing 'kappa'")
    if "lambda" not in doc or "mu" not in doc:
        raise SpecError("schedule needs 'lambda' and 'mu' arrays (or a family)")
    if isinstance(extent, Infinite):
        raise SpecError("explicit rate arrays require a finite extent")
    return RateSchedule.from_arrays(
        doc["lambda"], doc["mu"], doc["kappa"], n=extent.n, label=doc.get("label", "")
    )
