"""Stochastic simulation of the process families and estimators for
absorption probabilities, stationary laws, and excursion statistics.

Randomness comes from counter-based Philox streams keyed by
(seed, replicate index), so results are bit-reproducible and independent
of any parallel execution order.  Aggregation is an ordered reduction over
replicate indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chisquare

from .errors import ValidationError
from .generators import FLAG_LIVE, FLAG_STRUCK, Generator, build_generator
from .schedules import RateSchedule

STATUS_ABSORBED = "absorbed"
STATUS_HORIZON = "horizon"
STATUS_EVENT_CAP = "event_cap"


@dataclass(frozen=True)
class SimConfig:
    """Simulation bundle: seed, replicate count, caps, and averaging window."""

    seed: int = 0
    replicates: int = 1
    max_events: int = 10_000_000
    burn_in: float = 0.0
    horizon: float | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValidationError("burn-in fraction must be in [0, 1)")
        if self.max_events < 1:
            raise ValidationError("max_events must be >= 1")
        if self.horizon is not None and self.horizon <= 0:
            raise ValidationError("horizon must be > 0")


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Philox stream for one replicate; keying makes streams independent."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, replicate], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class PathRecord:
    """One jump path: (time, state) at every jump, plus how it ended."""

    times: tuple[float, ...]
    states: tuple
    status: str

    @property
    def terminal(self):
        return self.states[-1]

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValidationError("times and states must align")


class _Row:
    """Jump table for one state: total rate, cumulative edges, fans."""

    __slots__ = ("out", "targets", "cum", "blocks", "edge_total")

    def __init__(self, gen, state):
        edges = gen.edges(state)
        self.targets = list(edges.keys())
        rates = np.array([edges[t] for t in self.targets], dtype=float)
        self.blocks = gen.blocks(state)
        self.cum = np.cumsum(rates) if len(rates) else np.zeros(0)
        self.edge_total = float(self.cum[-1]) if len(rates) else 0.0
        self.out = self.edge_total + sum(b.total for b in self.blocks)

    def draw(self, u):
        """Target for a uniform draw u in [0, out)."""
        if u < self.edge_total:
            return self.targets[int(np.searchsorted(self.cum, u, side="right"))]
        u -= self.edge_total
        for b in self.blocks:
            if u < b.total:
                return b.lo + min(int(u / b.rate), b.count - 1)
            u -= b.total
        return self.targets[-1]  # rounding fell off the end; last edge


class PathEngine:
    """Reusable jump-chain simulator for one generator."""

    def __init__(self, gen: Generator):
        self.gen = gen
        self.rows = {s: _Row(gen, s) for s in gen.states}

    def run(self, init, cfg: SimConfig, rng, stop_states=frozenset()) -> PathRecord:
        if init not in self.rows:
            raise ValidationError(f"initial state {init!r} not in the state space")
        horizon = cfg.horizon if cfg.horizon is not None else math.inf
        t = 0.0
        s = init
        times = [0.0]
        states = [s]
        for _ in range(cfg.max_events):
            row = self.rows[s]
            if row.out == 0.0 or s in stop_states:
                return PathRecord(tuple(times), tuple(states), STATUS_ABSORBED)
            dt = rng.exponential(1.0 / row.out)
            if t + dt > horizon:
                return PathRecord(tuple(times), tuple(states), STATUS_HORIZON)
            t += dt
            s = row.draw(rng.random() * row.out)
            times.append(t)
            states.append(s)
        if self.rows[s].out == 0.0 or s in stop_states:
            return PathRecord(tuple(times), tuple(states), STATUS_ABSORBED)
        return PathRecord(tuple(times), tuple(states), STATUS_EVENT_CAP)

    def return_time(self, start, cfg: SimConfig, rng) -> float:
        """First return time to ``start`` (the first jump always leaves it)."""
        s = start
        t = 0.0
        for _ in range(cfg.max_events):
            row = self.rows[s]
            t += rng.exponential(1.0 / row.out)
            s = row.draw(rng.random() * row.out)
            if s == start:
                return t
        raise ValidationError("event cap hit during a return-time replicate")


def simulate_path(gen: Generator, init, cfg: SimConfig,
                  rng: np.random.Generator, stop_states=frozenset()) -> PathRecord:
    """One exact jump path: exponential holds, jumps by normalized rates.

    Stops at absorption (zero out-rate or a state in ``stop_states``), at
    the horizon, or at the event cap; the cap is a status flag, never an
    exception.
    """
    return PathEngine(gen).run(init, cfg, rng, stop_states)


@dataclass(frozen=True)
class MCEstimate:
    """A scalar Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    replicates: int
    seed: int
    label: str = ""
    meta: dict = field(default_factory=dict)


def estimate_absorption(sched: RateSchedule, init: int, cfg: SimConfig,
                        trunc: int | None = None, on_path=None) -> MCEstimate:
    """Fraction of replicates of the killed chain absorbed at 0.

    Each replicate runs on its own Philox stream until absorption; the
    standard error is binomial.  ``on_path(rep, path)``, when given, sees
    every finished replicate (for event logging).
    """
    gen = build_generator("killed", sched, trunc=trunc)
    if init == 0:
        return MCEstimate(1.0, 0.0, cfg.replicates, cfg.seed, "absorption",
                          {"init": 0})
    engine = PathEngine(gen)
    hits = 0
    terminals: dict = {}
    for rep in range(cfg.replicates):
        rng = replicate_rng(cfg.seed, rep)
        path = engine.run(init, cfg, rng)
        if on_path is not None:
            on_path(rep, path)
        term = path.terminal
        terminals[str(term)] = terminals.get(str(term), 0) + 1
        if term == 0:
            hits += 1
    p = hits / cfg.replicates
    se = math.sqrt(p * (1.0 - p) / cfg.replicates)
    return MCEstimate(p, se, cfg.replicates, cfg.seed, "absorption",
                      {"init": init, "terminals": terminals})


@dataclass(frozen=True)
class StationaryEstimate:
    """Occupation-time estimate of a stationary law with batch-means errors."""

    states: tuple
    values: np.ndarray
    stderr: np.ndarray
    batch_means: np.ndarray  # (n_batches, n_states)
    replicates: int
    seed: int

    def __getitem__(self, state):
        return float(self.values[self.states.index(state)])

    def se(self, state):
        return float(self.stderr[self.states.index(state)])


def estimate_stationary(gen: Generator, cfg: SimConfig, init=None,
                        n_batches: int = 16, on_path=None) -> StationaryEstimate:
    """Time-weighted occupation measure after burn-in, averaged over paths.

    Standard errors come from batch means over replicate groups (at least
    16 batches when the replicate count allows).
    """
    if cfg.horizon is None:
        raise ValidationError("stationary estimation needs a finite horizon")
    states = gen.states
    idx = {s: k for k, s in enumerate(states)}
    if init is None:
        init = states[0]
    engine = PathEngine(gen)
    burn_time = cfg.burn_in * cfg.horizon
    window = cfg.horizon - burn_time
    occ = np.zeros((cfg.replicates, len(states)))
    for rep in range(cfg.replicates):
        rng = replicate_rng(cfg.seed, rep)
        path = engine.run(init, cfg, rng)
        if on_path is not None:
            on_path(rep, path)
        times = list(path.times) + [cfg.horizon]
        row = occ[rep]
        for k in range(len(path.states)):
            b = times[k + 1]
            if b <= burn_time:
                continue
            a = times[k] if times[k] > burn_time else burn_time
            row[idx[path.states[k]]] += b - a
    occ /= window
    values = occ.mean(axis=0)
    nb = min(n_batches, cfg.replicates)
    batches = np.array_split(occ, nb, axis=0)
    bm = np.array([b.mean(axis=0) for b in batches])
    stderr = bm.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros(len(states))
    return StationaryEstimate(
        states=states, values=values, stderr=stderr, batch_means=bm,
        replicates=cfg.replicates, seed=cfg.seed,
    )


@dataclass(frozen=True)
class ExcursionStats:
    """Estimates for the level-n excursion decomposition.

    From (n+1, live), a path either steps down to (n, live), completes a
    right excursion back to (n+1, live), or gets struck by a collapse arrow
    (directly or mid-excursion).  ``cn_direct`` estimates the chance of
    reaching n with the flag still live; ``cn_ratio`` reaches the same
    quantity through p_down / (1 - p_excursion).
    """

    level: int
    replicates: int
    seed: int
    cn_direct: float
    cn_direct_se: float
    cn_ratio: float
    cn_ratio_se: float
    p_down: float
    p_down_se: float
    p_excursion: float
    p_excursion_se: float
    p_struck: float
    p_struck_se: float
    mean_excursion_time: float
    mean_excursion_time_se: float
    mean_total_excursion_time: float
    mean_total_excursion_time_se: float
    mean_return_low: float        # E[return time to n from n]
    mean_return_low_se: float
    mean_return_high: float       # E[return time to n+1 from n+1]
    mean_return_high_se: float
    excursion_counts: dict        # histogram of completed excursions per path


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if n == 0:
        return math.nan, math.nan
    if n == 1:
        return float(xs[0]), math.nan
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(n))


def excursion_statistics(sched: RateSchedule, n: int, cfg: SimConfig,
                         trunc: int | None = None) -> ExcursionStats:
    """Simulate the marked level component from (n+1, live) and classify.

    Each replicate also runs one return-time cycle of the unmarked level
    component from n and one from n+1, on the same stream, feeding the
    regeneration-time checks.
    """
    marked = build_generator("catastrophe_level_marked", sched, level=n, trunc=trunc)
    plain = build_generator("catastrophe_level", sched, level=n, trunc=trunc)
    low_live = (n, FLAG_LIVE)
    low_struck = (n, FLAG_STRUCK)
    start = (n + 1, FLAG_LIVE)
    stop = frozenset((low_live, low_struck))
    game = PathEngine(marked)
    cycle = PathEngine(plain)

    down = loop = struck = 0
    live_hits = 0
    m_counts: dict[int, int] = {}
    exc_durations: list[float] = []
    totals = np.zeros(cfg.replicates)
    ret_low = np.zeros(cfg.replicates)
    ret_high = np.zeros(cfg.replicates)

    for rep in range(cfg.replicates):
        rng = replicate_rng(cfg.seed, rep)
        path = game.run(start, cfg, rng, stop_states=stop)
        if path.status != STATUS_ABSORBED:
            raise ValidationError("excursion replicate hit the event cap")
        if path.terminal == low_live:
            live_hits += 1
        # classify rounds at (n+1, live): down-step, completed excursion, strike
        states, times = path.states, path.times
        m = 0
        total_exc = 0.0
        first_round = None
        k = 0
        while True:
            nxt = states[k + 1]
            if nxt == low_live:
                first_round = first_round or "down"
                break
            if nxt == low_struck:
                first_round = first_round or "struck"
                break
            # moved up: scan to the excursion's end
            j = k + 1
            while states[j] != start and states[j] not in stop:
                j += 1
            if states[j] == start:
                m += 1
                exc_durations.append(times[j] - times[k + 1])
                total_exc += times[j] - times[k + 1]
                first_round = first_round or "loop"
                k = j
                continue
            first_round = first_round or "struck"
            break
        if first_round == "down":
            down += 1
        elif first_round == "loop":
            loop += 1
        else:
            struck += 1
        m_counts[m] = m_counts.get(m, 0) + 1
        totals[rep] = total_exc
        ret_low[rep] = cycle.return_time(n, cfg, rng)
        ret_high[rep] = cycle.return_time(n + 1, cfg, rng)

    reps = cfg.replicates
    p_down, p_loop, p_struck = down / reps, loop / reps, struck / reps
    cn_direct = live_hits / reps
    cn_direct_se = math.sqrt(cn_direct * (1 - cn_direct) / reps)

    def bin_se(p):
        return math.sqrt(p * (1 - p) / reps)

    # delta method for p_down / (1 - p_excursion), multinomial covariances
    if p_loop < 1.0:
        cn_ratio = p_down / (1.0 - p_loop)
        g1 = 1.0 / (1.0 - p_loop)
        g2 = p_down / (1.0 - p_loop) ** 2
        var = (
            g1 * g1 * p_down * (1 - p_down)
            + g2 * g2 * p_loop * (1 - p_loop)
            + 2.0 * g1 * g2 * (-p_down * p_loop)
        ) / reps
        cn_ratio_se = math.sqrt(max(var, 0.0))
    else:
        cn_ratio, cn_ratio_se = math.nan, math.nan

    exc_mean, exc_se = _mean_se(exc_durations)
    tot_mean, tot_se = _mean_se(totals)
    rl_mean, rl_se = _mean_se(ret_low)
    rh_mean, rh_se = _mean_se(ret_high)

    return ExcursionStats(
        level=n, replicates=reps, seed=cfg.seed,
        cn_direct=cn_direct, cn_direct_se=cn_direct_se,
        cn_ratio=cn_ratio, cn_ratio_se=cn_ratio_se,
        p_down=p_down, p_down_se=bin_se(p_down),
        p_excursion=p_loop, p_excursion_se=bin_se(p_loop),
        p_struck=p_struck, p_struck_se=bin_se(p_struck),
        mean_excursion_time=exc_mean, mean_excursion_time_se=exc_se,
        mean_total_excursion_time=tot_mean, mean_total_excursion_time_se=tot_se,
        mean_return_low=rl_mean, mean_return_low_se=rl_se,
        mean_return_high=rh_mean, mean_return_high_se=rh_se,
        excursion_counts=dict(sorted(m_counts.items())),
    )


def geometric_fit_pvalue(counts: dict[int, int]) -> float:
    """Chi-square p-value that (count + 1) is geometric on {1, 2, ...}.

    The success parameter is fitted by maximum likelihood (1 / mean), one
    degree of freedom is charged for it, and sparse upper cells are lumped
    so every expected count is at least 5.
    """
    total = sum(counts.values())
    if total == 0:
        raise ValidationError("empty histogram")
    mean_shifted = sum((m + 1) * c for m, c in counts.items()) / total
    p = 1.0 / mean_shifted
    if p >= 1.0:
        # all mass at zero completed excursions: geometric with p = 1 fits
        return 1.0

    max_m = max(counts)
    # lump cells upward so every expected count clears 5
    cells: list[int] = []
    exp_cells: list[float] = []
    acc_obs = 0
    acc_exp = 0.0
    for m in range(0, max_m + 1):
        acc_obs += counts.get(m, 0)
        acc_exp += total * p * (1 - p) ** m
        if acc_exp >= 5.0 and total * (1 - p) ** (m + 1) >= 5.0:
            cells.append(acc_obs)
            exp_cells.append(acc_exp)
            acc_obs, acc_exp = 0, 0.0
    tail_obs = total - sum(cells)
    tail_exp = total - sum(exp_cells)
    cells.append(tail_obs)
    exp_cells.append(tail_exp)
    if len(cells) < 3:
        return 1.0  # too few cells to test beyond the fitted parameter
    exp_arr = np.asarray(exp_cells, dtype=float)
    exp_arr *= sum(cells) / exp_arr.sum()
    _, pval = chisquare(np.asarray(cells, dtype=float), exp_arr, ddof=1)
    return float(pval)
