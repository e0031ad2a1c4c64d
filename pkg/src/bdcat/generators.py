"""Generator matrices for the process families built from a rate schedule.

Processes
---------
``killed``                  population-scaled birth-death chain on [0:N] with
                            per-capita killing to an isolated cemetery.
``catastrophe``             irreducible chain on [1:N] whose collapses drop to
                            every lower state j <= i-2 at rate kappa each.
``killed_dual``             Siegmund dual of ``killed``, restricted to [1:N+1]
                            after dropping its isolated states; itself a
                            catastrophe-type chain.
``catastrophe_dual``        Siegmund dual of ``catastrophe``; a killed
                            birth-death chain absorbing at 1 and the cemetery.
``killed_level``            unit-rate level component of ``killed`` on
                            [n-1:N] + cemetery; absorbing at n-1 and cemetery.
``catastrophe_level``       level component of ``catastrophe`` on [n:N]; its
                            collapse arrows all point at n.
``catastrophe_level_marked`` the level component enriched with a flag that
                            flips, once and for all, when the first collapse
                            arrow fires.
``catastrophe_level_cut``   the level component with collapse arrows
                            redirected to a cemetery (used for first-passage
                            arguments).

States are integer labels; the cemetery is the ``CEMETERY`` sentinel and is
ordered above every integer.  Marked states are ``(i, FLAG_LIVE)`` or
``(i, FLAG_STRUCK)`` pairs.

Collapse fans (rate kappa to every j <= i-2) make the catastrophe-type
generators dense lower triangles.  They are materialized as explicit edges
for small state counts and kept as uniform blocks above
``MATERIALIZE_MAX`` states so that simulation stays O(1) per event.
"""

from __future__ import annotations

import numpy as np

from .errors import RangeError, ValidationError
from .schedules import Finite, RateSchedule


class _Cemetery:
    __slots__ = ()

    def __repr__(self):
        return "CEMETERY"


CEMETERY = _Cemetery()

FLAG_LIVE = "*"      # no collapse arrow used yet
FLAG_STRUCK = "o"    # after the first collapse arrow

MATERIALIZE_MAX = 2048

KINDS = (
    "killed",
    "catastrophe",
    "killed_dual",
    "catastrophe_dual",
    "killed_level",
    "catastrophe_level",
    "catastrophe_level_marked",
    "catastrophe_level_cut",
)


class UniformBlock:
    """A fan of transitions to every integer in [lo:hi] at the same rate."""

    __slots__ = ("lo", "hi", "rate")

    def __init__(self, lo, hi, rate):
        self.lo = int(lo)
        self.hi = int(hi)
        self.rate = float(rate)

    @property
    def count(self):
        return self.hi - self.lo + 1

    @property
    def total(self):
        return self.count * self.rate

    def __repr__(self):
        return f"UniformBlock([{self.lo}:{self.hi}], {self.rate})"


class Generator:
    """Sparse CTMC generator: off-diagonal rates, implied diagonal.

    ``edges`` maps source -> {target: rate}; ``blocks`` maps source to a
    tuple of :class:`UniformBlock`.  Instances are immutable by convention;
    all mutating access happens during construction.
    """

    def __init__(self, states, edges, blocks=None, kind="", meta=None):
        self.states = tuple(states)
        self._index = {s: i for i, s in enumerate(self.states)}
        self._edges = {s: dict(edges.get(s, {})) for s in self.states}
        self._blocks = {s: tuple(blocks.get(s, ())) for s in self.states} if blocks else {
            s: () for s in self.states
        }
        self.kind = kind
        self.meta = dict(meta or {})
        for s, row in self._edges.items():
            for t, r in row.items():
                if t not in self._index:
                    raise ValidationError(f"edge {s} -> {t} leaves the state space")
                if r < 0.0:
                    raise ValidationError(f"negative rate {r} on edge {s} -> {t}")
        self._out = {
            s: sum(self._edges[s].values()) + sum(b.total for b in self._blocks[s])
            for s in self.states
        }
        if self.has_cemetery and self._out.get(CEMETERY, 0.0) != 0.0:
            raise ValidationError("cemetery must have no outgoing rate")

    @property
    def has_cemetery(self):
        return CEMETERY in self._index

    @property
    def n_states(self):
        return len(self.states)

    def finite_states(self):
        """All states except the cemetery, in storage order."""
        return tuple(s for s in self.states if s is not CEMETERY)

    def index(self, state):
        return self._index[state]

    def edges(self, state):
        return self._edges[state]

    def blocks(self, state):
        return self._blocks[state]

    def out_rate(self, state):
        return self._out[state]

    def rate(self, src, dst):
        """Off-diagonal rate q(src, dst); 0 if absent."""
        r = self._edges[src].get(dst, 0.0)
        if isinstance(dst, int):
            for b in self._blocks[src]:
                if b.lo <= dst <= b.hi:
                    r += b.rate
        return r

    def row_items(self, state):
        """Yield (target, rate) pairs, expanding collapse blocks."""
        yield from self._edges[state].items()
        for b in self._blocks[state]:
            for j in range(b.lo, b.hi + 1):
                yield j, b.rate

    def absorbing_states(self):
        return tuple(s for s in self.states if self._out[s] == 0.0)

    def dense(self):
        """Dense generator matrix aligned with ``self.states``.

        Row sums are exactly zero by construction (diagonal = -off sum).
        Guarded against accidental huge materializations.
        """
        n = self.n_states
        if n > 8192:
            raise ValidationError(f"refusing dense materialization of {n} states")
        q = np.zeros((n, n))
        for s in self.states:
            i = self._index[s]
            for t, r in self.row_items(s):
                q[i, self._index[t]] += r
            q[i, i] = -self._out[s] + q[i, i]
        return q

    def restricted(self, keep):
        """Restriction to ``keep``; all dropped states must be isolated."""
        keep_set = set(keep)
        for s in self.states:
            for t, r in self.row_items(s):
                if r == 0.0:
                    continue
                if (s in keep_set) != (t in keep_set):
                    raise ValidationError(
                        f"cannot restrict: rate {s} -> {t} crosses the kept set"
                    )
        states = tuple(s for s in self.states if s in keep_set)
        edges = {s: dict(self._edges[s]) for s in states}
        blocks = {s: self._blocks[s] for s in states}
        meta = dict(self.meta)
        meta.pop("isolated", None)
        return type(self)(states, edges, blocks, kind=self.kind, meta=meta)

    def drop_isolated(self):
        """Drop the states flagged isolated at construction, if any."""
        isolated = self.meta.get("isolated", ())
        if not isolated:
            return self
        return self.restricted([s for s in self.states if s not in set(isolated)])

    def __repr__(self):
        span = f"{self.states[0]}..{self.states[-1]}"
        return f"<Generator {self.kind or 'custom'} {self.n_states} states [{span}]>"


class MarkedGenerator(Generator):
    """Generator over (level, flag) pairs with a one-way flag flip."""

    def __init__(self, states, edges, blocks=None, kind="", meta=None):
        super().__init__(states, edges, blocks, kind=kind, meta=meta)
        for s in self.states:
            if s is CEMETERY:
                continue
            i, flag = s
            if flag not in (FLAG_LIVE, FLAG_STRUCK):
                raise ValidationError(f"bad flag in state {s}")
        for s in self.states:
            if s is CEMETERY or s[1] == FLAG_LIVE:
                continue
            for t, r in self.row_items(s):
                if r > 0.0 and t is not CEMETERY and t[1] == FLAG_LIVE:
                    raise ValidationError(f"flag must be monotone: {s} -> {t}")


def _span(sched: RateSchedule, trunc: int | None):
    m = sched.truncation_level(trunc)
    if m < 1:
        raise ValidationError("truncation level must be >= 1")
    return m


def _collapse_row(edges, blocks, i, lo, rate, materialize):
    """Attach the fan i -> [lo : i-2] at per-target ``rate``."""
    hi = i - 2
    if hi < lo or rate == 0.0:
        return
    if materialize:
        row = edges.setdefault(i, {})
        for j in range(lo, hi + 1):
            row[j] = row.get(j, 0.0) + rate
    else:
        blocks.setdefault(i, []).append(UniformBlock(lo, hi, rate))


def _finish(states, edges, blocks, kind, meta, marked=False):
    blocks = {k: tuple(v) for k, v in blocks.items()}
    cls = MarkedGenerator if marked else Generator
    return cls(states, edges, blocks, kind=kind, meta=meta)


def build_generator(kind, sched, level=None, trunc=None):
    """Build the generator of one process family from a schedule.

    ``level`` is required for the *_level kinds.  ``trunc`` overrides the
    truncation hint for unbounded schedules; transitions past the truncation
    boundary are dropped (the solvers own refinement of that error).
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown process kind {kind!r} (known: {', '.join(KINDS)})")
    finite = isinstance(sched.extent, Finite)
    m = _span(sched, trunc)
    materialize = m + 2 <= MATERIALIZE_MAX
    meta = {"schedule": sched.label, "finite": finite, "truncation": None if finite else m}

    if kind in ("killed_level", "catastrophe_level", "catastrophe_level_marked",
                "catastrophe_level_cut"):
        if level is None:
            raise RangeError(f"kind {kind!r} requires a level")
        n = int(level)
        top = m if kind == "killed_level" else m - 1
        if not 1 <= n <= top:
            raise RangeError(f"level {n} out of range [1:{top}] for kind {kind!r}")
        meta["level"] = n

    edges: dict = {}
    blocks: dict = {}

    if kind == "killed":
        states = tuple(range(0, m + 1)) + (CEMETERY,)
        for i in range(1, m + 1):
            row = {}
            if i <= m - 1:
                row[i + 1] = i * sched.lam(i)
            row[i - 1] = i * sched.mu(i)
            row[CEMETERY] = i * sched.kappa
            edges[i] = row
        return _finish(states, edges, blocks, kind, meta)

    if kind == "catastrophe":
        states = tuple(range(1, m + 1))
        for i in range(1, m + 1):
            row = {}
            if i <= m - 1:
                row[i + 1] = i * sched.lam(i)
            if i >= 2:
                row[i - 1] = (i - 1) * sched.mu(i) + sched.kappa
            edges[i] = row
            _collapse_row(edges, blocks, i, 1, sched.kappa, materialize)
        return _finish(states, edges, blocks, kind, meta)

    if kind == "killed_dual":
        # Catastrophe-type chain on [1:N+1]; for unbounded schedules the
        # top state's upward edge is a truncation casualty like any other.
        states = tuple(range(1, m + 2))
        for i in range(1, m + 2):
            row = {}
            if i <= m:
                up = i * sched.mu(i)
                if up:
                    row[i + 1] = up
            if i >= 2:
                row[i - 1] = (i - 1) * sched.lam(i - 1) + sched.kappa
            edges[i] = row
            _collapse_row(edges, blocks, i, 1, sched.kappa, materialize)
        return _finish(states, edges, blocks, kind, meta)

    if kind == "catastrophe_dual":
        # Killed birth-death chain absorbing at 1 and the cemetery.  For a
        # finite extent the top state's would-be upward rate is folded into
        # its cemetery rate (exact duality); a truncated unbounded schedule
        # just drops it.
        states = tuple(range(1, m + 1)) + (CEMETERY,)
        for i in range(2, m + 1):
            row = {i - 1: (i - 1) * sched.lam(i - 1)}
            up = (i - 1) * sched.mu(i)
            dead = (i - 1) * sched.kappa
            if i <= m - 1:
                if up:
                    row[i + 1] = up
            elif finite:
                dead += up
            if dead:
                row[CEMETERY] = dead
            edges[i] = row
        return _finish(states, edges, blocks, kind, meta)

    n = meta["level"]

    if kind == "killed_level":
        states = tuple(range(n - 1, m + 1)) + (CEMETERY,)
        for i in range(n, m + 1):
            row = {i - 1: sched.mu(i), CEMETERY: sched.kappa}
            if i <= m - 1:
                row[i + 1] = sched.lam(i)
            edges[i] = row
        return _finish(states, edges, blocks, kind, meta)

    if kind == "catastrophe_level":
        states = tuple(range(n, m + 1))
        for i in range(n, m + 1):
            row = {}
            if i <= m - 1:
                row[i + 1] = sched.lam(i)
            if i >= n + 2:
                row[i - 1] = sched.mu(i)
            if i >= n + 1:
                row[n] = row.get(n, 0.0) + sched.kappa + (
                    sched.mu(i) if i == n + 1 else 0.0
                )
            edges[i] = row
        return _finish(states, edges, blocks, kind, meta)

    if kind == "catastrophe_level_cut":
        states = tuple(range(n, m + 1)) + (CEMETERY,)
        for i in range(n, m + 1):
            row = {}
            if i <= m - 1:
                row[i + 1] = sched.lam(i)
            if i >= n + 1:
                row[i - 1] = sched.mu(i)
                row[CEMETERY] = sched.kappa
            edges[i] = row
        return _finish(states, edges, blocks, kind, meta)

    # catastrophe_level_marked
    states = tuple((i, f) for i in range(n, m + 1) for f in (FLAG_LIVE, FLAG_STRUCK))
    for i in range(n, m + 1):
        live, struck = {}, {}
        if i <= m - 1:
            live[(i + 1, FLAG_LIVE)] = sched.lam(i)
            struck[(i + 1, FLAG_STRUCK)] = sched.lam(i)
        if i >= n + 1:
            # collapse arrows (and nothing else) flip the flag
            live[(n, FLAG_STRUCK)] = sched.kappa
            struck[(n, FLAG_STRUCK)] = struck.get((n, FLAG_STRUCK), 0.0) + sched.kappa
            if i == n + 1:
                live[(n, FLAG_LIVE)] = sched.mu(i)
                struck[(n, FLAG_STRUCK)] += sched.mu(i)
            else:
                live[(i - 1, FLAG_LIVE)] = sched.mu(i)
                struck[(i - 1, FLAG_STRUCK)] = sched.mu(i)
        edges[(i, FLAG_LIVE)] = live
        edges[(i, FLAG_STRUCK)] = struck
    return _finish(states, edges, blocks, kind, meta, marked=True)
