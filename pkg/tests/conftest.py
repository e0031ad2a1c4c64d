"""Shared fixtures: random schedule factory and independent oracles.

The oracles deliberately avoid the code paths they are used to check:
absorption via a dense harmonic solve assembled here from the generator
matrix, stationary laws via an eigenvector route, and matrix exponentials
via scipy's expm.
"""

import numpy as np
import pytest
import scipy.linalg

from bdcat import CEMETERY, RateSchedule, build_generator


def rand_sched(rng, nmax=50, nmin=2, lam_range=(0.1, 10.0),
               mu_range=(0.1, 10.0), kap_range=(0.1, 5.0)):
    n = int(rng.integers(nmin, nmax + 1))
    lam = rng.uniform(*lam_range, size=n - 1)
    mu = rng.uniform(*mu_range, size=n)
    kap = rng.uniform(*kap_range)
    return RateSchedule.from_arrays(lam, mu, kap, n=n)


def dense_absorption_oracle(sched):
    """Absorption-at-0 probabilities by a dense linear solve on the killed
    chain: boundary 1 at state 0, 0 at the cemetery."""
    gen = build_generator("killed", sched)
    n = sched.extent.n
    transient = list(range(1, n + 1))
    a = np.zeros((n, n))
    rhs = np.zeros(n)
    for s in transient:
        i = s - 1
        a[i, i] = -gen.out_rate(s)
        for t, r in gen.row_items(s):
            if t is CEMETERY:
                continue
            if t == 0:
                rhs[i] -= r
            else:
                a[i, t - 1] += r
    h = np.linalg.solve(a, rhs)
    return np.concatenate(([1.0], h))


def stationary_eig_oracle(gen):
    """Stationary law as the null space of Q^T (SVD route)."""
    q = gen.dense()
    ns = scipy.linalg.null_space(q.T)
    assert ns.shape[1] == 1, "generator does not have a 1-dim null space"
    w = ns[:, 0]
    w = np.abs(w)
    return w / w.sum()


def expm_oracle(gen, t):
    return scipy.linalg.expm(gen.dense() * t)


@pytest.fixture
def micro_sched():
    """The hand-solved two-state instance: lam1 = mu1 = mu2 = kappa = 1."""
    return RateSchedule.from_arrays([1.0], [1.0, 1.0], 1.0, n=2)
