"""Independent reference computations used by the test-suite."""

from itertools import combinations

import numpy as np


def lp_bruteforce(mu, nu):
    """Levy-Prokhorov distance by enumerating every subset of supp(mu).

    rho = max over A of the least eps with mu(A) <= nu(A^eps) + eps, where
    A^eps is the open eps-neighbourhood.  Between consecutive pairwise
    distances the neighbourhood is constant, so each subset is solved in
    closed form over the sorted distances.
    """
    D = mu.space.dist(mu.points, nu.points)
    t = np.unique(np.concatenate([[0.0], D.ravel()]))
    n = len(mu)
    best = 0.0
    for size in range(1, n + 1):
        for A in combinations(range(n), size):
            a = float(mu.weights[list(A)].sum())
            dA = D[list(A)].min(axis=0)
            # eps in (t_j, t_{j+1}]: the neighbourhood holds atoms with dA <= t_j
            nb = (nu.weights[None, :] * (dA[None, :] <= t[:, None])).sum(axis=1)
            eps_A = min(1.0, float(np.maximum(t, a - nb).min()))
            best = max(best, eps_A)
    return min(1.0, best)


def periodic_bruteforce(aut, n):
    """Count points fixed by A^n by scanning the grid with denominator |det(A^n - I)|."""
    from carpetdyn import toral

    M = toral.power(aut, n).matrix
    q = abs((M.a - 1) * (M.d - 1) - M.b * M.c)
    X, Y = np.meshgrid(np.arange(q, dtype=np.int64), np.arange(q, dtype=np.int64), indexing="ij")
    fx = (M.a * X + M.b * Y - X) % q == 0
    fy = (M.c * X + M.d * Y - Y) % q == 0
    return int((fx & fy).sum())


def grid_integral(f, grid=512):
    """Midpoint rule for the integral of f over the unit square."""
    c = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(c, c, indexing="ij")
    return float(np.mean(f(X, Y)))
