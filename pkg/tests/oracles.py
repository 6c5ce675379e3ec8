"""Independent reference computations used only by the tests."""

import functools
import itertools

import numpy as np
from scipy import optimize


@functools.lru_cache(maxsize=4)
def _simplex_grid(n, k):
    heads = np.array([h for h in itertools.product(range(k + 1), repeat=n - 1) if sum(h) <= k])
    return np.column_stack([heads, k - heads.sum(axis=1)]) / k


def simplex_grid_minimizer(v, step=0.02, tol=1e-9):
    """Nearest point of the probability simplex by dense grid then pattern search.

    The search moves mass between pairs of coordinates (directions e_i - e_j),
    which span the simplex's tangent cone, halving the step until ``tol``.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    grid = _simplex_grid(n, int(round(1 / step)))
    dist = np.sum((grid - v) ** 2, axis=1)
    x, best_f, h = grid[np.argmin(dist)].copy(), dist.min(), step
    while h > tol:
        improved = False
        for i, j in itertools.permutations(range(n), 2):
            move = min(h, x[j])
            if move <= 0:
                continue
            y = x.copy()
            y[i] += move
            y[j] -= move
            fy = np.sum((y - v) ** 2)
            if fy < best_f - 1e-18:
                x, best_f, improved = y, fy, True
        if not improved:
            h /= 2
    return x


def matrix_nearest_state(mu, starts=4, seed=0):
    """Nearest density matrix in Frobenius norm by direct optimization over rho = T T^dag / tr.

    Makes no use of eigenvectors of ``mu``.
    """
    d = mu.shape[0]
    rng = np.random.default_rng(seed)
    iu = np.tril_indices(d)

    def unpack(p):
        t = np.zeros((d, d), dtype=complex)
        t[iu] = p[: len(iu[0])] + 1j * p[len(iu[0]):]
        r = t @ t.conj().T
        return r / np.trace(r).real

    def f(p):
        return np.sum(np.abs(unpack(p) - mu) ** 2)

    best = None
    for _ in range(starts):
        p0 = rng.normal(size=2 * len(iu[0]))
        res = optimize.minimize(f, p0, method="BFGS", options={"gtol": 1e-12, "maxiter": 20000})
        res = optimize.minimize(f, res.x, method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 40000})
        if best is None or res.fun < best.fun:
            best = res
    return unpack(best.x)
