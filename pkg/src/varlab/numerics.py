"""Dense linear algebra and random sampling primitives.

Matrices and vectors are plain float64 numpy arrays. Everything here is a pure
function except :class:`Rng`, which wraps a seeded PCG64 stream.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

__all__ = [
    "Rng",
    "ConvergenceWarning",
    "DegenerateMatrixError",
    "as_matrix",
    "as_vector",
    "mat_vec",
    "mat_mul",
    "gaussian_matrix",
    "householder_qr",
    "orthogonalize",
    "spectral_norm",
    "geometric_mean",
]

DEFAULT_ZERO_THRESHOLD = 1e-30


class ConvergenceWarning(UserWarning):
    pass


class DegenerateMatrixError(ValueError):
    """Raised when a sampled matrix is numerically rank deficient."""


class Rng:
    """Deterministic, splittable random stream.

    Backed by numpy's PCG64 seeded through ``SeedSequence(seed, spawn_key=path)``.
    ``child(k)`` derives a new stream from ``(seed, path + (k,))`` alone, so a
    child never depends on how many variates its parent or siblings consumed.
    Normal variates use the Box-Muller transform on the stream's uniforms.
    """

    algorithm = "pcg64/seedsequence+box-muller"

    def __init__(self, seed: int = 0, path: tuple[int, ...] = ()):
        seed = int(seed)
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.path + tuple(int(k) for k in keys))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, loc=0.0, scale=1.0, size=None):
        """Gaussian variates via Box-Muller (both outputs of each pair are used)."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)  # (0, 1], keeps log finite
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        t = 2.0 * np.pi * u2
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(t)
        z[1::2] = r * np.sin(t)
        z = loc + scale * z[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {a.shape}")
    return a


def as_vector(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"expected a nonempty 1-D vector, got shape {a.shape}")
    return a


def mat_vec(m, v) -> np.ndarray:
    m, v = as_matrix(m), as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def mat_mul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def gaussian_matrix(rows: int, cols: int, sigma: float, rng: Rng) -> np.ndarray:
    """i.i.d. N(0, sigma**2) entries; ``sigma`` is the standard deviation."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return rng.normal(0.0, sigma, (rows, cols))


def householder_qr(a) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR of an m x n matrix (m >= n) by Householder reflections."""
    r = as_matrix(a).copy()
    m, n = r.shape
    if m < n:
        raise ValueError("householder_qr needs rows >= cols")
    vs = []
    for j in range(n):
        x = r[j:, j]
        normx = np.linalg.norm(x)
        if normx == 0.0:
            vs.append(None)
            continue
        v = x.copy()
        v[0] += math.copysign(normx, x[0])
        v /= np.linalg.norm(v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        vs.append(v)
    q = np.eye(m, n)
    for j in range(n - 1, -1, -1):
        v = vs[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])
    return q, np.triu(r[:n, :])


def orthogonalize(m, rtol: float = 1e-12) -> np.ndarray:
    """Orthonormal factor of ``m`` via Householder QR.

    Columns are sign-fixed so that ``R`` has a positive diagonal, which makes
    the result unique. Wide inputs are handled through their transpose and
    come back with orthonormal rows.
    """
    a = as_matrix(m)
    if a.shape[0] < a.shape[1]:
        return orthogonalize(a.T, rtol).T
    q, r = householder_qr(a)
    diag = np.diag(r)
    scale = np.linalg.norm(a, 2)
    if np.any(np.abs(diag) <= rtol * scale):
        raise DegenerateMatrixError("matrix is numerically rank deficient; resample")
    return q * np.where(diag < 0, -1.0, 1.0)


def spectral_norm(m, tol: float = 1e-8, max_iter: int = 1000, rng: Rng | None = None,
                  start=None, full_output: bool = False):
    """Largest singular value by power iteration on ``m.T @ m``.

    Stops when two successive estimates agree to ``tol`` relative. On
    non-convergence the last estimate is returned and a ConvergenceWarning is
    issued. With ``full_output`` returns ``(sigma, vector, converged)`` where
    ``vector`` is the right singular vector estimate (usable as the next
    ``start``).
    """
    a = as_matrix(m)
    n = a.shape[1]
    if start is not None:
        v = np.array(start, dtype=np.float64)
    else:
        v = (rng if rng is not None else Rng(0)).normal(size=n)
    nv = np.linalg.norm(v)
    if nv == 0.0 or not np.isfinite(nv):
        v = (rng if rng is not None else Rng(0)).normal(size=n)
        nv = np.linalg.norm(v)
    v = v / nv

    if not np.any(a):
        return (0.0, v, True) if full_output else 0.0

    est = 0.0
    converged = False
    restart = Rng(n, (1,))
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start landed in the null space
            v = restart.normal(size=n)
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        new = math.sqrt(nw)
        if abs(new - est) < tol * new:
            est = new
            converged = True
            break
        est = new
    if not converged:
        warnings.warn(f"power iteration did not converge in {max_iter} steps",
                      ConvergenceWarning, stacklevel=2)
    return (est, v, converged) if full_output else est


def geometric_mean(xs, zero_threshold: float = DEFAULT_ZERO_THRESHOLD) -> float:
    """exp(mean(log x)); returns 0 as soon as one value is below the threshold."""
    a = np.asarray(xs, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("geometric_mean of an empty list")
    if np.any(a < 0):
        raise ValueError("geometric_mean needs nonnegative values")
    if np.any(a < zero_threshold) or np.any(a == 0.0):
        return 0.0
    if a.size == 1:
        return float(a[0])  # exp(log(x)) is not always x bitwise
    return float(np.exp(np.mean(np.log(a))))
