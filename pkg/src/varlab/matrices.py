"""G-matrices, C-matrices and distance-preservation probabilities.

For a hidden-only network with traces z_k (from x) and zbar_k (from xbar):

    G_L = prod_k W_k^T diag(phi'(z_k))
    C_L = prod_k W_k^T D_phi(z_k, zbar_k)

where D_phi holds the componentwise divided differences of phi. G_L is the
transpose of the input Jacobian, and C_L maps input differences exactly onto
output differences: F(x) - F(xbar) = C_L^T (x - xbar).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .network import Activation, InitScheme, ParameterSet, forward, sample_layer
from .numerics import Rng, spectral_norm

__all__ = [
    "MatrixSweepRecord",
    "diff_diagonal",
    "g_matrix",
    "c_matrix",
    "verify_c2c_identity",
    "depth_sweep",
    "direct_products",
    "preserve_probability_closed",
    "preserve_probability_mc",
    "sweep_csv",
    "SWEEP_HEADER",
]

NEAR_EQUAL_RTOL = 1e-12


def diff_diagonal(u, v, act: Activation | str, equal_rule: str = "one") -> np.ndarray:
    """Diagonal of D_phi(u, v).

    Exactly equal components get 1 (``equal_rule="one"``, the 0/0 = 1
    convention) or phi'(u) (``equal_rule="derivative"``). Components closer
    than 1e-12 * max(1, |u|) get phi'(u), since the quotient is pure rounding
    noise there.
    """
    act = Activation(act)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same shape")
    diff = u - v
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (act(u) - act(v)) / diff
    near = np.abs(diff) < NEAR_EQUAL_RTOL * np.maximum(1.0, np.abs(u))
    q = np.where(near, act.derivative(u), q)
    equal = diff == 0
    if equal_rule == "one":
        q = np.where(equal, 1.0, q)
    elif equal_rule == "derivative":
        q = np.where(equal, act.derivative(u), q)
    else:
        raise ValueError(f"unknown equal_rule {equal_rule!r}")
    return q


def _check_hidden(params: ParameterSet, x) -> np.ndarray:
    if params.extended:
        raise ValueError("G/C matrices are defined for hidden-only networks")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.in_dim,):
        raise ValueError(f"point of shape {x.shape} does not match width {params.in_dim}")
    return x


def g_matrix(params: ParameterSet, x) -> np.ndarray:
    x = _check_hidden(params, x)
    trace = forward(params, x)
    G = np.eye(params.in_dim)
    for W, z in zip(params.weights, trace.z):
        G = G @ (W.T * params.activation.derivative(z))
    return G


def c_matrix(params: ParameterSet, x, xbar, equal_rule: str = "one") -> np.ndarray:
    x = _check_hidden(params, x)
    xbar = _check_hidden(params, xbar)
    t, tb = forward(params, x), forward(params, xbar)
    C = np.eye(params.in_dim)
    for W, z, zb in zip(params.weights, t.z, tb.z):
        C = C @ (W.T * diff_diagonal(z, zb, params.activation, equal_rule))
    return C


def verify_c2c_identity(params: ParameterSet, x, xbar) -> float:
    """||F(x) - F(xbar) - C^T (x - xbar)|| / (1 + ||x - xbar||)."""
    x = _check_hidden(params, x)
    xbar = _check_hidden(params, xbar)
    dx = x - xbar
    dF = forward(params, x).output - forward(params, xbar).output
    C = c_matrix(params, x, xbar)
    return float(np.linalg.norm(dF - C.T @ dx) / (1.0 + np.linalg.norm(dx)))


@dataclass
class MatrixSweepRecord:
    """Spectral norms at one depth.

    ``norm_*`` are true values (they may under/overflow to 0/inf for extreme
    depths); ``log2_scale_*`` is the power of two factored out of the running
    product, and ``log10_*`` are always finite unless the product is exactly 0.
    """

    L: int
    norm_C: float
    norm_G_x: float
    norm_G_xbar: float
    log2_scale_C: int
    log2_scale_G_x: int
    log2_scale_G_xbar: int
    log10_C: float
    log10_G_x: float
    log10_G_xbar: float
    seed: int
    activation: str
    init: str


SWEEP_HEADER = ["L", "norm_C", "norm_G_x", "norm_G_xbar", "log2_scale_C", "seed", "activation", "init"]


class _RunningProduct:
    """Right-multiplied matrix product with a separately tracked power of two."""

    BIG, SMALL = 2.0**996, 2.0**-996  # ~1e300 and ~1e-300

    def __init__(self, d: int, rng: Rng):
        self.m = np.eye(d)
        self.exp = 0
        self.vec = rng.normal(size=d)

    def push(self, factor: np.ndarray):
        self.m = self.m @ factor
        peak = float(np.max(np.abs(self.m)))
        if peak > self.BIG or 0.0 < peak < self.SMALL:
            _, e = math.frexp(peak)
            self.m = np.ldexp(self.m, -e)
            self.exp += e

    def norm(self, tol: float, max_iter: int) -> tuple[float, float]:
        """(mantissa norm, log10 of true norm)."""
        # iterate on m m^T: the left singular vector of a long product settles
        # down, so the previous depth's vector is a good warm start
        # m^T m would overflow for a mantissa near 2^996, so iterate on a copy
        # scaled to unit peak and put the power of two back afterwards
        peak = float(np.max(np.abs(self.m)))
        if peak == 0.0:
            return 0.0, -math.inf
        _, e = math.frexp(peak)
        sigma, self.vec, _ = spectral_norm(np.ldexp(self.m.T, -e), tol=tol, max_iter=max_iter,
                                           start=self.vec, full_output=True)
        return sigma * 2.0**e, math.log10(sigma) + (self.exp + e) * math.log10(2.0)


def _ldexp(m: float, e: int) -> float:
    try:
        return math.ldexp(m, e)
    except OverflowError:
        return math.inf


def _random_pair(d: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    return rng.uniform(-1.0, 1.0, d), rng.uniform(-1.0, 1.0, d)


def depth_sweep(d: int, L_max: int, act: Activation | str, scheme: InitScheme, rng: Rng,
                x=None, xbar=None, tol: float = 1e-8, max_iter: int = 1000,
                seed_label: int | None = None) -> list[MatrixSweepRecord]:
    """Spectral norms of C_L, G_L(x), G_L(xbar) for L = 1..L_max.

    Hidden layer k is drawn from ``rng.child(k)`` exactly as
    :func:`varlab.network.init_params` does, so any prefix of the sweep can be
    rebuilt directly. The point pair defaults to uniform on [-1, 1]^d drawn
    from ``rng.child(0)``.
    """
    act = Activation(act)
    if L_max < 1:
        raise ValueError("L_max must be >= 1")
    if x is None or xbar is None:
        x, xbar = _random_pair(d, rng.child(0))
    s = np.asarray(x, dtype=np.float64)
    sb = np.asarray(xbar, dtype=np.float64)
    start = rng.child(2_000_000)
    prods = [_RunningProduct(d, start.child(i)) for i in range(3)]
    records = []
    for k in range(1, L_max + 1):
        W, b = sample_layer(d, d, scheme, rng.child(k))
        z, zb = W @ s + b, W @ sb + b
        prods[0].push(W.T * diff_diagonal(z, zb, act))
        prods[1].push(W.T * act.derivative(z))
        prods[2].push(W.T * act.derivative(zb))
        s, sb = act(z), act(zb)
        norms = [p.norm(tol, max_iter) for p in prods]
        records.append(MatrixSweepRecord(
            L=k,
            norm_C=_ldexp(norms[0][0], prods[0].exp),
            norm_G_x=_ldexp(norms[1][0], prods[1].exp),
            norm_G_xbar=_ldexp(norms[2][0], prods[2].exp),
            log2_scale_C=prods[0].exp,
            log2_scale_G_x=prods[1].exp,
            log2_scale_G_xbar=prods[2].exp,
            log10_C=norms[0][1],
            log10_G_x=norms[1][1],
            log10_G_xbar=norms[2][1],
            seed=rng.seed if seed_label is None else seed_label,
            activation=act.value,
            init=scheme.label(),
        ))
    return records


def direct_products(params: ParameterSet, x, xbar) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(C, G(x), G(xbar)) computed from scratch; the reference for sweeps."""
    return c_matrix(params, x, xbar), g_matrix(params, x), g_matrix(params, xbar)


def sweep_csv(records: list[MatrixSweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in records:
        row = asdict(r)
        w.writerow([repr(row[h]) if isinstance(row[h], float) else row[h] for h in SWEEP_HEADER])
    return buf.getvalue()


def preserve_probability_closed(p: float, d: int, act: Activation | str) -> float:
    """P(|phi(u) - phi(v)| = |u - v| componentwise) for i.i.d. sign-p inputs."""
    act = Activation(act)
    if not 0.0 < p < 1.0 or d < 1:
        raise ValueError("need p in (0, 1) and d >= 1")
    if act is Activation.RELU:
        return p ** (2 * d)
    if act is Activation.ABS:
        return (p * p + (1.0 - p) ** 2) ** d
    raise ValueError("closed form is only known for relu and abs")


def preserve_probability_mc(p: float, d: int, act: Activation | str, trials: int, rng: Rng,
                            chunk: int = 250_000) -> float:
    """Monte Carlo estimate of :func:`preserve_probability_closed`.

    Components are positive with probability p and have half-normal
    magnitudes; a trial counts when the distance is preserved exactly in
    every component.
    """
    act = Activation(act)
    if trials < 10_000:
        raise ValueError("need at least 10^4 trials")
    if not 0.0 < p < 1.0 or d < 1:
        raise ValueError("need p in (0, 1) and d >= 1")
    hits = 0
    done = 0
    i = 0
    while done < trials:
        n = min(chunk, trials - done)
        r = rng.child(i)
        i += 1

        def draw():
            sign = np.where(r.random((n, d)) < p, 1.0, -1.0)
            return sign * np.abs(r.normal(size=(n, d)))

        u, v = draw(), draw()
        ok = np.abs(act(u) - act(v)) == np.abs(u - v)
        hits += int(np.count_nonzero(ok.all(axis=1)))
        done += n
    return hits / trials
