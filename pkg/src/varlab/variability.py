"""Landscapes of extended networks over [-1, 1]^2 and the V3 variability measure.

V3 of one parameter sample is the integrated squared third partial
derivatives of ``f(x) = ||F(x)||^2`` along each axis, relative to the
integral of ``f^2``. Third derivatives come from the 5-point central stencil

    f'''(x) ~ (f(x+2h) - 2 f(x+h) + 2 f(x-h) - f(x-2h)) / (2 h^3)

and both integrals are means over the interior points that keep a 2-point
margin from the boundary (the area factor cancels). Samples are aggregated
with a geometric mean, which is 0 as soon as one sample has collapsed.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .budget import width_for_depth
from .network import Activation, InitScheme, NetworkConfig, ParameterSet, default_scheme, forward, init_params
from .numerics import DEFAULT_ZERO_THRESHOLD, Rng, geometric_mean

__all__ = [
    "Grid2D",
    "SurfaceField",
    "V3Config",
    "V3Result",
    "scalar_field",
    "third_partials_fd",
    "v3_of_field",
    "v3_sample",
    "v3_measure",
    "landscape_suite",
    "is_constant_field",
    "surface_csv",
    "v3_csv",
]

MARGIN = 2
COLLAPSE_EPS = 1e-3


@dataclass(frozen=True)
class Grid2D:
    n: int = 81
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("grid needs at least 5 points per axis")
        if not self.hi > self.lo:
            raise ValueError("grid bounds must satisfy lo < hi")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return self.lo + np.arange(self.n) * self.h

    def points(self) -> np.ndarray:
        """(n*n, 2) array, row-major: point (i, j) is ``(axis[i], axis[j])``."""
        a = self.axis
        xx, yy = np.meshgrid(a, a, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass
class SurfaceField:
    grid: Grid2D
    values: np.ndarray
    z_max: float | None = None
    collapsed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.grid.n ** 2:
            raise ValueError("field size does not match the grid")

    def as_grid(self) -> np.ndarray:
        return self.values.reshape(self.grid.n, self.grid.n)

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "SurfaceField":
        p = grid.points()
        return cls(grid, fn(p[:, 0], p[:, 1]))


def scalar_field(params: ParameterSet, grid: Grid2D) -> SurfaceField:
    if params.in_dim != 2:
        raise ValueError("landscapes need a network with 2 inputs")
    out = forward(params, grid.points()).output
    return SurfaceField(grid, np.sum(out * out, axis=1))


def third_partials_fd(field: SurfaceField) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis third derivative estimates on an (n, n) array.

    Entries within 2 points of the boundary along the differentiated axis
    are NaN.
    """
    F = field.as_grid()
    h3 = 2.0 * field.grid.h ** 3
    fx = np.full_like(F, np.nan)
    fy = np.full_like(F, np.nan)
    fx[2:-2, :] = (F[4:, :] - 2.0 * F[3:-1, :] + 2.0 * F[1:-3, :] - F[:-4, :]) / h3
    fy[:, 2:-2] = (F[:, 4:] - 2.0 * F[:, 3:-1] + 2.0 * F[:, 1:-3] - F[:, :-4]) / h3
    return fx, fy


def _interior(a: np.ndarray) -> np.ndarray:
    return a[MARGIN:-MARGIN, MARGIN:-MARGIN]


def v3_of_field(field: SurfaceField, zero_threshold: float = DEFAULT_ZERO_THRESHOLD) -> float:
    fx, fy = third_partials_fd(field)
    den = float(np.mean(_interior(field.as_grid()) ** 2))
    if not den >= zero_threshold:
        return 0.0
    num = float(np.mean(_interior(fx) ** 2 + _interior(fy) ** 2))
    return num / den


def v3_sample(params: ParameterSet, grid: Grid2D,
              zero_threshold: float = DEFAULT_ZERO_THRESHOLD) -> float:
    return v3_of_field(scalar_field(params, grid), zero_threshold)


@dataclass
class V3Config:
    N_w: int = 3300
    activation: Activation = Activation.RELU
    scheme: InitScheme | None = None
    grid: Grid2D = field(default_factory=Grid2D)
    num_samples: int = 1000
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if self.scheme is None:
            self.scheme = default_scheme(self.activation)
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


@dataclass
class V3Result:
    L: int
    d: int
    V3: float
    num_zero_samples: int
    samples: np.ndarray


def _sample_params(L: int, d: int, act, scheme, rng: Rng) -> ParameterSet:
    return init_params(NetworkConfig(L, d, act, io_dims=(2, 2)), scheme, rng)


def _v3_depth(cfg: V3Config, L: int, rng: Rng) -> V3Result:
    d = width_for_depth(cfg.N_w, L).d
    vals = np.array([
        v3_sample(_sample_params(L, d, cfg.activation, cfg.scheme, rng.child(L, k)),
                  cfg.grid, cfg.zero_threshold)
        for k in range(cfg.num_samples)
    ])
    return V3Result(L=L, d=d, V3=geometric_mean(vals, cfg.zero_threshold),
                    num_zero_samples=int(np.count_nonzero(vals < cfg.zero_threshold)),
                    samples=vals)


def v3_measure(cfg: V3Config, depths, rng: Rng, jobs: int = 1) -> list[V3Result]:
    """Geometric-mean V3 per depth. Sample k at depth L uses ``rng.child(L, k)``."""
    depths = [int(L) for L in depths]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_v3_depth, [cfg] * len(depths), depths, [rng] * len(depths)))
    return [_v3_depth(cfg, L, rng) for L in depths]


def is_constant_field(field: SurfaceField, eps: float = COLLAPSE_EPS) -> bool:
    v = field.values
    return bool(v.max() - v.min() <= eps * max(1.0, float(np.max(np.abs(v)))))


def landscape_suite(L: int, N_w: int, act: Activation | str, scheme: InitScheme | None,
                    n: int, samples: int, rng: Rng, eps: float = COLLAPSE_EPS) -> list[SurfaceField]:
    """Surfaces ``||F(x)||^2 / z_max`` for ``samples`` random parameter sets.

    Each surface is scaled by its own maximum. ``collapsed`` is set when the
    maximum is 0 or the normalized surface is flat to ``eps``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    act = Activation(act)
    scheme = scheme or default_scheme(act)
    plan = width_for_depth(N_w, L)
    grid = Grid2D(n)
    out = []
    for k in range(samples):
        raw = scalar_field(_sample_params(L, plan.d, act, scheme, rng.child(k)), grid)
        z_max = float(raw.values.max())
        if z_max > 0:
            surf = SurfaceField(grid, raw.values / z_max, z_max=z_max)
            surf.collapsed = is_constant_field(surf, eps)
        else:
            surf = SurfaceField(grid, np.zeros_like(raw.values), z_max=z_max, collapsed=True)
        surf.meta = {"sample": k, "L": L, "d": plan.d, "activation": act.value,
                     "scheme": scheme.label(), "z_max": z_max, "collapsed": surf.collapsed}
        out.append(surf)
    return out


def surface_csv(field: SurfaceField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "value"])
    for (x, y), v in zip(field.grid.points(), field.values):
        w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    return buf.getvalue()


def v3_csv(results: list[V3Result]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["L", "d", "V3", "num_zero_samples"])
    for r in results:
        w.writerow([r.L, r.d, repr(float(r.V3)), r.num_zero_samples])
    return buf.getvalue()
