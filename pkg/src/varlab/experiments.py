"""Checkerboard trainability experiments at a fixed hidden parameter budget."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .budget import WidthPlan, activation_ratio, exact_width, width_for_depth
from .estimators import FCNetClassifier
from .network import Activation, InitScheme, ParameterSet, default_scheme, forward
from .numerics import Rng

__all__ = [
    "WidthPlan",
    "width_for_depth",
    "exact_width",
    "activation_ratio",
    "CheckerboardDataset",
    "checkerboard_generate",
    "split_dataset",
    "TrainConfig",
    "TrainResult",
    "DepthSummary",
    "evaluate",
    "train_cell",
    "train_gd",
    "depth_sweep_train",
    "aggregate",
    "PAPER_LR_GRID",
    "REDUCED_LR_GRID",
]

PAPER_LR_GRID = (0.001, 0.003, 0.006, 0.01, 0.03, 0.06, 0.1, 0.3, 0.6, 1.0)
REDUCED_LR_GRID = (0.01, 0.1, 0.3)
GRID_N = 81
BLOCK = 10
TRAIN_FRACTION = 0.25


@dataclass
class CheckerboardDataset:
    points: np.ndarray  # (6561, 2)
    labels: np.ndarray  # (6561,) int 0/1
    index: np.ndarray  # (6561, 2) grid indices (i, j)
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None

    @property
    def boundary(self) -> np.ndarray:
        return np.any(self.index % BLOCK == 0, axis=1)

    def with_split(self, train_idx, test_idx) -> "CheckerboardDataset":
        return replace(self, train_idx=np.asarray(train_idx), test_idx=np.asarray(test_idx))

    def targets(self, idx=None) -> np.ndarray:
        y = self.labels if idx is None else self.labels[idx]
        return np.repeat(y.astype(np.float64)[:, None], 2, axis=1)

    def to_csv(self) -> str:
        is_train = np.zeros(len(self.labels), dtype=int)
        if self.train_idx is not None:
            is_train[self.train_idx] = 1
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "label", "is_train"])
        for (x, y), lab, t in zip(self.points, self.labels, is_train):
            w.writerow([repr(float(x)), repr(float(y)), int(lab), int(t)])
        return buf.getvalue()


def checkerboard_generate(flip_parity: bool = False) -> CheckerboardDataset:
    """81 x 81 grid on [-1, 1]^2 with an 8 x 8 block pattern.

    Grid lines at indices divisible by 10 form the 0-labeled block edges;
    block (bi, bj) is labeled (bi + bj) mod 2, or its complement with
    ``flip_parity``.
    """
    axis = -1.0 + np.arange(GRID_N) * (2.0 / (GRID_N - 1))
    ii, jj = np.meshgrid(np.arange(GRID_N), np.arange(GRID_N), indexing="ij")
    index = np.column_stack([ii.ravel(), jj.ravel()])
    points = axis[index]
    parity = (index[:, 0] // BLOCK + index[:, 1] // BLOCK) % 2
    if flip_parity:
        parity = 1 - parity
    edge = np.any(index % BLOCK == 0, axis=1)
    labels = np.where(edge, 0, parity).astype(int)
    return CheckerboardDataset(points=points, labels=labels, index=index)


def split_dataset(ds: CheckerboardDataset, train_fraction: float = TRAIN_FRACTION,
                  rng: Rng | None = None) -> tuple[np.ndarray, np.ndarray]:
    n = len(ds.labels)
    m = int(math.floor(train_fraction * n))
    perm = (rng or Rng(0)).permutation(n)
    return np.sort(perm[:m]), np.sort(perm[m:])


def evaluate(params: ParameterSet, ds: CheckerboardDataset, indices) -> tuple[float, float]:
    """(sum of squared errors, accuracy) on the given points."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("empty index set")
    with np.errstate(over="ignore", invalid="ignore"):
        out = forward(params, ds.points[indices]).output
    y = ds.labels[indices]
    r = out - y[:, None]
    loss = float(np.sum(r * r))
    pred = (out.mean(axis=1) >= 0.5).astype(int)
    return loss, float(np.mean(pred == y))


@dataclass
class TrainConfig:
    N_w: int = 3200
    L: int = 10
    activation: Activation = Activation.RELU
    scheme: InitScheme | None = None
    iterations: int = 40000
    lr_grid: tuple[float, ...] = PAPER_LR_GRID
    decay_at: tuple[int, ...] | None = None  # default: 50/70/90% of iterations
    decay_factor: float = 5.0
    seeds: int = 10
    loss_scale: str = "mean"
    record_every: int = 0

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if self.scheme is None:
            self.scheme = default_scheme(self.activation)
        self.lr_grid = tuple(float(x) for x in self.lr_grid)
        if not self.lr_grid or any(lr <= 0 for lr in self.lr_grid):
            raise ValueError("learning rates must be positive")
        if self.decay_at is not None:
            d = [int(t) for t in self.decay_at]
            if d != sorted(set(d)) or (d and (d[0] < 1 or d[-1] >= self.iterations)):
                raise ValueError("decay junctures must be strictly increasing and < iterations")
            self.decay_at = tuple(d)
        if self.seeds < 1 or self.iterations < 1:
            raise ValueError("seeds and iterations must be >= 1")

    @classmethod
    def reduced(cls, N_w: int = 3200, L: int = 10, **kw) -> "TrainConfig":
        """Desk-scale protocol: 10000 iterations, 3 learning rates, 3 seeds."""
        kw.setdefault("iterations", 10000)
        kw.setdefault("lr_grid", REDUCED_LR_GRID)
        kw.setdefault("seeds", 3)
        return cls(N_w=N_w, L=L, **kw)

    @property
    def plan(self) -> WidthPlan:
        return width_for_depth(self.N_w, self.L)

    def manifest(self) -> dict:
        out = asdict(self)
        out["activation"] = self.activation.value
        out["scheme"] = self.scheme.label()
        out["bias_sigma"] = self.scheme.bias_sigma
        return out


@dataclass
class TrainResult:
    L: int
    d: int
    actual_params: int
    seed: int
    lr: float
    best_train_loss: float
    best_train_acc: float
    test_loss: float
    test_acc: float
    best_iter: int
    diverged: bool
    history: list = field(default_factory=list)
    cells: list = field(default_factory=list)

    CSV_HEADER = ["L", "d", "actual_params", "seed", "lr", "best_train_loss", "best_train_acc",
                  "test_loss", "test_acc", "best_iter", "diverged"]

    def row(self) -> list:
        return [self.L, self.d, self.actual_params, self.seed, repr(self.lr),
                repr(self.best_train_loss), repr(self.best_train_acc), repr(self.test_loss),
                repr(self.test_acc), self.best_iter, int(self.diverged)]

    def to_dict(self) -> dict:
        out = {h: getattr(self, h) for h in self.CSV_HEADER}
        out["history"] = [list(p) for p in self.history]
        return out


def _seed_streams(rng: Rng) -> tuple[Rng, Rng]:
    """(split stream, init stream) for one seed."""
    return rng.child(0), rng.child(1)


def train_cell(cfg: TrainConfig, ds: CheckerboardDataset, rng: Rng, lr: float,
               seed: int = 0) -> TrainResult:
    """One (seed, learning rate) run. The split and initial parameters depend on
    ``rng`` only, so every learning rate of a seed starts from the same point."""
    plan = cfg.plan
    split_rng, init_rng = _seed_streams(rng)
    if ds.train_idx is None:
        ds = ds.with_split(*split_dataset(ds, TRAIN_FRACTION, split_rng))
    clf = FCNetClassifier(hidden_layers=cfg.L, width=plan.d, activation=cfg.activation,
                          init=cfg.scheme, learning_rate=lr, n_iter=cfg.iterations,
                          decay_at=cfg.decay_at, decay_factor=cfg.decay_factor,
                          loss_scale=cfg.loss_scale, record_every=cfg.record_every,
                          random_state=init_rng)
    clf.fit(ds.points[ds.train_idx], ds.labels[ds.train_idx])
    nan = float("nan")
    if clf.best_iter_ < 0:
        train_loss = train_acc = test_loss = test_acc = nan
    else:
        train_loss, train_acc = evaluate(clf.params_, ds, ds.train_idx)
        test_loss, test_acc = evaluate(clf.params_, ds, ds.test_idx)
    return TrainResult(L=cfg.L, d=plan.d, actual_params=plan.actual_params, seed=seed, lr=lr,
                       best_train_loss=train_loss, best_train_acc=train_acc,
                       test_loss=test_loss, test_acc=test_acc, best_iter=clf.best_iter_,
                       diverged=clf.diverged_, history=clf.loss_curve_)


def _reduce(cells: list[TrainResult]) -> TrainResult:
    """Best training loss among non-diverged runs; a diverged run never wins."""
    ok = [c for c in cells if not c.diverged and np.isfinite(c.best_train_loss)]
    pool = ok or cells
    best = min(pool, key=lambda c: (c.best_train_loss if np.isfinite(c.best_train_loss) else np.inf))
    return replace(best, cells=list(cells))


def train_gd(cfg: TrainConfig, ds: CheckerboardDataset, rng: Rng, seed: int = 0) -> TrainResult:
    """All learning rates of ``cfg.lr_grid`` for one seed, reduced to the best."""
    return _reduce([train_cell(cfg, ds, rng, lr, seed) for lr in cfg.lr_grid])


@dataclass
class DepthSummary:
    L: int
    d: int
    actual_params: int
    n_seeds: int
    mean_train_loss: float
    var_train_loss: float
    mean_train_acc: float
    var_train_acc: float
    median_train_acc: float
    max_train_acc: float
    mean_test_loss: float
    var_test_loss: float
    mean_test_acc: float
    var_test_acc: float

    CSV_HEADER = ["L", "d", "actual_params", "n_seeds", "mean_train_loss", "var_train_loss",
                  "mean_train_acc", "var_train_acc", "median_train_acc", "max_train_acc",
                  "mean_test_loss", "var_test_loss", "mean_test_acc", "var_test_acc"]

    def row(self) -> list:
        return [v if isinstance(v, int) else repr(float(v))
                for v in (getattr(self, h) for h in self.CSV_HEADER)]


def aggregate(results: list[TrainResult]) -> DepthSummary:
    """Mean and (population) variance over seeds of the per-seed best results."""
    first = results[0]

    def stats(name):
        v = np.array([getattr(r, name) for r in results], dtype=np.float64)
        dv = v - v[0]  # shifted, so identical results give exactly (v[0], 0)
        return float(v[0] + np.mean(dv)), float(np.var(dv))

    tl, tlv = stats("best_train_loss")
    ta, tav = stats("best_train_acc")
    sl, slv = stats("test_loss")
    sa, sav = stats("test_acc")
    accs = np.array([r.best_train_acc for r in results], dtype=np.float64)
    return DepthSummary(L=first.L, d=first.d, actual_params=first.actual_params,
                        n_seeds=len(results), mean_train_loss=tl, var_train_loss=tlv,
                        mean_train_acc=ta, var_train_acc=tav,
                        median_train_acc=float(np.median(accs)), max_train_acc=float(np.max(accs)),
                        mean_test_loss=sl, var_test_loss=slv, mean_test_acc=sa, var_test_acc=sav)


def _cell_task(args):
    cfg, ds, rng, lr, seed = args
    return train_cell(cfg, ds, rng, lr, seed)


def depth_sweep_train(N_w: int, depths, template: TrainConfig, rng: Rng, jobs: int = 1,
                      ds: CheckerboardDataset | None = None):
    """Train every (depth, seed, lr) cell.

    Seed s uses ``rng.child(s)`` at every depth, so all depths share the same
    train/test split for a given seed. Returns ``(summaries, per_seed_best)``.
    """
    ds = ds or checkerboard_generate()
    tasks = []
    for L in depths:
        cfg = replace(template, N_w=N_w, L=int(L))
        for s in range(cfg.seeds):
            for lr in cfg.lr_grid:
                tasks.append((cfg, ds, rng.child(s), lr, s))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            cells = list(ex.map(_cell_task, tasks))
    else:
        cells = [_cell_task(t) for t in tasks]
    summaries, per_seed = [], []
    for L in depths:
        best = []
        for s in range(template.seeds):
            mine = [c for c in cells if c.L == int(L) and c.seed == s]
            best.append(_reduce(mine))
        per_seed.extend(best)
        summaries.append(aggregate(best))
    return summaries, per_seed


def results_csv(results: list[TrainResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TrainResult.CSV_HEADER)
    for r in results:
        for c in (r.cells or [r]):
            w.writerow(c.row())
    return buf.getvalue()


def summary_csv(summaries: list[DepthSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DepthSummary.CSV_HEADER)
    for s in summaries:
        w.writerow(s.row())
    return buf.getvalue()
