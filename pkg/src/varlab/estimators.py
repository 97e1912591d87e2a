"""scikit-learn compatible wrapper around full-batch gradient descent on FCNets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .budget import width_for_depth
from .network import (
    Activation,
    InitScheme,
    NetworkConfig,
    ParameterSet,
    backward,
    default_scheme,
    forward,
    init_params,
)
from .numerics import Rng

__all__ = ["step_schedule", "GDRun", "gradient_descent", "FCNetClassifier"]

PAPER_DECAY_FRACTIONS = (0.5, 0.7, 0.9)


def step_schedule(lr: float, n_iter: int, decay_at=None, factor: float = 5.0):
    """Piecewise-constant learning rate, divided by ``factor`` at each juncture.

    Junctures default to 50%, 70% and 90% of ``n_iter`` (20000/28000/36000
    for 40000 iterations).
    """
    if decay_at is None:
        decay_at = [int(round(f * n_iter)) for f in PAPER_DECAY_FRACTIONS]
        # short runs can round two junctures onto the same step
        decay_at = sorted({t for t in decay_at if 0 < t < n_iter})
    decay_at = sorted(int(t) for t in decay_at)
    if any(not 0 < t < n_iter for t in decay_at) or len(set(decay_at)) != len(decay_at):
        raise ValueError("decay junctures must be distinct and lie strictly inside the run")

    def rate(it: int) -> float:
        return lr / factor ** sum(it >= t for t in decay_at)

    rate.decay_at = decay_at
    return rate


@dataclass
class GDRun:
    best_loss: float
    best_iter: int
    best_params: list[np.ndarray]
    final_loss: float
    diverged: bool
    history: list[tuple[int, float]] = field(default_factory=list)


def gradient_descent(objective, params: list[np.ndarray], schedule, n_iter: int,
                     record_every: int = 0) -> GDRun:
    """Plain full-batch gradient descent, tracking the best iterate.

    ``objective(params) -> (loss, grads)`` with ``grads`` matching
    ``params``. Arrays in ``params`` are updated in place. The loss is
    evaluated ``n_iter + 1`` times (before every step and once after the
    last); a non-finite loss stops the run and marks it diverged.
    """
    best_loss, best_iter = np.inf, -1
    best = [p.copy() for p in params]
    history = []
    loss = np.nan
    diverged = False
    for it in range(n_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = objective(params)
        if not np.isfinite(loss):
            diverged = True
            break
        if record_every and it % record_every == 0:
            history.append((it, float(loss)))
        if loss < best_loss:
            best_loss, best_iter = float(loss), it
            for dst, src in zip(best, params):
                dst[...] = src
        if it == n_iter:
            break
        lr = schedule(it)
        for p, g in zip(params, grads):
            p -= lr * g
    return GDRun(best_loss=best_loss, best_iter=best_iter, best_params=best,
                 final_loss=float(loss), diverged=diverged, history=history)


class FCNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier: extended FCNet (2 outputs) trained by full-batch GD.

    Labels are mapped to target vectors (0, 0) and (1, 1) and the network
    minimizes the sum of squared errors. A point is predicted as the second
    class when the mean of the two outputs is at least 1/2.

    The width comes from ``width`` or, if omitted, from the hidden parameter
    budget ``n_params``. With ``loss_scale="mean"`` each step uses the
    gradient of the loss divided by the number of samples; ``"sum"`` steps
    on the raw sum.

    ``random_state`` is an int seed or a :class:`varlab.numerics.Rng`; the
    initial parameters are drawn from ``Rng(random_state)``.
    """

    def __init__(self, hidden_layers=10, width=None, n_params=3200, activation="relu",
                 init=None, learning_rate=0.01, n_iter=40000, decay_at=None,
                 decay_factor=5.0, loss_scale="mean", record_every=0, random_state=0):
        self.hidden_layers = hidden_layers
        self.width = width
        self.n_params = n_params
        self.activation = activation
        self.init = init
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.decay_at = decay_at
        self.decay_factor = decay_factor
        self.loss_scale = loss_scale
        self.record_every = record_every
        self.random_state = random_state

    def _resolved_width(self) -> int:
        if self.width is not None:
            return int(self.width)
        return width_for_depth(self.n_params, self.hidden_layers).d

    def _scheme(self) -> InitScheme:
        if self.init is None:
            return default_scheme(self.activation)
        if isinstance(self.init, InitScheme):
            return self.init
        return InitScheme.parse(self.init)

    def _rng(self) -> Rng:
        rs = self.random_state
        return rs if isinstance(rs, Rng) else Rng(0 if rs is None else int(rs))

    def init_params(self, n_features: int = 2) -> ParameterSet:
        config = NetworkConfig(self.hidden_layers, self._resolved_width(),
                               Activation(self.activation), io_dims=(n_features, 2))
        return init_params(config, self._scheme(), self._rng())

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) > 2:
            raise ValueError("FCNetClassifier is a binary classifier")
        if self.loss_scale not in ("mean", "sum"):
            raise ValueError("loss_scale must be 'mean' or 'sum'")
        self.n_features_in_ = X.shape[1]
        Y = np.repeat(y_idx.astype(np.float64)[:, None], 2, axis=1)
        params = self.init_params(X.shape[1])
        arrays = params.flat_arrays()
        scale = 1.0 / X.shape[0] if self.loss_scale == "mean" else 1.0

        def objective(_):
            trace = forward(params, X)
            r = trace.output - Y
            loss = float(np.sum(r * r))
            grads = backward(params, trace, (2.0 * scale) * r)
            return loss, [g for pair in grads for g in pair]

        schedule = step_schedule(self.learning_rate, self.n_iter, self.decay_at, self.decay_factor)
        run = gradient_descent(objective, arrays, schedule, self.n_iter, self.record_every)
        self.diverged_ = run.diverged
        self.best_loss_ = run.best_loss
        self.best_iter_ = run.best_iter
        self.final_loss_ = run.final_loss
        self.loss_curve_ = run.history
        self.params_ = ParameterSet.from_layers(
            params.activation, list(zip(run.best_params[0::2], run.best_params[1::2])), True)
        return self

    def network_output(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("feature count differs from fit")
        with np.errstate(over="ignore", invalid="ignore"):
            return forward(self.params_, X).output

    def decision_function(self, X) -> np.ndarray:
        return self.network_output(X).mean(axis=1)

    def predict(self, X) -> np.ndarray:
        idx = (self.decision_function(X) >= 0.5).astype(int)
        if len(self.classes_) == 1:
            return np.full(idx.shape, self.classes_[0])
        return self.classes_[idx]

    def sse(self, X, y) -> float:
        """Sum of squared errors against the (label, label) targets."""
        y_idx = np.searchsorted(self.classes_, np.asarray(y)).astype(np.float64)
        r = self.network_output(X) - y_idx[:, None]
        return float(np.sum(r * r))
