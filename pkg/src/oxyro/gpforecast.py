"""Gaussian-process one-step-ahead forecaster for continuous oxygen users.

A series ``d_1..d_n`` is embedded into lag vectors ``(d_{t-1}, ..., d_{t-TL})``
with target ``d_t``; a GP with squared-exponential plus white-noise
covariance is fitted by maximising the log marginal likelihood, and the
predictive mean and variance of the next value give the nominal demand and
its deviation for the coming horizon.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize
from scipy.stats import norm

from .instance import DemandCurve

LENGTH_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-6, 1e6)
NOISE_BOUNDS = (1e-8, 1e4)
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class GramError(np.linalg.LinAlgError):
    """Covariance matrix stayed indefinite after the largest jitter."""


@dataclass(frozen=True)
class KernelSpec:
    signal_variance: float
    length_scale: float
    noise_variance: float

    def __post_init__(self):
        if min(self.signal_variance, self.length_scale, self.noise_variance) <= 0:
            raise ValueError("kernel hyperparameters must be strictly positive")

    def to_log(self) -> np.ndarray:
        return np.log([self.signal_variance, self.length_scale, self.noise_variance])

    @classmethod
    def from_log(cls, theta: Sequence[float]) -> "KernelSpec":
        sf, ell, sn = np.exp(theta)
        return cls(float(sf), float(ell), float(sn))


@dataclass(frozen=True)
class SeriesDataset:
    values: tuple[float, ...]
    lag: int = 3

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.lag < 1:
            raise ValueError("lag must be a positive integer")
        if len(self.values) <= self.lag:
            raise ValueError(f"series of length {len(self.values)} is too short for lag {self.lag}")

    @classmethod
    def from_csv(cls, path: Union[str, Path], lag: int = 3) -> "SeriesDataset":
        """Two-column delimited text (timestamp, value); a header row is skipped."""
        values = []
        with open(path, newline="") as fh:
            for k, row in enumerate(csv.reader(fh)):
                if not row or row[0].startswith("#"):
                    continue
                try:
                    values.append(float(row[-1]))
                except ValueError:
                    if k == 0:
                        continue
                    raise ValueError(f"{path}: line {k + 1}: not a number: {row[-1]!r}") from None
        return cls(tuple(values), lag)


def embed(series: Union[SeriesDataset, Sequence[float]], lag: Optional[int] = None
          ) -> tuple[np.ndarray, np.ndarray]:
    """Lag vectors (most recent first) and their targets."""
    if not isinstance(series, SeriesDataset):
        series = SeriesDataset(tuple(series), lag if lag is not None else 3)
    elif lag is not None and lag != series.lag:
        series = SeriesDataset(series.values, lag)
    v = np.asarray(series.values)
    L = series.lag
    X = np.array([v[t - L:t][::-1] for t in range(L, v.size)])
    return X, v[L:].copy()


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def kernel_eval(spec: KernelSpec, a, b, same_point: Optional[bool] = None) -> float:
    """k(a, b); the noise term is added only when ``a`` and ``b`` are the same training point.

    ``same_point`` defaults to the identity test ``a is b``.
    """
    same = (a is b) if same_point is None else same_point
    a_arr = np.atleast_1d(np.asarray(a, float))
    b_arr = np.atleast_1d(np.asarray(b, float))
    if a_arr.shape != b_arr.shape:
        raise ValueError(f"dimension mismatch: {a_arr.shape} vs {b_arr.shape}")
    r2 = float(np.sum((a_arr - b_arr) ** 2))
    return spec.signal_variance * math.exp(-r2 / (2.0 * spec.length_scale ** 2)) + \
        (spec.noise_variance if same else 0.0)


def cross_cov(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return spec.signal_variance * np.exp(-_sqdist(A, B) / (2.0 * spec.length_scale ** 2))


def gram(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    K = cross_cov(spec, X, X)
    K[np.diag_indices_from(K)] += spec.noise_variance
    return K


def _factor(K: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.mean(np.diag(K)))
    for j in JITTERS:
        try:
            return cholesky(K + j * scale * np.eye(K.shape[0]), lower=True), j * scale
        except np.linalg.LinAlgError:
            continue
    raise GramError("Gram matrix not positive definite after jitter 1e-6")


def log_marginal_likelihood(spec: KernelSpec, X: np.ndarray, y: np.ndarray) -> float:
    L, _ = _factor(gram(spec, X))
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * y.size * math.log(2 * math.pi))


@dataclass(frozen=True)
class GpModel:
    X: np.ndarray  # training inputs, in model (standardised) units
    y: np.ndarray
    spec: KernelSpec
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    shift: float = 0.0  # raw = shift + scale * model units
    scale: float = 1.0
    lml: float = float("nan")

    @property
    def lag(self) -> int:
        return self.X.shape[1]

    def to_model(self, v) -> np.ndarray:
        return (np.asarray(v, float) - self.shift) / self.scale


@dataclass(frozen=True)
class ForecastResult:
    mean: float
    variance: float
    confidence: float
    half_width: float

    @property
    def lower(self) -> float:
        return self.mean - self.half_width

    @property
    def upper(self) -> float:
        return self.mean + self.half_width


def fit(inputs: np.ndarray, targets: np.ndarray, restarts: int = 10, max_iters: int = 2000,
        seed: int = 0, normalize: bool = True) -> GpModel:
    """Maximise the log marginal likelihood over (signal, length, noise).

    Every restart starts from hyperparameters drawn log-uniformly in
    [1e-2, 1e2] and runs a bounded Nelder-Mead search in log space.  With
    ``normalize`` the inputs and targets (both demand volumes) are shifted
    and scaled by the target mean and standard deviation first, so the
    zero prior mean sits at the training average.
    """
    X = np.asarray(inputs, float)
    y = np.asarray(targets, float)
    if X.ndim == 1:
        X = X[:, None]
    if y.size < 3 or X.shape[0] != y.size:
        raise ValueError("need at least 3 training pairs with matching inputs and targets")
    shift, scale = 0.0, 1.0
    if normalize:
        shift = float(y.mean())
        scale = float(y.std()) or 1.0
    Xm, ym = (X - shift) / scale, (y - shift) / scale
    bounds = [tuple(np.log(b)) for b in (SIGNAL_BOUNDS, LENGTH_BOUNDS, NOISE_BOUNDS)]

    def neg(theta):
        try:
            return -log_marginal_likelihood(KernelSpec.from_log(theta), Xm, ym)
        except GramError:
            return 1e300

    best_theta, best_val = None, math.inf
    for k in range(restarts):
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, k])
        start = rng.uniform(np.log(1e-2), np.log(1e2), size=3)
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(neg, start, method="Nelder-Mead", bounds=bounds,
                       options={"maxiter": max_iters, "xatol": 1e-4, "fatol": 1e-7})
        theta, val = (res.x, res.fun) if res.fun <= neg(start) else (start, neg(start))
        if val < best_val:
            best_theta, best_val = theta, val
    spec = KernelSpec.from_log(best_theta)
    L, jit = _factor(gram(spec, Xm))
    alpha = cho_solve((L, True), ym)
    return GpModel(Xm, ym, spec, L, alpha, jit, shift, scale, -float(best_val))


def predict(model: GpModel, query, confidence: float = 0.95, include_noise: bool = False) -> ForecastResult:
    """Posterior mean and variance of the latent function at ``query`` (raw units).

    With ``include_noise`` the variance is that of a new noisy observation.
    """
    q = model.to_model(np.atleast_1d(query))
    if q.shape != (model.lag,):
        raise ValueError(f"query must have dimension {model.lag}")
    ks = cross_cov(model.spec, model.X, q[None, :])[:, 0]
    mu = float(ks @ model.alpha)
    v = cho_solve((model.chol, True), ks)
    var = max(model.spec.signal_variance - float(ks @ v), 0.0)
    if include_noise:
        var += model.spec.noise_variance
    mean = model.shift + model.scale * mu
    var_raw = var * model.scale ** 2
    z = float(norm.ppf(0.5 * (1.0 + confidence)))
    return ForecastResult(mean, var_raw, confidence, z * math.sqrt(var_raw))


def interval_demand(model: GpModel, query, confidence: float = 0.95, horizon: int = 32,
                    include_noise: bool = True) -> DemandCurve:
    """Flat per-period split of the forecast total and its half-width.

    A half-width reaching below zero is clamped so ``nominal - deviation >= 0``.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    fc = predict(model, query, confidence, include_noise)
    return curve_from_total(fc.mean, fc.half_width, horizon)


def curve_from_total(mean: float, half_width: float, horizon: int) -> DemandCurve:
    nominal = max(mean, 0.0)
    dev = min(max(half_width, 0.0), nominal)
    return DemandCurve.flat(nominal, dev, int(horizon))


def mape(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent."""
    p = np.asarray(predicted, float)
    a = np.asarray(actual, float)
    if p.shape != a.shape:
        raise ValueError("predicted and actual differ in length")
    if np.any(a == 0):
        raise ValueError("actual values must be nonzero")
    return float(np.mean(np.abs(p - a) / np.abs(a)) * 100.0)


@dataclass
class HoldoutResult:
    model: GpModel
    predictions: list[ForecastResult]
    actual: np.ndarray

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.predictions])

    @property
    def mape(self) -> float:
        return mape(self.means, self.actual)

    @property
    def coverage(self) -> float:
        lo = np.array([p.lower for p in self.predictions])
        hi = np.array([p.upper for p in self.predictions])
        return float(np.mean((self.actual >= lo) & (self.actual <= hi)))


def holdout_forecast(series: Union[SeriesDataset, Sequence[float]], n_test: int, lag: int = 3,
                     confidence: float = 0.95, restarts: int = 10, max_iters: int = 2000,
                     seed: int = 0) -> HoldoutResult:
    """Fit on all but the last ``n_test`` values, then forecast each held-out
    value one step ahead from its true predecessors."""
    values = np.asarray(series.values if isinstance(series, SeriesDataset) else series, float)
    lag = series.lag if isinstance(series, SeriesDataset) else lag
    train = values[:-n_test] if n_test else values
    X, y = embed(train, lag)
    model = fit(X, y, restarts=restarts, max_iters=max_iters, seed=seed)
    preds = [predict(model, values[t - lag:t][::-1], confidence, include_noise=True)
             for t in range(values.size - n_test, values.size)]
    return HoldoutResult(model, preds, values[values.size - n_test:])


def synthetic_series(n: int, seed: int, level: float = 1.0e4, amplitude: float = 0.03,
                     length: float = 12.0, noise: float = 0.01) -> np.ndarray:
    """Level plus an SE-covariance GP path in time plus white noise (relative sizes)."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)[:, None]
    K = (amplitude * level) ** 2 * np.exp(-_sqdist(t, t) / (2 * length ** 2))
    L, _ = _factor(K)
    return level + L @ rng.standard_normal(n) + noise * level * rng.standard_normal(n)
