"""Least-squares regression oracle over structured classes {M f : f in F}.

Every learning phase reduces to one of two fits:

* simple:     prediction  M f(y_i)                       (+ known offset)
* increment:  prediction  L (M f(y_i') - G M f(y_i))     (+ known offset)

Both are linear in M for each candidate f, so the per-candidate solve is a
closed-form ridge least squares; the operator norm of M is then clamped to
the class radius, the loss recomputed, and the best candidate returned
(ties broken by lowest candidate index).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

RIDGE = 1e-10


@dataclass(frozen=True)
class DecoderClass:
    """Finite ordered set of candidate decoders, observation -> R^{d_x}."""

    candidates: tuple[Callable[[np.ndarray], np.ndarray], ...]
    growth_bound: float = 1.0
    contains_truth: Optional[int] = None
    names: Optional[tuple[str, ...]] = None
    growth_seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.candidates)

    def features(self, index: int, observations: np.ndarray) -> np.ndarray:
        out = np.asarray(self.candidates[index](np.atleast_2d(observations)), dtype=float)
        return np.atleast_2d(out)


@dataclass(frozen=True)
class StructuredClass:
    """Composition class {M f : f in base, ||M||_op <= radius}, output in R^m."""

    base: DecoderClass
    output_dim: int
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValidationError("class radius must be > 0")
        if self.output_dim < 1:
            raise ValidationError("output_dim must be >= 1")


@dataclass
class FittedRegressor:
    """Selected candidate with its fitted matrix and training loss."""

    candidate_index: int
    m: np.ndarray
    empirical_loss: float
    decoder_class: DecoderClass
    all_losses: tuple[float, ...] = ()
    clamped: bool = False

    def predict(self, observations: np.ndarray) -> np.ndarray:
        feats = self.decoder_class.features(self.candidate_index, observations)
        return feats @ self.m.T

    def __call__(self, observations: np.ndarray) -> np.ndarray:
        return self.predict(observations)


def _opnorm_clamp(m: np.ndarray, radius: float) -> tuple[np.ndarray, bool]:
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] <= radius:
        return m, False
    return (u * np.minimum(s, radius)) @ vt, True


def fit_linear_map(inputs: np.ndarray, targets: np.ndarray, ridge: float = RIDGE) -> np.ndarray:
    """Ordinary least squares min_M sum ||M x_i - y_i||^2 with a small ridge.

    Returns M of shape (m, d) operating on column vectors.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"sample counts differ: {x.shape[0]} inputs vs {y.shape[0]} targets")
    if x.shape[0] < 1:
        raise ValidationError("at least one sample required")
    gram = x.T @ x + ridge * np.eye(x.shape[1])
    try:
        sol = np.linalg.solve(gram, x.T @ y)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - ridge keeps this rare
        raise NumericalError("rank-deficient design despite ridge") from exc
    return sol.T


def _loss(residuals: np.ndarray) -> float:
    return float(np.mean(np.sum(residuals**2, axis=1)))


def _select(klass: StructuredClass, fit_one) -> FittedRegressor:
    """Run fit_one per candidate, clamp, recompute loss, return the argmin."""
    best: FittedRegressor | None = None
    losses = []
    for idx in range(len(klass.base)):
        m, loss_fn = fit_one(idx)
        m_clamped, clamped = _opnorm_clamp(m, klass.radius)
        if clamped:
            logger.info("operator-norm clamp active for candidate %d (radius %.3g)",
                        idx, klass.radius)
        loss = loss_fn(m_clamped)
        losses.append(loss)
        if best is None or loss < best.empirical_loss:
            best = FittedRegressor(candidate_index=idx, m=m_clamped, empirical_loss=loss,
                                   decoder_class=klass.base, clamped=clamped)
    assert best is not None
    best.all_losses = tuple(losses)
    return best


def erm_fit(klass: StructuredClass, observations: np.ndarray, targets: np.ndarray,
            offsets: np.ndarray | None = None, ridge: float = RIDGE) -> FittedRegressor:
    """Empirical risk minimization of ||M f(y_i) + offset_i - target_i||^2.

    Offsets are the known additive part of the prediction; supplying them is
    equivalent to regressing against targets - offsets.
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    tgt = np.atleast_2d(np.asarray(targets, dtype=float))
    n = obs.shape[0]
    if n == 0:
        raise ValidationError("empty data")
    if tgt.shape != (n, klass.output_dim):
        raise ValidationError(f"targets must be ({n}, {klass.output_dim}), got {tgt.shape}")
    if not np.all(np.isfinite(tgt)):
        raise ValidationError("targets must be finite")
    adj = tgt if offsets is None else tgt - np.atleast_2d(np.asarray(offsets, dtype=float))

    def fit_one(idx: int):
        feats = klass.base.features(idx, obs)
        m = fit_linear_map(feats, adj, ridge=ridge)

        def loss_fn(mm: np.ndarray) -> float:
            return _loss(feats @ mm.T - adj)

        return m, loss_fn

    return _select(klass, fit_one)


def erm_fit_increment(klass: StructuredClass, obs_now: np.ndarray, obs_next: np.ndarray,
                      left: np.ndarray, shift: np.ndarray, targets: np.ndarray,
                      offsets: np.ndarray | None = None, ridge: float = RIDGE) -> FittedRegressor:
    """ERM for the two-point prediction L (M f(y') - G M f(y)) + offset.

    left is L (rows match the target dimension), shift is G. This realizes
    the regressions whose hypothesis appears at two adjacent observations
    with fixed matrix prefactors; the solve is over vec(M) via the Kronecker
    identity vec(L M a) = (a' kron L) vec(M).
    """
    y_now = np.atleast_2d(np.asarray(obs_now, dtype=float))
    y_next = np.atleast_2d(np.asarray(obs_next, dtype=float))
    tgt = np.atleast_2d(np.asarray(targets, dtype=float))
    left = np.atleast_2d(np.asarray(left, dtype=float))
    shift = np.atleast_2d(np.asarray(shift, dtype=float))
    n = y_now.shape[0]
    if n == 0:
        raise ValidationError("empty data")
    if y_next.shape[0] != n or tgt.shape[0] != n:
        raise ValidationError("sample counts differ between inputs and targets")
    if left.shape[0] != tgt.shape[1]:
        raise ValidationError("left factor rows must match target dimension")
    if not np.all(np.isfinite(tgt)):
        raise ValidationError("targets must be finite")
    adj = tgt if offsets is None else tgt - np.atleast_2d(np.asarray(offsets, dtype=float))

    m_out = klass.output_dim
    l1 = left
    l2 = -left @ shift

    def fit_one(idx: int):
        a = klass.base.features(idx, y_next)   # rows f(y'_i)
        b = klass.base.features(idx, y_now)    # rows f(y_i)
        d_feat = a.shape[1]
        gram = (np.kron(a.T @ a, l1.T @ l1) + np.kron(a.T @ b, l1.T @ l2)
                + np.kron(b.T @ a, l2.T @ l1) + np.kron(b.T @ b, l2.T @ l2))
        gram += ridge * np.eye(m_out * d_feat)
        rhs = ((l1.T @ adj.T @ a) + (l2.T @ adj.T @ b)).flatten(order="F")
        try:
            vec = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalError("rank-deficient increment design despite ridge") from exc
        m = vec.reshape((m_out, d_feat), order="F")

        def loss_fn(mm: np.ndarray) -> float:
            pred = a @ mm.T @ l1.T + b @ mm.T @ l2.T
            return _loss(pred - adj)

        return m, loss_fn

    return _select(klass, fit_one)
