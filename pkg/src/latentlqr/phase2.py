"""Second learning phase: dynamics, noise covariance, and cost recovery.

The coarse decoder's output is treated as the state; regressions mimicking
the dynamical equations then recover (A, B, Sigma_w, Q) in the decoder's
basis. Only the cost fit touches the revealed costs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import psd_project
from .errors import ValidationError
from .phase1 import IdBatch
from .regression import fit_linear_map


@dataclass
class SysIdEstimates:
    """Estimated system in the identified basis."""

    a_hat: np.ndarray
    b_hat: np.ndarray
    sigma_w_hat: np.ndarray
    q_hat: np.ndarray

    def __post_init__(self):
        for name in ("a_hat", "b_hat", "sigma_w_hat", "q_hat"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(m)):
                raise ValidationError(f"{name} contains non-finite entries")
            setattr(self, name, m)


def fit_dynamics(batch3: IdBatch, decoder: Callable[[np.ndarray], np.ndarray],
                 d_x: int) -> tuple[np.ndarray, np.ndarray]:
    """Joint least squares of decoded next states on decoded states and inputs."""
    x_now = decoder(batch3.y_now)
    x_next = decoder(batch3.y_next)
    design = np.hstack([x_now, batch3.u_now])
    m = fit_linear_map(design, x_next)
    return m[:, :d_x], m[:, d_x:]


def fit_noise_cov(batch3: IdBatch, decoder: Callable[[np.ndarray], np.ndarray],
                  a_hat: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    """Empirical second moment of the one-step residuals, PSD-projected."""
    resid = decoder(batch3.y_next) - decoder(batch3.y_now) @ a_hat.T - batch3.u_now @ b_hat.T
    sigma = resid.T @ resid / batch3.n
    return psd_project((sigma + sigma.T) / 2.0)


def _sym_features(x: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Features of the symmetric quadratic-form parameterization.

    x' Q x = sum_j Q_jj x_j^2 + sum_{j<k} 2 Q_jk x_j x_k, so the design has
    one column per diagonal entry and one per doubled off-diagonal product.
    """
    d = x.shape[1]
    cols = []
    index = []
    for j in range(d):
        cols.append(x[:, j] ** 2)
        index.append((j, j))
    for j in range(d):
        for k in range(j + 1, d):
            cols.append(2.0 * x[:, j] * x[:, k])
            index.append((j, k))
    return np.column_stack(cols), index


def fit_cost(batch3: IdBatch, decoder: Callable[[np.ndarray], np.ndarray],
             r: np.ndarray) -> np.ndarray:
    """Quadratic fit of the revealed costs minus the known input penalty.

    Solved on the d_x(d_x+1)/2-dimensional symmetric parameterization to
    avoid the null space of the full vectorization, then PSD-projected.
    """
    x = decoder(batch3.y_now)
    d = x.shape[1]
    n_params = d * (d + 1) // 2
    if batch3.n < n_params:
        raise ValidationError(f"need at least {n_params} samples to fit a {d}x{d} cost")
    r = np.atleast_2d(np.asarray(r, dtype=float))
    target = batch3.cost_now - np.einsum("ni,ij,nj->n", batch3.u_now, r, batch3.u_now)
    design, index = _sym_features(x)
    coef = fit_linear_map(design, target[:, None])[0]
    q = np.zeros((d, d))
    for c, (j, k) in zip(coef, index):
        q[j, k] = c
        q[k, j] = c
    return psd_project((q + q.T) / 2.0)


def run_sysid(batch3: IdBatch, decoder: Callable[[np.ndarray], np.ndarray],
              r: np.ndarray, d_x: int) -> SysIdEstimates:
    """All three regressions on the third excitation batch."""
    a_hat, b_hat = fit_dynamics(batch3, decoder, d_x)
    sigma_w_hat = fit_noise_cov(batch3, decoder, a_hat, b_hat)
    q_hat = fit_cost(batch3, decoder, r)
    return SysIdEstimates(a_hat=a_hat, b_hat=b_hat, sigma_w_hat=sigma_w_hat, q_hat=q_hat)
