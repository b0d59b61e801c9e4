"""First learning phase: a coarse decoder from open-loop Gaussian excitation.

Standard normal inputs drive the system for kappa_0 burn-in steps plus
kappa further steps; regressing the last kappa inputs onto the observation
at time kappa_1 = kappa_0 + kappa recovers the true decoder up to a linear
map, and PCA of the regressor outputs reduces to the latent dimension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateSpectrumError, InfeasibleBurnInError, ValidationError
from .regression import DecoderClass, FittedRegressor, StructuredClass, erm_fit
from .system import EmissionModel, PolicyDef, SystemSpec, rollout_columns

EIGENGAP_TOL = 1e-12


@dataclass(frozen=True)
class Phase1Config:
    """Sample size, controllability bound, and the parameter upper bounds."""

    n_id: int
    kappa: int
    psi_star: float
    alpha_star: float
    gamma_star: float
    d_x: int
    d_u: int
    r_id: float | None = None
    kappa0_override: int | None = None
    kappa0_cap: int = 10_000

    def __post_init__(self):
        if self.n_id < self.d_u * self.kappa:
            raise ValidationError("n_id must be at least d_u * kappa")
        if not (0.0 < self.gamma_star < 1.0):
            raise ValidationError("gamma_star must lie in (0, 1)")
        if self.psi_star < 1.0 or self.alpha_star < 1.0:
            raise ValidationError("psi_star and alpha_star must be >= 1")
        if self.kappa < 1:
            raise ValidationError("kappa must be >= 1")
        if self.r_id is not None and self.r_id <= 0:
            raise ValidationError("r_id must be > 0")

    @property
    def radius(self) -> float:
        return math.sqrt(self.psi_star) if self.r_id is None else self.r_id


def burn_in_kappa0(config: Phase1Config) -> int:
    """Burn-in steps ensuring near-stationarity before the regression data.

    ceil( (1-gamma)^-1 * ln( 84 psi^5 alpha^4 d_x (1-gamma)^-2 ln(1000 n_id) ) ),
    evaluated exactly as written. A configured override (test mode) skips the
    formula; values beyond the cap raise InfeasibleBurnInError.
    """
    if config.kappa0_override is not None:
        if config.kappa0_override < 0:
            raise ValidationError("kappa0 override must be >= 0")
        return config.kappa0_override
    one_minus = 1.0 - config.gamma_star
    inner = (84.0 * config.psi_star**5 * config.alpha_star**4 * config.d_x
             * one_minus**-2 * math.log(1000.0 * config.n_id))
    kappa0 = math.ceil(math.log(inner) / one_minus)
    if kappa0 > config.kappa0_cap:
        raise InfeasibleBurnInError(
            f"burn-in {kappa0} exceeds cap {config.kappa0_cap}; tighten the bounds "
            "or set kappa0_override")
    return max(0, kappa0)


@dataclass
class IdBatch:
    """Columns recorded from one batch of excitation trajectories."""

    y_now: np.ndarray    # observation at kappa_1,      (n, d_y)
    y_next: np.ndarray   # observation at kappa_1 + 1,  (n, d_y)
    u_now: np.ndarray    # input at kappa_1,            (n, d_u)
    cost_now: np.ndarray  # revealed cost at kappa_1,   (n,)
    v: np.ndarray        # stacked inputs kappa_0..kappa_1-1, (n, kappa * d_u)

    @property
    def n(self) -> int:
        return self.y_now.shape[0]


@dataclass
class IdData:
    """Three disjoint batches: regression fit, PCA, and system identification."""

    batch1: IdBatch
    batch2: IdBatch
    batch3: IdBatch
    kappa0: int
    kappa1: int


def collect_id_data(spec: SystemSpec, emission: EmissionModel, config: Phase1Config,
                    seed: int) -> IdData:
    """3 n_id excitation trajectories, reduced to the recorded columns.

    Inputs are u_t ~ N(0, I) through time kappa_1; each trajectory records
    (y_k1, y_k1+1, u_k1, c_k1) and the stacked window v. The three batches
    are the index ranges [0, n), [n, 2n), [2n, 3n) of a single collection,
    so they are disjoint by construction.
    """
    kappa0 = burn_in_kappa0(config)
    kappa1 = kappa0 + config.kappa
    n_total = 3 * config.n_id
    policy = PolicyDef.open_loop_gaussian(sigma=1.0)
    cols = rollout_columns(
        spec, emission, policy, horizon=kappa1 + 1, n_traj=n_total, base_seed=seed,
        obs_times=(kappa1, kappa1 + 1),
        input_times=tuple(range(kappa0, kappa1 + 1)),
        cost_times=(kappa1,))
    v = np.hstack([cols["inputs"][t] for t in range(kappa0, kappa1)])

    def batch(lo: int, hi: int) -> IdBatch:
        return IdBatch(y_now=cols["obs"][kappa1][lo:hi],
                       y_next=cols["obs"][kappa1 + 1][lo:hi],
                       u_now=cols["inputs"][kappa1][lo:hi],
                       cost_now=cols["costs"][kappa1][lo:hi],
                       v=v[lo:hi])

    n = config.n_id
    return IdData(batch1=batch(0, n), batch2=batch(n, 2 * n), batch3=batch(2 * n, 3 * n),
                  kappa0=kappa0, kappa1=kappa1)


@dataclass
class Phase1Output:
    """Fitted input predictor, PCA basis, and the composed coarse decoder."""

    h_id: FittedRegressor
    v_id: np.ndarray          # (kappa d_u, d_x), orthonormal columns
    kappa0: int
    kappa1: int
    eigenvalues: np.ndarray

    def decode(self, observations: np.ndarray) -> np.ndarray:
        return self.h_id.predict(observations) @ self.v_id

    @property
    def decoder(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.decode


def _sign_convention(v: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = v.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def fit_coarse_decoder(batch1: IdBatch, batch2: IdBatch, decoder_class: DecoderClass,
                       config: Phase1Config) -> Phase1Output:
    """Regress the input window onto the final observation, then PCA-reduce.

    batch1 fits h_id over {M f : ||M||_op <= r_id}; batch2 estimates the
    second-moment matrix of h_id's outputs, whose top-d_x eigenvectors give
    the reduction V_id. A degenerate eigen-gap raises with diagnostics.
    """
    klass = StructuredClass(base=decoder_class, output_dim=config.kappa * config.d_u,
                            radius=config.radius)
    h_id = erm_fit(klass, batch1.y_now, batch1.v)

    outputs = h_id.predict(batch2.y_now)
    second_moment = outputs.T @ outputs / batch2.n
    eigvals, eigvecs = np.linalg.eigh(second_moment)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    d_x = config.d_x
    if second_moment.shape[0] > d_x:
        gap = eigvals[d_x - 1] - eigvals[d_x]
        if gap < EIGENGAP_TOL:
            raise DegenerateSpectrumError(
                f"eigen-gap {gap:.3e} below {EIGENGAP_TOL:.0e}; "
                f"spectrum: {np.array2string(eigvals, precision=3)}")
    v_id = _sign_convention(eigvecs[:, :d_x])
    kappa0 = burn_in_kappa0(config)
    return Phase1Output(h_id=h_id, v_id=v_id, kappa0=kappa0,
                        kappa1=kappa0 + config.kappa, eigenvalues=eigvals)


def bayes_map(spec: SystemSpec, kappa: int, kappa1: int) -> np.ndarray:
    """Population regression target: C_kappa' Sigma_{kappa_1}^{-1}.

    The stacked input window and the state at kappa_1 are jointly Gaussian,
    so the conditional expectation of the window given the state is this
    linear map applied to the state.
    """
    from .control import controllability_matrix, open_loop_state_cov

    c_k = controllability_matrix(spec.a, spec.b, kappa)
    sigma = open_loop_state_cov(spec.a, spec.b, spec.sigma_w, spec.sigma_0, kappa1)
    return np.linalg.solve(sigma, c_k).T
