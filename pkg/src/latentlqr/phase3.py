"""Third learning phase: certainty-equivalent gain and on-policy decoders.

The gain comes from the Riccati solution on the identified system. Decoders
are then learned one time step at a time: roll in with the policy through
step t, roll out with pure Gaussian inputs, and solve a two-step regression
whose Gaussian-conditional structure turns input prediction into state
increment estimation. A separate subroutine handles the initial state.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .control import psd_project, solve_dare
from .errors import IllConditionedCovarianceError, NumericalError, ValidationError
from .regression import DecoderClass, FittedRegressor, StructuredClass, erm_fit, erm_fit_increment
from .system import EmissionModel, PolicyDef, SystemSpec, TrajectoryBatch, rollout
from .phase2 import SysIdEstimates

COV_GUARD = 1e-8
Q_REG_EPS = 1e-9
LAMBDA_WARN = 1e-8
CLIP_EVENT_CAP = 100_000


@dataclass(frozen=True)
class Phase3Config:
    """Sample sizes, exploration level, clip radius, and horizon."""

    n_op: int
    sigma: float
    t_horizon: int
    kappa: int
    r_op: float
    n_init: Optional[int] = None
    b_bar: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.sigma <= 1.0):
            raise ValidationError("sigma must lie in (0, 1]; exploration is required")
        if self.t_horizon < 1:
            raise ValidationError("horizon T must be >= 1")
        if self.n_op < 1 or (self.n_init is not None and self.n_init < 1):
            raise ValidationError("sample sizes must be positive")
        if self.kappa < 1:
            raise ValidationError("kappa must be >= 1")
        if self.r_op <= 0:
            raise ValidationError("r_op must be > 0")
        if self.b_bar is not None and self.b_bar <= 0:
            raise ValidationError("b_bar must be > 0")

    @property
    def n_init_effective(self) -> int:
        return self.n_op if self.n_init is None else self.n_init


def default_clip_radius(d_x: int, d_u: int, n_op: int) -> float:
    """Default norm bound for decoder outputs: 10 (d_x + d_u) ln(max(n_op, 3))."""
    return 10.0 * (d_x + d_u) * math.log(max(n_op, 3))


def sigma_from_epsilon(epsilon: float, b_bar: float) -> float:
    """Exploration level from a target suboptimality: sigma = min(1, eps / b_bar)."""
    if epsilon <= 0 or b_bar <= 0:
        raise ValidationError("epsilon and b_bar must be > 0")
    return min(1.0, epsilon / b_bar)


@dataclass
class NoiseShaping:
    """Conditional-expectation prefactors M_k and their stacked aggregate.

    m_k[k-1] = C_k' (C_k C_k' + sigma^-2 W_k)^{-1} with
    W_k = sum_{i=1}^{k} A^{i-1} Sigma_w (A^{i-1})'; big_m stacks the blocks
    [M_1; M_2 A; ...; M_kappa A^{kappa-1}]. m_bar holds the sigma -> 0 limit
    of big_m / sigma^2, whose smallest singular value lambda_m must be
    positive for increment recovery to be well posed.
    """

    m_k: tuple[np.ndarray, ...]
    big_m: np.ndarray
    m_bar: np.ndarray
    lambda_m: float
    sigma: float


def build_noise_shaping(a: np.ndarray, b: np.ndarray, sigma_w: np.ndarray,
                        sigma: float, kappa: int) -> NoiseShaping:
    """Shaping matrices from (possibly estimated) system matrices."""
    import logging

    from .control import controllability_matrix

    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sigma_w = np.atleast_2d(np.asarray(sigma_w, dtype=float))
    if sigma <= 0:
        raise ValidationError("sigma must be > 0")
    if np.min(np.linalg.eigvalsh((sigma_w + sigma_w.T) / 2.0)) <= 0:
        raise NumericalError("process noise covariance must be positive definite "
                             "for the shaping inverses")
    m_list = []
    bar_blocks = []
    w_k = np.zeros_like(sigma_w)
    a_pow = np.eye(a.shape[0])
    for k in range(1, kappa + 1):
        w_k = w_k + a_pow @ sigma_w @ a_pow.T
        c_k = controllability_matrix(a, b, k)
        inner = c_k @ c_k.T + w_k / sigma**2
        m_k = np.linalg.solve(inner, c_k).T
        m_list.append(m_k)
        m_bar_k = np.linalg.solve(w_k, c_k).T
        bar_blocks.append(m_bar_k @ np.linalg.matrix_power(a, k - 1))
        a_pow = a @ a_pow
    big_m = np.vstack([m_list[k - 1] @ np.linalg.matrix_power(a, k - 1)
                       for k in range(1, kappa + 1)])
    m_bar = np.vstack(bar_blocks)
    svals = np.linalg.svd(m_bar, compute_uv=False)
    lambda_m = float(svals[-1]) if svals.size else 0.0
    if lambda_m < LAMBDA_WARN:
        logging.getLogger(__name__).warning(
            "limiting shaping matrix nearly singular (lambda = %.3e); "
            "increment recovery may be ill posed", lambda_m)
    return NoiseShaping(m_k=tuple(m_list), big_m=big_m, m_bar=m_bar,
                        lambda_m=lambda_m, sigma=sigma)


@dataclass
class InitialStatePieces:
    """Regressors and covariance for predicting A x_0 from the first observation."""

    h_ol1: FittedRegressor
    sigma_cov: np.ndarray
    h_ol0: FittedRegressor
    gain: np.ndarray  # sigma_w_hat @ sigma_cov^{-1}

    def f_a0(self, y0: np.ndarray) -> np.ndarray:
        return self.h_ol0.predict(y0) @ self.gain.T


@dataclass
class _StackState:
    value: np.ndarray
    prev_obs: Optional[np.ndarray]


@dataclass
class DecoderStack:
    """Per-time decoders built from the residual regressors.

    f_0 = 0; f_1 uses the initial-state pieces; for t >= 1,
    f_{t+1}(y_{0:t+1}) = clip( h_t(y_{t+1}) - A f... h_t(y_t) + A f_t(y_{0:t}) ),
    where clip zeroes any value with norm above b_bar. Values beyond the
    learned depth are zero, which makes the same object drive both the
    roll-in/roll-out collection policy and the final learned policy.
    """

    a_hat: np.ndarray
    b_hat: np.ndarray
    k_gain: np.ndarray
    p_hat: np.ndarray
    b_bar: float
    residual_regressors: list = field(default_factory=list)
    first_stage: dict = field(default_factory=dict)
    initial: Optional[InitialStatePieces] = None
    clip_counts: dict = field(default_factory=dict)
    clip_events: list = field(default_factory=list)

    @property
    def d_x(self) -> int:
        return self.a_hat.shape[0]

    @property
    def depth(self) -> int:
        """Number of defined decoders f_0..f_depth-1."""
        return len(self.residual_regressors) + 1

    def begin(self, n: int) -> _StackState:
        return _StackState(value=np.zeros((n, self.d_x)), prev_obs=None)

    def step(self, state: _StackState, t: int, y: np.ndarray):
        n = y.shape[0]
        if t == 0 or t > len(self.residual_regressors):
            value = np.zeros((n, self.d_x))
        else:
            h = self.residual_regressors[t - 1]
            base = h.predict(y) - h.predict(state.prev_obs) @ self.a_hat.T
            if t == 1 and self.initial is not None:
                carry = self.initial.f_a0(state.prev_obs)
            else:
                carry = state.value @ self.a_hat.T
            tilde = base + carry
            value = self._clip(tilde, t)
        return value, _StackState(value=value, prev_obs=y)

    def _clip(self, tilde: np.ndarray, t: int) -> np.ndarray:
        norms = np.linalg.norm(tilde, axis=1)
        keep = norms <= self.b_bar
        clipped = np.flatnonzero(~keep)
        count = self.clip_counts.setdefault(t, [0, 0])
        count[0] += int(clipped.size)
        count[1] += int(tilde.shape[0])
        for i in clipped:
            if len(self.clip_events) >= CLIP_EVENT_CAP:
                break
            self.clip_events.append((t, int(i), float(norms[i])))
        if clipped.size:
            tilde = tilde.copy()
            tilde[clipped] = 0.0
        return tilde

    def values_through(self, observations: np.ndarray, t: int) -> np.ndarray:
        """Decoder value f_t for every trajectory of an observation array."""
        state = self.begin(observations.shape[0])
        value = state.value
        for tau in range(t + 1):
            value, state = self.step(state, tau, observations[:, tau])
        return value

    def values_all(self, observations: np.ndarray, t_max: int) -> np.ndarray:
        out = np.zeros((observations.shape[0], t_max + 1, self.d_x))
        state = self.begin(observations.shape[0])
        for tau in range(t_max + 1):
            out[:, tau], state = self.step(state, tau, observations[:, tau])
        return out

    def clip_fraction(self) -> float:
        clipped = sum(c for c, _ in self.clip_counts.values())
        total = sum(n for _, n in self.clip_counts.values())
        return clipped / total if total else 0.0

    def reset_clip_stats(self) -> None:
        self.clip_counts = {}
        self.clip_events = []


def decoder_update(h_t: FittedRegressor, stack: DecoderStack) -> None:
    """Append the residual regressor defining the next decoder in the stack."""
    if not np.all(np.isfinite(h_t.m)):
        raise ValidationError("residual regressor is not finite")
    stack.residual_regressors.append(h_t)


def collect_onpolicy(spec: SystemSpec, emission: EmissionModel, stack: DecoderStack,
                     t: int, config: Phase3Config, seed: int
                     ) -> tuple[TrajectoryBatch, TrajectoryBatch]:
    """2 n_op trajectories rolling in with the policy through step t and out
    with pure Gaussian inputs, split into disjoint halves."""
    policy = PolicyDef.gain_decoder(stack.k_gain, stack, sigma=config.sigma)
    batch = rollout(spec, emission, policy, horizon=t + config.kappa,
                    n_traj=2 * config.n_op, base_seed=seed)
    return _split(batch), _split(batch, second=True)


def _split(batch: TrajectoryBatch, second: bool = False) -> TrajectoryBatch:
    n = batch.n_traj // 2
    sl = slice(n, 2 * n) if second else slice(0, n)
    return TrajectoryBatch(states=batch.states[sl], observations=batch.observations[sl],
                           inputs=batch.inputs[sl], injected=batch.injected[sl],
                           noises=batch.noises[sl], costs=batch.costs[sl], seed=batch.seed)


def fit_residual_regressors(halves: tuple[TrajectoryBatch, TrajectoryBatch],
                            stack: DecoderStack, shaping: NoiseShaping, t: int,
                            config: Phase3Config, decoder_class: DecoderClass
                            ) -> tuple[list[FittedRegressor], FittedRegressor]:
    """Two-step regression at iteration t.

    First half, per k: predict the injected-noise window nu_{t:t+k-1} from
    M_k (h(y_{t+k}) - A^k h(y_t) - A^{k-1} B K f_t). Second half: predict the
    stacked first-stage outputs from big_m (h(y_{t+1}) - A h(y_t) - B K f_t).
    """
    half1, half2 = halves
    a_hat, b_hat = stack.a_hat, stack.b_hat
    d_x = stack.d_x
    h_op = StructuredClass(base=decoder_class, output_dim=d_x, radius=config.r_op)
    bk = b_hat @ stack.k_gain

    f_t_1 = stack.values_through(half1.observations, t)
    first_stage = []
    for k in range(1, config.kappa + 1):
        m_k = shaping.m_k[k - 1]
        a_k = np.linalg.matrix_power(a_hat, k)
        a_km1 = np.linalg.matrix_power(a_hat, k - 1)
        targets = half1.injected[:, t:t + k].reshape(half1.n_traj, -1)
        offsets = -(f_t_1 @ (m_k @ a_km1 @ bk).T)
        reg = erm_fit_increment(h_op, obs_now=half1.observations[:, t],
                                obs_next=half1.observations[:, t + k],
                                left=m_k, shift=a_k, targets=targets, offsets=offsets)
        first_stage.append(reg)

    f_t_2 = stack.values_through(half2.observations, t)
    phi_cols = []
    for k in range(1, config.kappa + 1):
        reg = first_stage[k - 1]
        m_k = shaping.m_k[k - 1]
        a_k = np.linalg.matrix_power(a_hat, k)
        a_km1 = np.linalg.matrix_power(a_hat, k - 1)
        pred = (reg.predict(half2.observations[:, t + k])
                - reg.predict(half2.observations[:, t]) @ a_k.T
                - f_t_2 @ (a_km1 @ bk).T) @ m_k.T
        phi_cols.append(pred)
    phi = np.hstack(phi_cols)
    offsets2 = -(f_t_2 @ (shaping.big_m @ bk).T)
    h_t = erm_fit_increment(h_op, obs_now=half2.observations[:, t],
                            obs_next=half2.observations[:, t + 1],
                            left=shaping.big_m, shift=a_hat, targets=phi, offsets=offsets2)
    return first_stage, h_t


def learn_initial_state(batches: tuple[TrajectoryBatch, TrajectoryBatch],
                        h_0: FittedRegressor, estimates: SysIdEstimates,
                        config: Phase3Config, decoder_class: DecoderClass
                        ) -> InitialStatePieces:
    """Initial-state subroutine on fresh open-loop data.

    h_ol1 learns the noise estimate h_0(y_1) - A h_0(y_0) - B nu_0 as a
    function of y_1; its second-moment matrix estimates
    Sigma_w Sigma_1^{-1} Sigma_w, which is inverted (with a hard guard, no
    eigenvalue clipping) to back the predictor of A x_0 out of h_ol0.
    """
    batch_a, batch_b = batches
    a_hat, b_hat = estimates.a_hat, estimates.b_hat
    d_x = a_hat.shape[0]
    h_op = StructuredClass(base=decoder_class, output_dim=d_x, radius=config.r_op)

    y0_a, y1_a = batch_a.observations[:, 0], batch_a.observations[:, 1]
    noise_est = (h_0.predict(y1_a) - h_0.predict(y0_a) @ a_hat.T
                 - batch_a.injected[:, 0] @ b_hat.T)
    h_ol1 = erm_fit(h_op, y1_a, noise_est)

    y0_b, y1_b = batch_b.observations[:, 0], batch_b.observations[:, 1]
    vals = h_ol1.predict(y1_b)
    sigma_cov = vals.T @ vals / batch_b.n_traj
    sigma_cov = (sigma_cov + sigma_cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sigma_cov)
    if np.min(eigvals) < COV_GUARD:
        raise IllConditionedCovarianceError(
            f"initial-state covariance has smallest eigenvalue {np.min(eigvals):.3e} "
            f"below the {COV_GUARD:.0e} guard; increase n_init or sigma")
    inv_cov = (eigvecs / eigvals) @ eigvecs.T
    h_ol0 = erm_fit(h_op, y0_b, vals)
    gain = estimates.sigma_w_hat @ inv_cov
    return InitialStatePieces(h_ol1=h_ol1, sigma_cov=sigma_cov, h_ol0=h_ol0, gain=gain)


@dataclass
class LearnedPolicy:
    """Gain, per-time decoders, exploration level, and clip radius."""

    stack: DecoderStack
    sigma: float
    trajectories_used: int
    learning_clip_fraction: float = 0.0
    learning_clip_events: tuple = ()

    @property
    def k_gain(self) -> np.ndarray:
        return self.stack.k_gain

    @property
    def p_hat(self) -> np.ndarray:
        return self.stack.p_hat

    @property
    def b_bar(self) -> float:
        return self.stack.b_bar

    @property
    def t_horizon(self) -> int:
        return self.stack.depth - 1

    def policy(self) -> PolicyDef:
        return PolicyDef.gain_decoder(self.stack.k_gain, self.stack, sigma=self.sigma)

    def greedy_policy(self) -> PolicyDef:
        """Same decoders with no injected exploration noise."""
        return PolicyDef.gain_decoder(self.stack.k_gain, self.stack, sigma=0.0)


@contextmanager
def _stage(t: int, name: str):
    try:
        yield
    except Exception as exc:
        exc.args = (f"[phase3 t={t} stage={name}] {exc}",) + exc.args[1:]
        raise


def compute_policy(spec: SystemSpec, emission: EmissionModel, estimates: SysIdEstimates,
                   decoder_class: DecoderClass, config: Phase3Config, seed: int
                   ) -> LearnedPolicy:
    """Full third phase: gain synthesis plus the iterative decoder loop.

    Fresh data are collected at every iteration t (no reuse), so the sample
    budget is 2 n_op T + 2 n_init trajectories, reported on the result.
    """
    q_hat = psd_project((estimates.q_hat + estimates.q_hat.T) / 2.0)
    if np.min(np.linalg.eigvalsh(q_hat)) < Q_REG_EPS:
        q_hat = q_hat + Q_REG_EPS * np.eye(q_hat.shape[0])
    sol = solve_dare(estimates.a_hat, estimates.b_hat, q_hat, spec.r)
    shaping = build_noise_shaping(estimates.a_hat, estimates.b_hat,
                                  estimates.sigma_w_hat, config.sigma, config.kappa)
    b_bar = config.b_bar if config.b_bar is not None else default_clip_radius(
        spec.d_x, spec.d_u, config.n_op)
    stack = DecoderStack(a_hat=estimates.a_hat, b_hat=estimates.b_hat,
                         k_gain=sol.k, p_hat=sol.p, b_bar=b_bar)

    for t in range(config.t_horizon):
        with _stage(t, "collect"):
            halves = collect_onpolicy(spec, emission, stack, t, config,
                                      rngmod.derive_seed(seed, rngmod.TAG_PHASE3_LOOP, t))
        with _stage(t, "regress"):
            first_stage, h_t = fit_residual_regressors(halves, stack, shaping, t,
                                                       config, decoder_class)
        stack.first_stage[t] = first_stage
        if t == 0:
            with _stage(t, "initial-state"):
                n_init = config.n_init_effective
                init_batch = rollout(spec, emission,
                                     PolicyDef.open_loop_gaussian(sigma=config.sigma),
                                     horizon=1, n_traj=2 * n_init,
                                     base_seed=rngmod.derive_seed(seed, rngmod.TAG_PHASE3_INIT))
                pieces = learn_initial_state((_split(init_batch), _split(init_batch, second=True)),
                                             h_t, estimates, config, decoder_class)
                stack.initial = pieces
        with _stage(t, "update"):
            decoder_update(h_t, stack)

    learn_frac = stack.clip_fraction()
    learn_events = tuple(stack.clip_events)
    stack.reset_clip_stats()
    budget = 2 * config.n_op * config.t_horizon + 2 * config.n_init_effective
    return LearnedPolicy(stack=stack, sigma=config.sigma, trajectories_used=budget,
                         learning_clip_fraction=learn_frac,
                         learning_clip_events=learn_events)
