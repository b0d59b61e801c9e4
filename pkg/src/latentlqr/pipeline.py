"""Experiment orchestration: config ingestion and the end-to-end pipeline.

Configs are flat key = value text with explicit seeds; unknown keys are
errors. The pipeline runs the three learning phases, evaluates the learned
policy against the ground-truth benchmark with paired seeds, and writes
report CSVs plus serialized models. Identical configs produce byte-identical
reports.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import rng as rngmod
from .benchmarks import make_benchmark_instance, parameter_bounds
from .control import optimal_policy
from .errors import ValidationError
from .evaluate import (EvalReport, align_decoder, decoder_errors_by_time, estimate_cost,
                       estimate_gap, similarity_from_ground_truth)
from .phase1 import Phase1Config, collect_id_data, fit_coarse_decoder
from .phase2 import run_sysid
from .phase3 import (Phase3Config, compute_policy, default_clip_radius, sigma_from_epsilon)
from .serialize import (export_trajectories_csv, save_phase1, save_policy, save_sysid,
                        write_decoder_errors_csv, write_report_csv)
from .system import PolicyDef, rollout

_INT_KEYS = {"n_id", "n_op", "n_init", "t_horizon", "kappa", "kappa0_override",
             "n_eval", "seed", "eval_seed", "metric_rollouts"}
_FLOAT_KEYS = {"sigma", "epsilon", "b_bar", "psi_star", "alpha_star", "gamma_star",
               "r_id", "r_op"}
_STR_KEYS = {"instance", "stability_witness"}
_BOOL_KEYS = {"export_trajectories"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one pipeline run needs; seeds are explicit, never ambient."""

    instance: str
    n_id: int
    n_op: int
    t_horizon: int
    n_eval: int
    seed: int
    sigma: Optional[float] = None
    epsilon: Optional[float] = None
    n_init: Optional[int] = None
    b_bar: Optional[float] = None
    kappa: Optional[int] = None
    psi_star: Optional[float] = None
    alpha_star: Optional[float] = None
    gamma_star: Optional[float] = None
    r_id: Optional[float] = None
    r_op: Optional[float] = None
    kappa0_override: Optional[int] = None
    eval_seed: Optional[int] = None
    metric_rollouts: int = 2000
    export_trajectories: bool = False
    stability_witness: str = "lyapunov"

    def __post_init__(self):
        for name in ("n_id", "n_op", "t_horizon", "n_eval"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.sigma is None and self.epsilon is None:
            raise ValidationError("config must set sigma or epsilon")
        if self.sigma is not None and not (0.0 < self.sigma <= 1.0):
            raise ValidationError("sigma must lie in (0, 1]")


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse flat 'key = value' lines; '#' starts a comment; fail on unknown keys."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _STR_KEYS:
            values[key] = val
        elif key in _BOOL_KEYS:
            if val.lower() not in ("true", "false"):
                raise ValidationError(f"config line {lineno}: {key} must be true or false")
            values[key] = val.lower() == "true"
        else:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    required = {"instance", "n_id", "n_op", "t_horizon", "n_eval", "seed"}
    missing = sorted(required - values.keys())
    if missing:
        raise ValidationError(f"config is missing required keys: {', '.join(missing)}")
    return ExperimentConfig(**values)


def load_config(path: Path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


@dataclass
class PipelineResult:
    report: EvalReport
    learned: object
    phase1_out: object
    estimates: object
    s_id: np.ndarray


def _resolve(config: ExperimentConfig):
    """Instance, bounds, and the two phase configs implied by an experiment config."""
    spec, emission, decoder_class = make_benchmark_instance(config.instance)
    bounds = parameter_bounds(spec, witness=config.stability_witness)
    kappa = config.kappa if config.kappa is not None else bounds.kappa
    psi = config.psi_star if config.psi_star is not None else bounds.psi_star
    alpha = config.alpha_star if config.alpha_star is not None else bounds.alpha_star
    gamma = config.gamma_star if config.gamma_star is not None else bounds.gamma_star
    p1 = Phase1Config(n_id=config.n_id, kappa=kappa, psi_star=psi, alpha_star=alpha,
                      gamma_star=gamma, d_x=spec.d_x, d_u=spec.d_u, r_id=config.r_id,
                      kappa0_override=config.kappa0_override)
    b_bar = config.b_bar if config.b_bar is not None else default_clip_radius(
        spec.d_x, spec.d_u, config.n_op)
    sigma = config.sigma if config.sigma is not None else sigma_from_epsilon(
        config.epsilon, b_bar)
    r_op = config.r_op if config.r_op is not None else psi**3
    p3 = Phase3Config(n_op=config.n_op, sigma=sigma, t_horizon=config.t_horizon,
                      kappa=kappa, r_op=r_op, n_init=config.n_init, b_bar=b_bar)
    return spec, emission, decoder_class, p1, p3


@contextmanager
def _stage(name: str):
    """Tag escaping exceptions with the pipeline stage for provenance."""
    try:
        yield
    except Exception as exc:
        exc.args = (f"[pipeline stage={name}] {exc}",) + exc.args[1:]
        raise


def run_pipeline(config: ExperimentConfig, outdir: Path | None = None) -> PipelineResult:
    """Phases I -> II -> III, then paired-seed evaluation and reporting.

    When an output directory is given, each phase's artifacts are written as
    soon as they exist, so a failure in a later stage retains the earlier ones.
    """
    started = time.perf_counter()
    spec, emission, decoder_class, p1_config, p3_config = _resolve(config)
    seed = config.seed
    eval_seed = config.eval_seed if config.eval_seed is not None else rngmod.derive_seed(
        seed, rngmod.TAG_EVAL)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)

    with _stage("phase1"):
        data = collect_id_data(spec, emission, p1_config,
                               rngmod.derive_seed(seed, rngmod.TAG_PHASE1))
        phase1_out = fit_coarse_decoder(data.batch1, data.batch2, decoder_class, p1_config)
    if outdir is not None:
        save_phase1(outdir / "phase1", phase1_out)
    with _stage("phase2"):
        estimates = run_sysid(data.batch3, phase1_out.decode, spec.r, spec.d_x)
    if outdir is not None:
        save_sysid(outdir / "sysid", estimates)
    with _stage("phase3"):
        learned = compute_policy(spec, emission, estimates, decoder_class, p3_config, seed)
    if outdir is not None:
        save_policy(outdir / "policy", learned)

    with _stage("evaluate"):
        pi_opt = optimal_policy(spec, emission)
        pi_zero = PolicyDef.zero(spec.d_u)
        t_h = config.t_horizon
        j_learned, j_learned_se = estimate_cost(spec, emission, learned.policy(), t_h,
                                                config.n_eval, eval_seed)
        j_opt, j_opt_se = estimate_cost(spec, emission, pi_opt, t_h, config.n_eval, eval_seed)
        j_zero, j_zero_se = estimate_cost(spec, emission, pi_zero, t_h, config.n_eval, eval_seed)
        gap, gap_se = estimate_gap(spec, emission, learned.policy(), pi_opt, t_h,
                                   config.n_eval, eval_seed)
        clip_fraction = learned.stack.clip_fraction()
        clip_events = sum(c for c, _ in learned.stack.clip_counts.values())

        s_id = similarity_from_ground_truth(phase1_out, spec, p1_config.kappa)
        align_sample = rollout(spec, emission, PolicyDef.open_loop_gaussian(sigma=1.0),
                               horizon=phase1_out.kappa1, n_traj=max(spec.d_x + 1, 2000),
                               base_seed=rngmod.derive_seed(eval_seed, rngmod.TAG_EVAL, 1))
        alignment = align_decoder(phase1_out.decode, emission.decode_batch,
                                  align_sample.observations[:, phase1_out.kappa1])
        decoder_errors = decoder_errors_by_time(
            spec, emission, learned, s_id, min(config.metric_rollouts, config.n_eval),
            rngmod.derive_seed(eval_seed, rngmod.TAG_EVAL, 2))

    report = EvalReport(
        j_learned=j_learned, j_learned_stderr=j_learned_se,
        j_optimal=j_opt, j_optimal_stderr=j_opt_se,
        gap=gap, gap_stderr=gap_se,
        j_zero=j_zero, j_zero_stderr=j_zero_se,
        gap_zero=j_zero - j_opt,
        decoder_align_residual=alignment.residual,
        decoder_align_sigma_min=float(np.linalg.svd(s_id, compute_uv=False)[-1]),
        decoder_errors=decoder_errors,
        clip_fraction=clip_fraction, clip_events=clip_events,
        trajectories_phase12=3 * config.n_id,
        trajectories_phase3=learned.trajectories_used,
        trajectories_eval=4 * config.n_eval,
        kappa0=phase1_out.kappa0, kappa1=phase1_out.kappa1,
        wall_clock_seconds=time.perf_counter() - started,
        extra={"alignment_s": alignment.s, "s_id": s_id},
    )

    if outdir is not None:
        write_report_csv(outdir / "report.csv", report)
        write_decoder_errors_csv(outdir / "decoder_errors.csv", report.decoder_errors)
        if config.export_trajectories:
            sample = rollout(spec, emission, learned.policy(), horizon=t_h,
                             n_traj=min(50, config.n_eval), base_seed=eval_seed)
            export_trajectories_csv(outdir / "trajectories.csv", sample)

    return PipelineResult(report=report, learned=learned, phase1_out=phase1_out,
                          estimates=estimates, s_id=s_id)
