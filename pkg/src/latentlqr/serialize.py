"""On-disk formats: matrix CSV, trajectory CSV, and learned-model folders.

Matrices are row-major comma-separated values with a one-line "rows,cols"
header. Fitted regressors add a "candidate,<index>" line before the matrix
so they can be reattached to a decoder class on load. Floats are written
with repr-roundtrip precision so identical runs produce identical bytes.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .phase1 import Phase1Output
from .phase2 import SysIdEstimates
from .phase3 import DecoderStack, InitialStatePieces, LearnedPolicy
from .regression import DecoderClass, FittedRegressor


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_matrix(path: Path, m: np.ndarray) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    lines = [f"{m.shape[0]},{m.shape[1]}"]
    for row in m:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path: Path) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    rows, cols = (int(v) for v in lines[0].split(","))
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:1 + rows]])
    if data.shape != (rows, cols):
        raise ValidationError(f"{path}: header says {rows}x{cols}, data is {data.shape}")
    return data


def save_regressor(path: Path, reg: FittedRegressor) -> None:
    m = np.atleast_2d(reg.m)
    lines = [f"candidate,{reg.candidate_index}", f"{m.shape[0]},{m.shape[1]}"]
    for row in m:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_regressor(path: Path, decoder_class: DecoderClass) -> FittedRegressor:
    lines = Path(path).read_text().strip().splitlines()
    tag, idx = lines[0].split(",")
    if tag != "candidate":
        raise ValidationError(f"{path}: expected a candidate header")
    rows, cols = (int(v) for v in lines[1].split(","))
    m = np.array([[float(v) for v in line.split(",")] for line in lines[2:2 + rows]])
    if m.shape != (rows, cols):
        raise ValidationError(f"{path}: header says {rows}x{cols}, data is {m.shape}")
    return FittedRegressor(candidate_index=int(idx), m=m, empirical_loss=float("nan"),
                           decoder_class=decoder_class)


def save_key_values(path: Path, pairs: list[tuple[str, object]]) -> None:
    lines = [f"{k},{_fmt(v) if isinstance(v, float) else v}" for k, v in pairs]
    Path(path).write_text("\n".join(lines) + "\n")


def load_key_values(path: Path) -> dict:
    out = {}
    for line in Path(path).read_text().strip().splitlines():
        k, v = line.split(",", 1)
        out[k] = v
    return out


def export_trajectories_csv(path: Path, batch) -> None:
    """Rows (traj, t, x_*, y_*, u_*, c); the cost column is blank at t = 0."""
    d_x = batch.states.shape[2]
    d_y = batch.observations.shape[2]
    d_u = batch.inputs.shape[2]
    header = (["traj", "t"] + [f"x_{i}" for i in range(d_x)]
              + [f"y_{i}" for i in range(d_y)] + [f"u_{i}" for i in range(d_u)] + ["c"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(batch.n_traj):
            for t in range(batch.horizon + 1):
                row = ([i, t] + [_fmt(v) for v in batch.states[i, t]]
                       + [_fmt(v) for v in batch.observations[i, t]]
                       + [_fmt(v) for v in batch.inputs[i, t]]
                       + ([_fmt(batch.costs[i, t])] if t >= 1 else [""]))
                writer.writerow(row)


# ---------------------------------------------------------------------------
# Model folders


def save_phase1(outdir: Path, out: Phase1Output) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_regressor(outdir / "h_id.csv", out.h_id)
    save_matrix(outdir / "v_id.csv", out.v_id)
    save_key_values(outdir / "meta.csv", [("kappa0", out.kappa0), ("kappa1", out.kappa1)])


def load_phase1(outdir: Path, decoder_class: DecoderClass) -> Phase1Output:
    outdir = Path(outdir)
    meta = load_key_values(outdir / "meta.csv")
    return Phase1Output(h_id=load_regressor(outdir / "h_id.csv", decoder_class),
                        v_id=load_matrix(outdir / "v_id.csv"),
                        kappa0=int(meta["kappa0"]), kappa1=int(meta["kappa1"]),
                        eigenvalues=np.array([]))


def save_sysid(outdir: Path, est: SysIdEstimates) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_matrix(outdir / "a_hat.csv", est.a_hat)
    save_matrix(outdir / "b_hat.csv", est.b_hat)
    save_matrix(outdir / "sigma_w_hat.csv", est.sigma_w_hat)
    save_matrix(outdir / "q_hat.csv", est.q_hat)


def load_sysid(outdir: Path) -> SysIdEstimates:
    outdir = Path(outdir)
    return SysIdEstimates(a_hat=load_matrix(outdir / "a_hat.csv"),
                          b_hat=load_matrix(outdir / "b_hat.csv"),
                          sigma_w_hat=load_matrix(outdir / "sigma_w_hat.csv"),
                          q_hat=load_matrix(outdir / "q_hat.csv"))


def save_policy(outdir: Path, learned: LearnedPolicy) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stack = learned.stack
    save_matrix(outdir / "k_gain.csv", stack.k_gain)
    save_matrix(outdir / "p_hat.csv", stack.p_hat)
    save_matrix(outdir / "a_hat.csv", stack.a_hat)
    save_matrix(outdir / "b_hat.csv", stack.b_hat)
    for t, reg in enumerate(stack.residual_regressors):
        save_regressor(outdir / f"h_{t}.csv", reg)
    for t, regs in stack.first_stage.items():
        for k, reg in enumerate(regs, start=1):
            save_regressor(outdir / f"h_{t}_k{k}.csv", reg)
    if stack.initial is not None:
        save_regressor(outdir / "init_h_ol1.csv", stack.initial.h_ol1)
        save_regressor(outdir / "init_h_ol0.csv", stack.initial.h_ol0)
        save_matrix(outdir / "init_sigma_cov.csv", stack.initial.sigma_cov)
        save_matrix(outdir / "init_gain.csv", stack.initial.gain)
    save_key_values(outdir / "meta.csv", [
        ("sigma", float(learned.sigma)),
        ("b_bar", float(stack.b_bar)),
        ("t_horizon", learned.t_horizon),
        ("trajectories_used", learned.trajectories_used),
    ])


def load_policy(outdir: Path, decoder_class: DecoderClass) -> LearnedPolicy:
    outdir = Path(outdir)
    meta = load_key_values(outdir / "meta.csv")
    t_horizon = int(meta["t_horizon"])
    stack = DecoderStack(a_hat=load_matrix(outdir / "a_hat.csv"),
                         b_hat=load_matrix(outdir / "b_hat.csv"),
                         k_gain=load_matrix(outdir / "k_gain.csv"),
                         p_hat=load_matrix(outdir / "p_hat.csv"),
                         b_bar=float(meta["b_bar"]))
    for t in range(t_horizon):
        stack.residual_regressors.append(load_regressor(outdir / f"h_{t}.csv", decoder_class))
    if (outdir / "init_h_ol1.csv").exists():
        stack.initial = InitialStatePieces(
            h_ol1=load_regressor(outdir / "init_h_ol1.csv", decoder_class),
            sigma_cov=load_matrix(outdir / "init_sigma_cov.csv"),
            h_ol0=load_regressor(outdir / "init_h_ol0.csv", decoder_class),
            gain=load_matrix(outdir / "init_gain.csv"))
    return LearnedPolicy(stack=stack, sigma=float(meta["sigma"]),
                         trajectories_used=int(meta["trajectories_used"]))


def write_report_csv(path: Path, report) -> None:
    """One row per metric; schema (column set and order) is fixed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in report.rows():
            if isinstance(value, float):
                writer.writerow([name, _fmt(value)])
            else:
                writer.writerow([name, value])


def write_decoder_errors_csv(path: Path, errors: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mse"])
        for t, e in enumerate(errors, start=1):
            writer.writerow([t, _fmt(e)])
