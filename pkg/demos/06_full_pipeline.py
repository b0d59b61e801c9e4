"""End to end: all three phases, paired-seed evaluation, CSV reports.

Equivalent command line:
    latentlqr pipeline --config run.cfg --out results/
"""
from pathlib import Path

from latentlqr import ExperimentConfig, run_pipeline

config = ExperimentConfig(
    instance="scalar-identity",
    n_id=20_000,      # excitation trajectories per identification batch
    n_op=5_000,       # on-policy trajectories per decoder iteration
    t_horizon=10,
    n_eval=10_000,
    seed=42,
    sigma=0.15,       # exploration level; alternatively set epsilon
)

outdir = Path("demo_pipeline_out")
print("running phases I -> II -> III and evaluating ...")
result = run_pipeline(config, outdir=outdir)
rep = result.report

print()
print(f"J(learned) = {rep.j_learned:.4f} +- {rep.j_learned_stderr:.4f}")
print(f"J(optimal) = {rep.j_optimal:.4f} +- {rep.j_optimal_stderr:.4f}")
print(f"J(zero)    = {rep.j_zero:.4f}")
print(f"gap        = {rep.gap:.4f} +- {rep.gap_stderr:.4f} "
      f"(zero-policy gap {rep.gap_zero:.4f})")
print(f"clip fraction {rep.clip_fraction:.4f}, burn-in kappa_0 = {rep.kappa0}")
print(f"sample budget: {rep.trajectories_phase12} identification "
      f"+ {rep.trajectories_phase3} on-policy trajectories")
print(f"wall clock {rep.wall_clock_seconds:.1f}s")

print()
print(f"artifacts under {outdir}/:")
for path in sorted(outdir.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(outdir)}")
