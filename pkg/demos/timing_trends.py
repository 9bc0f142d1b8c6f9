"""
How factorization cost scales with rank
=======================================

Time the full SVD, the Lanczos truncated SVD and a ConvMF forward pass on one
64 x 128 frame, single-threaded.
"""

from vlasov_lrmf.convmf import Hyperparameters, build_convmf
from vlasov_lrmf.evalbench import TimingConfig, timing_benchmark
from vlasov_lrmf.vlasov_sim import PhaseSpaceGrid, init_landau_strong, run

grid = PhaseSpaceGrid(64, 128)
frame = run(init_landau_strong(grid), grid, dt=0.05, steps=200, record_every=200).frames[-1]

# Inference cost does not depend on the weight values, so untrained models do.
records = timing_benchmark(
    frame,
    ranks=[5, 10, 20, 30],
    cfg=TimingConfig(warmup_runs=2, measured_runs=7),
    models=lambda r: build_convmf(64, 128, Hyperparameters(rank=r)),
)
for rec in records:
    print(f"rank {rec.rank:2d}  {rec.method:<10s} {rec.wall_time_ns / 1e6:8.3f} ms")
# Expect svd_faster to grow with rank and the other two to stay roughly flat.
