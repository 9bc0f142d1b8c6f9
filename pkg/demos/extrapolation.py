"""
Interpolating versus extrapolating in time
==========================================

Train once on a random 70% of the frames and once on the first 70%, then
compare the held-out losses. Networks that have only seen early frames do
much worse on the late, filamented ones.
"""

from vlasov_lrmf.convmf import ConvMFModel, Hyperparameters, train
from vlasov_lrmf.evalbench import SplitSpec, average_by_rank, make_split, rank_sweep
from vlasov_lrmf.evalbench.extrapolation import extrapolation_experiment
from vlasov_lrmf.vlasov_sim import PhaseSpaceGrid, init_landau_strong, run

grid = PhaseSpaceGrid(32, 64)
series = run(init_landau_strong(grid), grid, dt=0.05, steps=400, record_every=2)
hyper = Hyperparameters(rank=6, epochs=25, learning_rate=1e-3, stem_dims=[256, 128], fork_dims=[192, 128])

split = make_split(len(series), SplitSpec("random"))
model = ConvMFModel(32, 64, hyper)
train(model, series, split, hyper)
random_loss = average_by_rank(rank_sweep(series, split.test, [6], ("convmf",), {6: model}))[("convmf", 6)]

seq = extrapolation_experiment(series, hyper)
print(f"random split     mean test loss {random_loss:.3e}")
print(f"sequential split mean test loss {seq.test_loss:.3e} (frames from {seq.boundary} on were never seen)")
