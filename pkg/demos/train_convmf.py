"""
Training a ConvMF network and repairing its factors
===================================================

Train a rank-8 network on a small Landau series, then compare it on held-out
frames with the SVD and with the three least-squares repairs.
"""

from vlasov_lrmf.convmf import ConvMFModel, Hyperparameters, train
from vlasov_lrmf.evalbench import METHODS, SplitSpec, average_by_rank, make_split, rank_sweep
from vlasov_lrmf.vlasov_sim import PhaseSpaceGrid, init_landau_strong, run

grid = PhaseSpaceGrid(32, 64)
series = run(init_landau_strong(grid), grid, dt=0.05, steps=400, record_every=2)
split = make_split(len(series), SplitSpec("random", seed=0))

# A smaller stem keeps this demo to a few seconds.
hyper = Hyperparameters(rank=8, epochs=30, learning_rate=1e-3, stem_dims=[256, 128], fork_dims=[192, 128])
model = ConvMFModel(32, 64, hyper)
print(f"{model.parameter_count:,} parameters")


def progress(epoch, report):
    if epoch % 5 == 0:
        print(f"epoch {epoch:3d}  train {report.train_loss[-1]:.3e}  validation {report.val_loss[-1]:.3e}")


report = train(model, series, split, hyper, callback=progress)
print(f"best validation loss {report.best_val_loss:.3e} at epoch {report.best_epoch}")

# Every repair sits between the SVD floor and the raw network output.
records = rank_sweep(series, split.test, [8], METHODS, {8: model})
for (method, rank), loss in average_by_rank(records).items():
    print(f"{method:<11s} rank {rank}: mean test loss {loss:.3e}")
