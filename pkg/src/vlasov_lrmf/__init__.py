"""Low-rank factorization of Vlasov-Poisson phase-space snapshots.

Subpackages and modules:

* ``linalg_core``: dense and truncated SVD, least squares, banded derivative operators
* ``vlasov_sim``: semi-Lagrangian 1D1V Vlasov-Poisson solver and the VPTS file format
* ``convmf``: the ConvMF network, its optimizers, training loop and checkpoints
* ``evalbench``: losses, splits, rank sweeps, histograms and timing
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("vlasov-lrmf")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
