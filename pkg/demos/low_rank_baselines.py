"""
Optimal low-rank approximation of a phase-space snapshot
========================================================

Simulate a strong Landau damping run, take one late frame and compare the
full SVD, the Lanczos truncated SVD and a deliberately poor factorization.
"""

import numpy as np

from vlasov_lrmf.evalbench import normalized_loss, svd_loss
from vlasov_lrmf.linalg_core import best_rank_error, svd_dense, svd_truncated
from vlasov_lrmf.vlasov_sim import PhaseSpaceGrid, init_landau_strong, run

grid = PhaseSpaceGrid(64, 128)
series = run(init_landau_strong(grid), grid, dt=0.05, steps=400, record_every=400)
x = series.frames[-1]

# The singular values decay quickly: a handful of modes carry the frame.
s = svd_dense(x).singular_values
print("leading singular values:", np.array2string(s[:8], precision=3))

# Truncated SVD reaches the Eckart-Young floor at every rank.
for r in (2, 5, 12, 30):
    res = svd_truncated(x, r)
    loss = normalized_loss(x, res.left * res.singular_values, res.right)
    floor = best_rank_error(s, r, np.linalg.norm(x))
    print(f"rank {r:2d}: truncated {loss:.3e}   floor {floor:.3e}")

# Any other rank-5 pair does worse, e.g. the first five columns of the dense
# factors paired with a shuffled right factor.
res = svd_dense(x)
rng = np.random.default_rng(0)
v_bad = res.right[rng.permutation(5)] * s[:5, None]
print(f"shuffled rank 5: {normalized_loss(x, res.left[:, :5], v_bad):.3e} vs optimal {svd_loss(x, 5):.3e}")
