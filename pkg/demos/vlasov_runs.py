"""
Landau damping and the two-stream instability
=============================================

Run both initial conditions, follow the electric-field energy and the total
mass, and store a run in the VPTS container.
"""

import tempfile
from pathlib import Path

import numpy as np

from vlasov_lrmf.vlasov_sim import (
    PhaseSpaceGrid,
    init_landau_strong,
    init_two_stream,
    read_series,
    run,
    total_mass,
    write_series,
)

grid = PhaseSpaceGrid(64, 128)

# Strong Landau damping: the field energy oscillates and decays while the
# distribution filaments in velocity.
landau = run(init_landau_strong(grid), grid, dt=0.1, steps=300, record_every=10, ic_name="landau-strong")
for t, e in zip(landau.times[::5], landau.field_energy[::5]):
    print(f"landau      t={t:5.1f}  field energy {e:.3e}")

# Two counter-streaming beams: after an initial drop the field energy grows.
stream = run(init_two_stream(grid), grid, dt=0.1, steps=500, record_every=10, ic_name="two-stream")
late = stream.times >= 20
slope = np.polyfit(stream.times[late], np.log(stream.field_energy[late]), 1)[0]
print(f"two-stream  log field-energy slope over t >= 20: {slope:.3f}")

# Mass leaves only through the velocity edges, where f is tiny.
m0, m1 = total_mass(landau.frames[0], grid), total_mass(landau.frames[-1], grid)
print(f"relative mass change over the Landau run: {abs(m1 - m0) / m0:.2e}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "landau.vpts"
    write_series(path, landau)
    back = read_series(path)
    print(f"VPTS round trip exact: {np.array_equal(back.frames, landau.frames)} ({path.stat().st_size} bytes)")
