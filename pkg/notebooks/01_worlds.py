"""
Worlds, beacons and symmetry
============================

Build the preset maps, check which translations map a world onto itself,
and write a map file that the command line tool can read back.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from mkfloc.env import (
    free_area_fraction,
    k_nearest_beacons,
    load_map,
    make_preset,
    save_map,
    translation_self_maps,
)

for name in ("world10", "World18", "WORLD27", "labyrinth"):
    env = make_preset(name)
    print(f"{name:10s} {env.width:4.0f} x {env.height:<4.0f} beacons={env.n_beacons:3d} "
          f"obstacles={len(env.obstacles):3d} free={free_area_fraction(env, 50_000):.2f}")

# %%
# The tiled worlds repeat one tile; shifting by a tile leaves the beacon set unchanged.
w10 = make_preset("world10")
tw, th = w10.tile_size
print("shift by one tile:", translation_self_maps(w10.beacon_array, (tw, 0), w10.width, w10.height))

# Dropping the last tile breaks the symmetry.
n10 = make_preset("world10", nonsymmetric=True)
print("after removing a tile:", translation_self_maps(n10.beacon_array, (tw, 0), n10.width, n10.height))

# %%
# The range sensor reports the k nearest beacons, nearest first.
for idx, d in k_nearest_beacons(w10, (2.0, 2.0), 5):
    print(f"beacon {idx:2d} at {w10.beacons[idx]} -> {d:.3f}")

# %%
path = Path(tempfile.mkdtemp()) / "world10.json"
save_map(w10, path)
assert load_map(path) == w10
print("map written to", path)
