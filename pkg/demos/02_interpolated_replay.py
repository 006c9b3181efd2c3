"""
Synthetic experience from reward averaging
==========================================

Feed a handful of real transitions into the transition dictionary, then
watch one interpolation call turn them into synthetic transitions and the
shrinking synthetic queue make room as real data arrives.
"""

# %%
import numpy as np

from ier.gridworld import E, EnvConfig, GridWorld
from ier.interpolation import InterpolationConfig, interpolate_step, synthesize, SyntheticBatch
from ier.replay import Experience, InterpolatedReplay, TransitionDict

world = GridWorld(EnvConfig())
tdict = TransitionDict()

# three real visits to (5, E): one slip into state 13, two arrivals at 6
for r, s_next in [(-1.0, 6), (0.0, 13), (0.0, 6)]:
    tdict.update(Experience(5, E, r, s_next, False))

for e in SyntheticBatch(5, synthesize(tdict, 5, world)).items:
    print(e)

# %%
# A live call draws the query state uniformly over nonterminal tiles, so
# most calls in a sparse dictionary come back empty.
rng = np.random.default_rng(1)
cfg = InterpolationConfig(c_start_interpolation=0)
sizes = [len(interpolate_step(tdict, 3, cfg, world, rng)) for _ in range(530)]
print("non-empty calls:", sum(s > 0 for s in sizes), "of", len(sizes))

# %%
# The synthetic queue never exceeds min(s_synthetic, s_ier - n_real).
memory = InterpolatedReplay(s_er=10, s_ier=10, s_synthetic=8)
for i in range(8):
    memory.store_synthetic(Experience(5, E, -1 / 3, 6, False, True))
print("before:", memory.n_real, "real,", memory.n_synthetic, "synthetic")
for i in range(5):
    memory.store_real(Experience(i, 0, 0.0, i, False))
print("after: ", memory.n_real, "real,", memory.n_synthetic, "synthetic")
