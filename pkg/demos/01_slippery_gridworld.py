"""
The slippery 8x8 lake
=====================

Walk through the environment: the map, how an intended move slips, and the
expected one-step reward that the reward-averaging interpolant approximates.
"""

# %%
import numpy as np

from ier.gridworld import ACTIONS, E, N, EnvConfig, EnvState, GridWorld

world = GridWorld(EnvConfig())
print(world.config.map.to_text())
print("nonterminal states:", len(world.nonterminal_states))

# %%
# With slip 2/3 the intended action and its two perpendicular neighbours
# are equally likely. The opposite direction never happens.
for p, s_next in world.outcomes(51, N):
    print(f"p={p:.3f} -> state {s_next} ({world.config.map.tile(s_next)})")
print("expected reward of (51, N):", world.expected_reward(51, N))

# %%
# Monte-Carlo check of the same pair.
rng = np.random.default_rng(0)
rewards = [world.step(EnvState(51), N, rng)[1] for _ in range(20_000)]
print("empirical:", np.mean(rewards))

# %%
# Optimal action values under the training rewards, for reference.
q_star = world.value_iteration(0.95)
print("V*(start) =", q_star[world.start].max())
print("greedy first move:", "NESW"[int(q_star[world.start].argmax())])
