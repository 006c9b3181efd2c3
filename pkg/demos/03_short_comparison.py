"""
A short baseline-versus-interpolation comparison
================================================

A scaled-down version of the first experiment row: fewer repetitions and
episodes, so it finishes in a couple of minutes. The full-size run is
``ier grid --experiments 1 --out results``.
"""

# %%
import numpy as np

from ier.experiment import aggregate, experiment_configs, run_experiment
from ier.stats import mann_whitney_u

configs = experiment_configs(1)
baseline, variant = configs[0], configs[1]  # vanilla, s_synthetic=20000 with c_start=250
baseline = baseline.with_(repetitions=4, episodes=600)
variant = variant.with_(repetitions=4, episodes=600)

# %%
base_runs = run_experiment(baseline)
var_runs = run_experiment(variant)

# %%
for cfg, runs in [(baseline, base_runs), (variant, var_runs)]:
    agg = aggregate(runs)
    print(f"{cfg.label:<20} mean {agg.overall_mean:.3f}  final moving average {agg.mean[-1]:.3f}")

# %%
# Per-repetition overall means enter the rank test.
test = mann_whitney_u([r.overall_mean for r in var_runs], [r.overall_mean for r in base_runs], "greater")
print("U =", test.u_statistic, "p =", round(test.p_value, 4))

# %%
# Share of synthetic transitions in the store at the end of exploration.
end = variant.agent.t_exploration - 1
print("synthetic share:", np.mean([r.buffer_sizes[end][1] / sum(r.buffer_sizes[end]) for r in var_runs]))
