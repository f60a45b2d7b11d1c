# %% [markdown]
# # Empirical workflow on the bundled panel
#
# The package ships a synthetic stock/market panel with the same layout as a
# daily returns file.  The state is a lagged down-market indicator.  The same
# steps run from the shell with `python -m deppred test`.

# %%
import json

from deppred.analysis import RunConfig, describe, run_full_analysis
from deppred.data import derive_state, load_bundled

ds = derive_state(load_bundled(), "down_market")
print(ds.n, "rows from", ds.date_labels()[0], "to", ds.date_labels()[-1])

# %% [markdown]
# Regime-conditional Spearman correlations and tail-dependence curves of the
# filtered residuals.

# %%
cfg = RunConfig(B=99)
rep = describe(ds, cfg)
print(json.dumps(rep.summary(), indent=1)[:600])

# %% [markdown]
# The full report: statistics, bootstrap p-values and, per region, the split
# tree in the layout of a results table.

# %%
report = run_full_analysis(ds, cfg)
for region, r in report["regions"].items():
    print(region, json.dumps(r["table"], indent=1))
