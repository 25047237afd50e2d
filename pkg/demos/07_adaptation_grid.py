"""All adaptation strategies on the high- and low-mismatch settings, five seeds each."""
# %%
from pathlib import Path

from softshift import emit_table, load_config, run_experiment, summarize

configs = Path(__file__).resolve().parents[1] / "configs"
for name in ("high_mismatch.cfg", "low_mismatch.cfg"):
    cfg = load_config((configs / name).read_text())
    results = run_experiment(cfg)
    print(f"## {name}: shift = {cfg.shift.shift}")
    for strategy, (cell, mean, std, n) in summarize(results).items():
        print(f"  {strategy:20s} T={cell.T} rho={cell.rho}  {mean:.4f} ± {std:.4f}")

# %% full table, aggregates included
print(emit_table(results, "markdown").decode())
