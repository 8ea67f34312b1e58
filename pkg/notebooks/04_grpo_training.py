# %% [markdown]
# # GRPO on the toy translation environment
#
# The starting policy leans towards language L0 and half-knows the vocabulary,
# so copying is cheap. We train the same policy under three rewards and look at
# what each one learned. Runs are short here; the acceptance suite uses the
# full 500 steps.

# %%
from walar import run_experiment

for mode in ("qe_only", "qe_la", "walar"):
    s = run_experiment({"version": 1, "seed": 0, "reward": {"mode": mode}, "grpo": {"total_steps": 200}, "eval": {"prompts": 100}})
    f = s["train_final"]
    print(f"{mode:8s} dict_acc={f['dict_acc']:.3f} lcr={f['lcr']:.3f} copy={f['copy_rate']:.3f} "
          f"len_dev={f['len_dev']:.3f} wrong_or_copy={f['wrong_or_copy_rate']:.3f}")

# %% [markdown]
# Sweeping alpha on the word-alignment term; alpha=0 leaves only QE plus the
# language gate.

# %%
from walar import sweep_alpha

for row in sweep_alpha({"version": 1, "grpo": {"total_steps": 150}, "eval": {"prompts": 100}}, alphas=(0, 10, 20)):
    print(row)
