# %% [markdown]
# # Where a quality-estimation reward can be gamed
#
# The holey QE scorer behaves like a learned metric with blind spots. A copied
# source scores 0, the best possible value, and so does a sentence made of two
# identical halves. Partial translations lose only sqrt(coverage). The language
# and word-alignment terms close these holes.

# %%
import numpy as np

from walar import (
    Holes, RewardComponents, RewardConfig, SynthEnv, TokenSentence,
    holey_qe_score, synthetic_embedder, train_ngram_lid, walar_reward,
)

env = SynthEnv()
lid = train_ngram_lid(env.lid_corpus(200, np.random.default_rng(0)))
comps = RewardComponents(env, lid, synthetic_embedder(env, dim=16, scale=12.0), lambda r: holey_qe_score(r, env, Holes()))

x = env.sentence(0, [3, 7, 11, 19])
tgt = "L2"
cands = {
    "gold": env.sentence(2, [3, 7, 11, 19]),
    "copy": x,
    "halves": env.sentence(2, [3, 7, 3, 7]),
    "partial": env.sentence(2, [3, 7]),
    "padded": env.sentence(2, [3, 7, 11, 19, 30, 31, 32]),
}

# %%
print(f"{'':8s} {'qe_only':>8s} {'qe_la':>8s} {'walar':>8s}")
for name, y in cands.items():
    row = [walar_reward(x, TokenSentence(y.tokens, tgt), tgt, RewardConfig(mode=m), comps).total for m in ("qe_only", "qe_la", "walar")]
    print(f"{name:8s} " + " ".join(f"{v:8.2f}" for v in row))

# %% [markdown]
# Under qe_only the copy ties the gold translation. The language gate removes
# it (-25), and only the alignment term separates gold output from padding.
