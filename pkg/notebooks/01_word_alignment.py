# %% [markdown]
# # Word alignment as a reward signal
#
# Two sentences are embedded word by word. A row-softmax over dot products
# gives a source-to-target and a target-to-source similarity matrix; a pair is
# kept when both directions exceed the threshold c. F1 against the sentence
# lengths turns the pair set into a score in [0, 1].

# %%
import numpy as np

from walar import SynthEnv, TokenSentence, similarity_matrices, synthetic_embedder, word_alignment_score
from walar.alignment import embed_sentence

env = SynthEnv()
emb = synthetic_embedder(env, dim=16, scale=12.0)

x = env.sentence(0, [3, 7, 11, 19])
good = env.sentence(2, [3, 7, 11, 19])
print(x.text(), "->", good.text())

# %%
sims = similarity_matrices(embed_sentence(emb, x.tokens), embed_sentence(emb, good.tokens))
np.set_printoptions(precision=3, suppress=True)
print(sims.sim_xy)

# %% [markdown]
# A faithful translation aligns every word. Dropping half of it, or padding it
# with unrelated words, lowers F1 even when every surviving word is correct.

# %%
for name, y in [
    ("faithful", good),
    ("truncated", env.sentence(2, [3, 7])),
    ("padded", env.sentence(2, [3, 7, 11, 19, 30, 31, 32, 33])),
    ("unrelated", env.sentence(2, [40, 41, 42, 43])),
]:
    res = word_alignment_score(x, y, emb)
    print(f"{name:10s} F1={res.f1:.3f} pairs={sorted(res.pairs)}")

# %% [markdown]
# The unrelated sentence still scores 0.5. Each softmax row must sum to 1 and
# there is no null column, so a source word with no true partner can put its
# mass on whichever target word happens to be closest. Training can exploit
# this by padding with such hub words.

# %% [markdown]
# Masked target words still count towards the length but can never be aligned,
# so a code-switched word costs recall rather than vanishing.

# %%
y = TokenSentence(good.tokens[:3] + ("L0_w19",), "L2")
print(word_alignment_score(x, y, emb, masked={3}).f1)
