# %% [markdown]
# # Character n-gram language identification
#
# Each word is wrapped as "<w>" and broken into character n-grams of orders 1
# to 3. A naive-Bayes model with add-one smoothing scores every language; the
# language reward masks words that look foreign and then checks the rest.

# %%
import numpy as np

from walar import SynthEnv, TokenSentence, language_alignment, mask_code_switch, train_ngram_lid

env = SynthEnv()
lid = train_ngram_lid(env.lid_corpus(200, np.random.default_rng(0)))
print(lid.detect(env.sentence(1, [1, 2, 3])))

# %% [markdown]
# A sentence with one code-switched word: the foreign word is masked and the
# remaining words still identify as the target.

# %%
y = TokenSentence(("L1_w1", "L1_w2", "L0_w9", "L1_w4"), "L1")
ms = mask_code_switch(lid, y, "L1")
print("masked:", sorted(ms.masked_indices))
print(language_alignment(lid, y, "L1"))

# %% [markdown]
# Mostly-foreign output fails the default gate ("both"): masking would leave a
# target-looking fragment, but the raw sentence is detected as L0.

# %%
y = TokenSentence(("L0_w1", "L0_w2", "L0_w3", "L1_w4"), "L1")
for gate in ("masked", "raw", "both"):
    print(gate, language_alignment(lid, y, "L1", gate=gate).r_la)
