# %% [markdown]
# # Evaluation tools
#
# BLEU uses clipped n-gram precision with a brevity penalty. Alongside it sit
# the language consistency rate, per-output failure labels and rank
# aggregation across directions.

# %%
from walar import PrefixLid, TokenSentence, aggregate_ranks, bleu, diagnose_failures, lcr


def s(text, lang="L1"):
    return TokenSentence(tuple(text.split()), lang)


print(bleu(s("a b c d"), [s("a b c e")]))
print(bleu(s("a b c d e f"), [s("a b c d e f g h")]))

# %%
lid = PrefixLid(["L0", "L1"])
outs = [s("L1_w1 L1_w2"), s("L0_w1 L0_w2"), s("L1_w3")]
print(lcr(outs, "L1", lid))

x = s("L0_w1 L0_w2 L0_w3", "L0")
ref = s("L1_w1 L1_w2 L1_w3")
for y in (ref, x, s("L1_w1"), s("L1_w1 L1_w2 L1_w3 L1_w4 L1_w5 L1_w6")):
    print(y.text(), "->", diagnose_failures(x, y, ref, "L1", lid).value)

# %%
print(aggregate_ranks({"A": {"d1": 3, "d2": 1, "d3": 2}, "B": {"d1": 2, "d2": 2, "d3": 3}, "C": {"d1": 1, "d2": 3, "d3": 1}}))
