# %% [markdown]
# # Curating training data
#
# A training line is dropped when it shares a word run covering more than 70%
# of some test sentence. Lines outside the per-language length band go too, as
# do lines that are more than 60% named entities.

# %%
from walar import Corpus, LengthBandTable, curate
from walar.curation import DEFAULT_LENGTH_BANDS

test = Corpus((("English", "the quick brown fox jumps over the lazy dog near the old river bank today"),))
train = Corpus((
    ("English", "yesterday the quick brown fox jumps over the lazy dog near the old river bank again"),
    ("English", "a completely different sentence about weather and markets that is long enough to keep"),
    ("English", "too short"),
    ("English", "Alice Smith met Bob Jones and Carol White in New York City on Monday"),
))
kept, report = curate(train, test, LengthBandTable(DEFAULT_LENGTH_BANDS))

for (lang, text), entry in zip(train, report):
    print(f"{'KEEP' if (lang, text) in list(kept) else 'DROP'}  flagged={entry.flagged!s:5s}  {text}")
