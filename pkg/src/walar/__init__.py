"""Reward shaping for multilingual translation RL at toy scale.

The reward combines a quality-estimation score, a language-consistency gate
and a word-alignment bonus; a GRPO trainer optimizes a tabular policy on a
synthetic multilingual environment where reward hacking is reproducible.
"""

from .alignment import (
    AlignmentResult,
    SimilarityPair,
    TableEmbedder,
    alignment_f1,
    extract_alignment,
    similarity_matrices,
    word_alignment_score,
)
from .curation import LengthBandTable, curate, decontaminate, length_filter, ner_ratio_filter, select_directions
from .env import PriorConfig, SynthEnv, ToyPolicy, gen_prompt, gold_translate, sample_rollouts, synthetic_embedder
from .evaluation import FailureLabel, aggregate_ranks, bleu, diagnose_failures, evaluate_policy, lcr, penalized_score
from .grpo import GrpoConfig, TrainerState, compute_advantages, kl_k3, surrogate_objective, train
from .langid import LidModel, PrefixLid, detect, language_alignment, mask_code_switch, train_ngram_lid
from .qe import Holes, QeRequest, QeScore, RemoteQeClient, holey_qe_score, oracle_qe_score, remote_qe_score
from .reward import RewardBreakdown, RewardComponents, RewardConfig, Rewarder, walar_reward
from .runner import ConfigError, run_experiment, sweep_alpha, validate_config
from .text import Corpus, LanguageTag, TokenSentence, load_corpus, parse_corpus, segment

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
