"""Config-driven experiments: training runs, ablations, alpha sweeps and
held-out-direction evaluation."""

from __future__ import annotations

import copy
import datetime
import json
import logging
import os
from dataclasses import asdict, fields

import jsonschema
import numpy as np

from .env import PriorConfig, SynthEnv, ToyPolicy, gen_prompt, synthetic_embedder
from .evaluation import evaluate_policy, write_report
from .grpo import GrpoConfig, train
from .langid import LidModel, train_ngram_lid
from .qe import Holes, RemoteQeClient, holey_qe_score, oracle_qe_score
from .text import as_tag, segment
from .reward import RewardComponents, RewardConfig, Rewarder

log = logging.getLogger(__name__)

CONFIG_VERSION = 1

# Desk-scale defaults; the starting policy drifts into language L0 and barely
# knows 40% of the vocabulary, which is what makes reward hacking profitable.
DEFAULTS = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "out": "runs/default",
    "env": {"num_langs": 4, "vocab_size": 50, "min_len": 3, "max_len": 7},
    "prior": {
        "gold": 5.3, "rare_fraction": 0.4, "rare_gold": 3.0, "pivot": 6.3,
        "pivot_lang": 0, "skip": 3.9, "stop": 6.5, "noise": 0.3,
    },
    "embedding": {"dim": 16, "scale": 12.0, "lang_noise": 0.0},
    "lid": {"order_lo": 1, "order_hi": 3, "lines_per_lang": 200},
    "reward": {
        "mode": "walar", "alpha": 20.0, "wa_threshold_c": 1e-3, "force_la": False,
        "word_conf_threshold": 0.5, "la_gate": "both", "qe": "holey",
        "holes": {"non_translation": True, "self_reference": True, "under_translation": True},
    },
    "grpo": {
        "group_size": 8, "clip_epsilon": 0.2, "kl_beta": 0.01, "learning_rate": 5.0,
        "warmup_steps": 0, "batch_prompts": 16, "total_steps": 500,
        "advantage_std_floor": 1e-8, "temperature": 1.0, "token_level": False,
    },
    "directions": [[0, 1], [0, 2], [0, 3], [1, 2]],
    "heldout_directions": [],
    "eval": {"prompts": 200, "greedy": False},
}

_num = {"type": "number"}
_int = {"type": "integer"}
_bool = {"type": "boolean"}
_pair = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj(
    {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string", "minLength": 1},
        "env": _obj({"num_langs": {"type": "integer", "minimum": 2}, "vocab_size": {"type": "integer", "minimum": 1},
                     "min_len": {"type": "integer", "minimum": 1}, "max_len": {"type": "integer", "minimum": 1}}),
        "prior": _obj({k: _num for k in ("gold", "rare_fraction", "rare_gold", "pivot", "skip", "stop", "noise")}
                      | {"pivot_lang": _int}),
        "embedding": _obj({"dim": {"type": "integer", "minimum": 1}, "scale": _num, "lang_noise": _num}),
        "lid": _obj({"order_lo": _int, "order_hi": _int, "lines_per_lang": {"type": "integer", "minimum": 1},
                     "model": {"type": "string"}}),
        "reward": _obj({
            "mode": {"enum": ["qe_only", "qe_la", "walar"]},
            "alpha": {"type": "number", "minimum": 0},
            "wa_threshold_c": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "force_la": _bool,
            "word_conf_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "la_gate": {"enum": ["both", "masked", "raw"]},
            "qe": {"enum": ["oracle", "holey", "remote"]},
            "holes": _obj({"non_translation": _bool, "self_reference": _bool, "under_translation": _bool}),
            "remote": _obj({"endpoint": {"type": "string"}, "timeout": _num, "max_concurrency": _int}, ["endpoint"]),
        }),
        "grpo": _obj({
            "group_size": {"type": "integer", "minimum": 1},
            "clip_epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "kl_beta": {"type": "number", "minimum": 0},
            "learning_rate": _num, "warmup_steps": {"type": "integer", "minimum": 0},
            "batch_prompts": {"type": "integer", "minimum": 1}, "total_steps": {"type": "integer", "minimum": 0},
            "advantage_std_floor": _num, "temperature": {"type": "number", "exclusiveMinimum": 0},
            "token_level": _bool,
        }),
        "directions": {"type": "array", "items": _pair, "minItems": 1},
        "heldout_directions": {"type": "array", "items": _pair},
        "eval": _obj({"prompts": {"type": "integer", "minimum": 1}, "greedy": _bool}),
    },
    required=["version"],
)


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(raw: dict) -> dict:
    """Check ``raw`` against the schema and fill defaults. Unknown keys are errors."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}") from None
    cfg = _merge(DEFAULTS, raw)
    e = cfg["env"]
    if e["min_len"] > e["max_len"] or e["max_len"] > e["vocab_size"]:
        raise ConfigError("env: need min_len <= max_len <= vocab_size")
    K = e["num_langs"]
    for key in ("directions", "heldout_directions"):
        for s, t in cfg[key]:
            if s == t or s >= K or t >= K:
                raise ConfigError(f"{key}: bad direction {[s, t]} for {K} languages")
    train_dirs = {tuple(d) for d in cfg["directions"]}
    overlap = train_dirs & {tuple(d) for d in cfg["heldout_directions"]}
    if overlap:
        raise ConfigError(f"held-out directions also used for training: {sorted(overlap)}")
    if not 0 <= cfg["prior"]["pivot_lang"] < K:
        raise ConfigError("prior.pivot_lang out of range")
    if cfg["lid"]["order_lo"] < 1 or cfg["lid"]["order_hi"] < cfg["lid"]["order_lo"]:
        raise ConfigError("lid: need 1 <= order_lo <= order_hi")
    if "model" in cfg["lid"] and not os.path.exists(cfg["lid"]["model"]):
        raise ConfigError(f"lid.model file not found: {cfg['lid']['model']}")
    if cfg["reward"]["qe"] == "remote" and "remote" not in cfg["reward"]:
        raise ConfigError("reward.qe = remote needs reward.remote.endpoint")
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return raw


def apply_env_overrides(raw: dict, environ=None) -> dict:
    """``WALAR_SECTION__KEY=<json>`` sets ``raw[section][key]``; ``WALAR_SEED`` / ``WALAR_OUT`` set top-level keys."""
    environ = os.environ if environ is None else environ
    out = copy.deepcopy(raw)
    for name, value in sorted(environ.items()):
        if not name.startswith("WALAR_") or name == "WALAR_CONFIG":
            continue
        path = [p.lower() for p in name[len("WALAR_"):].split("__")]
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = parsed
    return out


# ---------------------------------------------------------------- building blocks

def _streams(seed: int):
    names = ("lid", "prior", "embed", "train", "eval", "heldout")
    return dict(zip(names, np.random.SeedSequence(seed).spawn(len(names))))


def build_env(cfg) -> SynthEnv:
    return SynthEnv(**cfg["env"], seed=cfg["seed"])


def build_lid(cfg, env, streams):
    if "model" in cfg["lid"]:
        return LidModel.load(cfg["lid"]["model"])
    rng = np.random.default_rng(streams["lid"])
    corpus = env.lid_corpus(cfg["lid"]["lines_per_lang"], rng)
    return train_ngram_lid(corpus, cfg["lid"]["order_lo"], cfg["lid"]["order_hi"])


def build_qe(cfg, env):
    r = cfg["reward"]
    if r["qe"] == "oracle":
        return lambda req: oracle_qe_score(req, env)
    if r["qe"] == "holey":
        holes = Holes(**r["holes"])
        return lambda req: holey_qe_score(req, env, holes)
    rem = r["remote"]
    client = RemoteQeClient(rem["endpoint"], rem.get("timeout", 30.0), rem.get("max_concurrency", 4))
    return client.score


def build_reward_config(cfg) -> RewardConfig:
    r = cfg["reward"]
    return RewardConfig(
        alpha=r["alpha"], wa_threshold_c=r["wa_threshold_c"], mode=r["mode"], force_la=r["force_la"],
        word_conf_threshold=r["word_conf_threshold"], la_gate=r["la_gate"],
    )


def build_grpo_config(cfg) -> GrpoConfig:
    return GrpoConfig(**cfg["grpo"], seed=cfg["seed"])


def build_components(cfg, env, streams, lid=None):
    lid = lid if lid is not None else build_lid(cfg, env, streams)
    emb_seed = int(np.random.default_rng(streams["embed"]).integers(2**31))
    emb = synthetic_embedder(env, seed=emb_seed, **cfg["embedding"])
    return RewardComponents(env, lid, emb, build_qe(cfg, env))


def initial_policy(cfg, env, streams) -> ToyPolicy:
    prior = PriorConfig(**cfg["prior"])
    return ToyPolicy.pretrained(env, prior, np.random.default_rng(streams["prior"]), cfg["grpo"]["temperature"])


def eval_prompts(env, directions, n, seed_seq):
    rng = np.random.default_rng(seed_seq)
    dirs = [tuple(d) for d in directions]
    return [gen_prompt(env, rng, dirs[i % len(dirs)]) for i in range(n)]


def write_prompts(path, prompts) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x, tgt in prompts:
            fh.write(f"{x.lang.code}\t{tgt.code}\t{x.text()}\n")


def read_prompts(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'src<TAB>tgt<TAB>text'")
            out.append((segment(parts[2], parts[0]), as_tag(parts[1])))
    return out


def _dump(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- experiments

def run_experiment(cfg: dict, out_dir=None, lid=None) -> dict:
    """Train per ``cfg`` and evaluate before/after on training and held-out directions.

    Writes into ``out_dir`` (default ``cfg["out"]``) and returns the summary.
    ``manifest.json`` is the only file holding a timestamp.
    """
    cfg = validate_config(cfg)
    out_dir = out_dir or cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    streams = _streams(cfg["seed"])
    env = build_env(cfg)
    components = build_components(cfg, env, streams, lid)
    lid = components.lid
    rewarder = Rewarder(build_reward_config(cfg), components)
    policy = initial_policy(cfg, env, streams)
    start = policy.copy()
    gcfg = build_grpo_config(cfg)

    state = train(env, rewarder, gcfg, cfg["directions"], policy, lid=lid,
                  metrics_path=os.path.join(out_dir, "metrics.jsonl"))

    # a zero-step run has nothing new to report beyond the starting policy
    tags = (("initial", start),) if state.step == 0 else (("initial", start), ("final", state.policy))
    splits = {"train": (cfg["directions"], streams["eval"])}
    if cfg["heldout_directions"]:
        splits["heldout"] = (cfg["heldout_directions"], streams["heldout"])
    summary = {"steps": state.step, "mode": cfg["reward"]["mode"], "alpha": cfg["reward"]["alpha"]}
    for split, (dirs, seq) in splits.items():
        prompts = eval_prompts(env, dirs, cfg["eval"]["prompts"], seq)
        write_prompts(os.path.join(out_dir, f"prompts_{split}.tsv"), prompts)
        dec_seq = seq.spawn(1)[0]
        for tag, pol in tags:
            rng = np.random.default_rng(dec_seq)
            records, summ = evaluate_policy(env, pol, prompts, lid, rewarder, rng, cfg["eval"]["greedy"])
            write_report(os.path.join(out_dir, f"eval_{split}_{tag}.jsonl"), records, summ)
            summary[f"{split}_{tag}"] = summ

    state.policy.save(os.path.join(out_dir, "policy.npz"))
    lid.save(os.path.join(out_dir, "lid.json"))
    _dump(os.path.join(out_dir, "config.json"), cfg)
    _dump(os.path.join(out_dir, "summary.json"), summary)
    _dump(os.path.join(out_dir, "manifest.json"), {
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "files": sorted(f for f in os.listdir(out_dir) if f != "manifest.json"),
    })
    return summary


SWEEP_COLUMNS = ("alpha", "bleu", "lcr", "mean_reward", "len_ratio", "len_dev", "dict_acc", "error")
DEFAULT_ALPHAS = (0, 5, 10, 15, 20, 25)


def _sweep_one(args):
    base, alpha, out_dir = args
    cfg = _merge(base, {"reward": {"alpha": alpha}})
    try:
        summ = run_experiment(cfg, out_dir)
        s = summ.get("train_final", summ["train_initial"])
        return {"alpha": alpha, "bleu": s["bleu"], "lcr": s["lcr"], "mean_reward": s.get("mean_reward"),
                "len_ratio": s["len_ratio"], "len_dev": s["len_dev"], "dict_acc": s["dict_acc"], "error": None}
    except Exception as e:  # one failed run must not sink the sweep
        log.error("alpha=%s failed: %s", alpha, e)
        return {c: None for c in SWEEP_COLUMNS} | {"alpha": alpha, "error": str(e)}


def sweep_alpha(base_cfg: dict, alphas=DEFAULT_ALPHAS, out_dir=None, workers: int = 1) -> list[dict]:
    """One run per alpha with identical seeds; returns one row per alpha."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one alpha")
    base = validate_config(base_cfg)
    out_dir = out_dir or base["out"]
    jobs = [(base, a, os.path.join(out_dir, f"alpha_{a:g}")) for a in alphas]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "alpha_sweep.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(SWEEP_COLUMNS) + "\n")
        for r in rows:
            fh.write("\t".join("" if r[c] is None else (f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c])) for c in SWEEP_COLUMNS) + "\n")
    return rows
