"""Group Relative Policy Optimization over :class:`~walar.env.ToyPolicy`.

Per prompt the objective is

    1/G * sum_k [ min(rho_k A_k, clip(rho_k, 1-eps, 1+eps) A_k) - beta * k3_k ]

with sequence-level ratio ``rho_k = pi(y_k) / pi_old(y_k)``, group-standardized
advantages ``A_k`` and the k3 estimator ``k3 = r - log r - 1`` for
``r = pi_ref(y_k) / pi(y_k)``. Gradients are closed-form: for a softmax row,
d log pi(a) / d logits = (onehot(a) - probs) / temperature.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .env import RolloutGroup, ToyPolicy, gen_prompt, gold_translate, sample_rollouts

log = logging.getLogger(__name__)

METRIC_KEYS = ("step", "mean_reward", "mean_r_qe", "mean_r_wa", "lcr", "copy_rate", "len_ratio", "dict_acc")


class NonFiniteError(ArithmeticError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    kl_beta: float = 0.01
    learning_rate: float = 0.05
    warmup_steps: int = 0
    batch_prompts: int = 8
    total_steps: int = 300
    seed: int = 0
    advantage_std_floor: float = 1e-8
    temperature: float = 1.0
    token_level: bool = False

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")
        if self.batch_prompts < 1 or self.total_steps < 0 or self.warmup_steps < 0:
            raise ValueError("batch_prompts >= 1, total_steps >= 0, warmup_steps >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def compute_advantages(rewards, std_floor: float = 1e-8) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("cannot standardize an empty reward group")
    std = r.std()  # population std over the fixed group
    if std < std_floor:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def kl_k3_from_log(log_ratio):
    """``r - log r - 1`` for ``log r`` given directly; exact 0 at ``log r = 0``."""
    d = np.asarray(log_ratio, dtype=float)
    out = np.expm1(d) - d
    return float(out) if out.ndim == 0 else out


def kl_k3(ratio_ref):
    r = np.asarray(ratio_ref, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("k3 needs a positive probability ratio")
    return kl_k3_from_log(np.log(r))


@dataclass
class TrainerState:
    policy: ToyPolicy
    old: ToyPolicy
    ref: ToyPolicy
    step: int = 0
    log: list = field(default_factory=list)

    @classmethod
    def start(cls, policy: ToyPolicy) -> "TrainerState":
        return cls(policy, policy.copy(), policy.copy())

    def refresh_old(self) -> None:
        self.old = self.policy.copy()


def _rollout_terms(rollout, A, lp, lp_old, lp_ref, cfg: GrpoConfig):
    """Per-step objective contributions and gradient coefficients."""
    ctx, act = rollout.contexts, rollout.actions
    eps, beta = cfg.clip_epsilon, cfg.kl_beta
    s_new = lp[ctx, act]
    s_old = lp_old[ctx, act]
    s_ref = lp_ref[ctx, act]
    if cfg.token_level:
        n = max(len(act), 1)
        logr = s_new - s_old
        logk = s_ref - s_new
        w = 1.0 / n
    else:
        logr = np.array([s_new.sum() - s_old.sum()])
        logk = np.array([s_ref.sum() - s_new.sum()])
        w = 1.0
    rho = np.exp(logr)
    ratio_ref = np.exp(logk)
    unclipped = rho * A
    clipped = np.clip(rho, 1 - eps, 1 + eps) * A
    take_unclipped = unclipped <= clipped
    surr = np.where(take_unclipped, unclipped, clipped)
    value = w * float((surr - beta * kl_k3_from_log(logk)).sum())
    coef = w * (np.where(take_unclipped, A * rho, 0.0) + beta * (ratio_ref - 1.0))
    if not cfg.token_level:
        coef = np.full(len(act), coef[0])
    return value, coef


def surrogate_objective(group: RolloutGroup, state: TrainerState, cfg: GrpoConfig):
    """Objective value and its gradient w.r.t. ``state.policy.logits`` (ascent)."""
    if group.advantages is None:
        raise ValueError("advantages not populated")
    G = len(group.rollouts)
    T = cfg.temperature
    policy = state.policy
    lp = policy.log_probs(T)
    lp_old = state.old.log_probs(T)
    lp_ref = state.ref.log_probs(T)
    probs = policy.probs(T)
    grad = np.zeros_like(policy.logits)
    rowcoef = np.zeros(policy.n_contexts)
    value = 0.0
    for k, (ro, A) in enumerate(zip(group.rollouts, group.advantages)):
        v, coef = _rollout_terms(ro, float(A), lp, lp_old, lp_ref, cfg)
        if not (math.isfinite(v) and np.all(np.isfinite(coef))):
            raise NonFiniteError(f"non-finite objective term at rollout {k}")
        value += v
        np.add.at(grad, (ro.contexts, ro.actions), coef)
        np.add.at(rowcoef, ro.contexts, coef)
    grad -= rowcoef[:, None] * probs
    grad /= G * T
    return value / G, grad


def learning_rate_at(cfg: GrpoConfig, step: int) -> float:
    if cfg.warmup_steps <= 0:
        return cfg.learning_rate
    return cfg.learning_rate * min(1.0, (step + 1) / cfg.warmup_steps)


def rollout_stats(env, x, tgt, rollout, lid) -> dict:
    """Per-rollout diagnostics used in the metrics log."""
    y = rollout.hypothesis
    gold = gold_translate(env, x, tgt)
    pos = rollout.position_actions
    gold_actions = np.array([env.token_index(env.lang_index(tgt), env.semantic_id(t)) for t in x.tokens])
    src = set(x.tokens)
    return {
        "dict_acc": float(np.mean(pos == gold_actions)) if len(x) else 0.0,
        "copy_rate": (sum(t in src for t in y.tokens) / len(y)) if len(y) else 0.0,
        "len_ratio": len(y) / len(gold) if len(gold) else 0.0,
        "lang_ok": float(lid.detect(y)[0] == tgt) if lid is not None else float("nan"),
    }


def _mean(xs):
    xs = [v for v in xs if v is not None]
    return float(np.mean(xs)) if xs else None


def train(env, rewarder, cfg: GrpoConfig, directions, policy: ToyPolicy | None = None, lid=None, metrics_path=None):
    """Run GRPO and return the final :class:`TrainerState` (its ``log`` holds per-step metrics).

    ``directions`` is a list of ``(src, tgt)`` language indices visited
    round-robin across each prompt batch. ``lid`` only feeds the logged LCR.
    """
    directions = [tuple(d) for d in directions]
    if not directions:
        raise ValueError("need at least one training direction")
    rng = np.random.default_rng(cfg.seed)
    if policy is None:
        policy = ToyPolicy(env, temperature=cfg.temperature)
    state = TrainerState.start(policy)
    sink = open(metrics_path, "w", encoding="utf-8", newline="\n") if metrics_path else None
    try:
        for step in range(cfg.total_steps):
            state.refresh_old()
            groups = []
            stats = []
            for i in range(cfg.batch_prompts):
                d = directions[(step * cfg.batch_prompts + i) % len(directions)]
                x, tgt = gen_prompt(env, rng, d)
                group = sample_rollouts(state.old, (x, tgt), cfg.group_size, cfg.temperature, rng)
                try:
                    for ro in group.rollouts:
                        ro.reward = rewarder(x, ro.hypothesis, tgt)
                except Exception as e:
                    raise TrainingError(f"reward failed at step {step}, prompt {i}: {e}") from e
                group.advantages = compute_advantages([ro.reward.total for ro in group.rollouts], cfg.advantage_std_floor)
                groups.append(group)
                stats.extend(rollout_stats(env, x, tgt, ro, lid) for ro in group.rollouts)

            total_grad = np.zeros_like(state.policy.logits)
            for g in groups:
                _, grad = surrogate_objective(g, state, cfg)
                total_grad += grad
            total_grad /= len(groups)
            state.policy.set_logits(state.policy.logits + learning_rate_at(cfg, step) * total_grad)
            state.step = step + 1

            rewards = [ro.reward for g in groups for ro in g.rollouts]
            rec = {
                "step": state.step,
                "mean_reward": _mean([r.total for r in rewards]),
                "mean_r_qe": _mean([r.r_qe for r in rewards]),
                "mean_r_wa": _mean([r.r_wa for r in rewards]),
                "lcr": _mean([s["lang_ok"] for s in stats]) if lid is not None else None,
                "copy_rate": _mean([s["copy_rate"] for s in stats]),
                "len_ratio": _mean([s["len_ratio"] for s in stats]),
                "dict_acc": _mean([s["dict_acc"] for s in stats]),
            }
            state.log.append(rec)
            if sink:
                sink.write(json.dumps(rec) + "\n")
            if step % 50 == 0:
                log.debug("step %d reward %.3f dict_acc %.3f", state.step, rec["mean_reward"], rec["dict_acc"])
    finally:
        if sink:
            sink.close()
    return state
