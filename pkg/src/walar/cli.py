"""Command-line entry point: ``walar <subcommand> ...``.

Settings are layered: built-in defaults, then ``--config``, then ``WALAR_*``
environment variables, then explicit flags. Exit status is 0 only when the
whole command succeeded; 2 means bad input, 1 a failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import runner
from .curation import LengthBandTable, curate, write_curated
from .env import ToyPolicy
from .evaluation import FailureLabel, diagnose_failures, evaluate_policy, write_report
from .langid import LidModel, train_ngram_lid
from .reward import Rewarder
from .text import CorpusFormatError, as_tag, load_corpus, segment

log = logging.getLogger("walar")


class UsageError(Exception):
    pass


def _layered_config(args) -> dict:
    raw = {"version": runner.CONFIG_VERSION}
    path = args.config or os.environ.get("WALAR_CONFIG")
    if path:
        raw = runner.load_config(path)
    raw = runner.apply_env_overrides(raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    return raw


def cmd_train(args) -> int:
    raw = _layered_config(args)
    if args.steps is not None:
        raw.setdefault("grpo", {})["total_steps"] = args.steps
    if args.mode is not None:
        raw.setdefault("reward", {})["mode"] = args.mode
    cfg = runner.validate_config(raw)
    summary = runner.run_experiment(cfg)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def _sibling(model_path, name):
    p = os.path.join(os.path.dirname(os.path.abspath(model_path)), name)
    return p if os.path.exists(p) else None


def cmd_eval(args) -> int:
    if not args.model or not args.testset or not args.out:
        raise UsageError("eval needs --model, --testset and --out")
    if args.config is None:
        args.config = _sibling(args.model, "config.json")
    cfg = runner.validate_config(_layered_config(args))
    policy, _ = ToyPolicy.load(args.model)
    env = policy.env
    if env.config() != {**cfg["env"], "seed": cfg["seed"]}:
        log.warning("config env differs from the checkpoint env; using the checkpoint's")
    lid_path = args.lid or _sibling(args.model, "lid.json")
    streams = runner._streams(cfg["seed"])
    lid = LidModel.load(lid_path) if lid_path else None
    components = runner.build_components(cfg, env, streams, lid)
    rewarder = Rewarder(runner.build_reward_config(cfg), components)
    prompts = runner.read_prompts(args.testset)
    for lineno, (x, tgt) in enumerate(prompts, start=1):
        try:
            for t in x.tokens:
                env.parse(t)
            env.lang_index(tgt)
        except KeyError as e:
            raise UsageError(f"{args.testset}: prompt {lineno}: {e.args[0]}") from None
    rng = np.random.default_rng(streams["eval"])
    records, summary = evaluate_policy(env, policy, prompts, components.lid, rewarder, rng, args.greedy or cfg["eval"]["greedy"])
    write_report(args.out, records, summary)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_curate(args) -> int:
    if not (args.train and args.test and args.bands):
        raise UsageError("curate needs --train, --test and --bands")
    out = args.out or "curated"
    kept, report = curate(load_corpus(args.train), load_corpus(args.test), LengthBandTable.load(args.bands), n=args.ngram)
    write_curated(out, kept, report)
    print(json.dumps({"kept": len(kept.entries), "flagged": len(report.flagged())}))
    return 0


def cmd_diagnose(args) -> int:
    """Label each ``src<TAB>tgt<TAB>source<TAB>hypothesis<TAB>reference`` line."""
    if not args.input or not args.lid:
        raise UsageError("diagnose needs --input and --lid")
    lid = LidModel.load(args.lid)
    counts = {lab.value: 0 for lab in FailureLabel}
    rows = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise CorpusFormatError(args.input, lineno, "expected 5 tab-separated fields")
            src, tgt, xs, ys, rs = parts
            x, y, ref = segment(xs, src), segment(ys, tgt), segment(rs, tgt)
            label = diagnose_failures(x, y, ref, as_tag(tgt), lid, args.over, args.under)
            counts[label.value] += 1
            rows.append({"line": lineno, "label": label.value})
    out = open(args.out, "w", encoding="utf-8", newline="\n") if args.out else sys.stdout
    try:
        for r in rows:
            out.write(json.dumps(r) + "\n")
        out.write(json.dumps({"summary": counts}) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_sweep(args) -> int:
    raw = _layered_config(args)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError:
        raise UsageError(f"--alphas must be comma-separated numbers, got {args.alphas!r}") from None
    rows = runner.sweep_alpha(raw, alphas, workers=args.workers)
    for r in rows:
        print(json.dumps(r, sort_keys=True))
    return 1 if any(r["error"] for r in rows) else 0


def cmd_lid_train(args) -> int:
    if not args.out:
        raise UsageError("lid-train needs --out")
    if args.corpus:
        corpus = load_corpus(args.corpus)
    else:
        cfg = runner.validate_config({k: v for k, v in _layered_config(args).items() if k != "out"})
        env = runner.build_env(cfg)
        corpus = env.lid_corpus(cfg["lid"]["lines_per_lang"], np.random.default_rng(runner._streams(cfg["seed"])["lid"]))
    model = train_ngram_lid(corpus, args.order_lo, args.order_hi)
    model.save(args.out)
    print(json.dumps({"languages": [t.code for t in model.languages], "out": args.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="walar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train and evaluate one configuration")
    t.add_argument("--steps", type=int)
    t.add_argument("--mode", choices=["qe_only", "qe_la", "walar"])
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a policy checkpoint on a test set")
    e.add_argument("--model")
    e.add_argument("--testset", help="TSV: src<TAB>tgt<TAB>source text")
    e.add_argument("--lid", help="LID model (default: lid.json next to the checkpoint)")
    e.add_argument("--greedy", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("curate", parents=[common], help="length filter and decontaminate a corpus")
    c.add_argument("--train")
    c.add_argument("--test")
    c.add_argument("--bands", help="TSV: lang<TAB>min<TAB>max")
    c.add_argument("--ngram", type=int, default=8)
    c.set_defaults(func=cmd_curate)

    d = sub.add_parser("diagnose", parents=[common], help="label hypotheses with failure modes")
    d.add_argument("--input", help="TSV: src<TAB>tgt<TAB>source<TAB>hypothesis<TAB>reference")
    d.add_argument("--lid")
    d.add_argument("--over", type=float, default=1.5)
    d.add_argument("--under", type=float, default=0.5)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("sweep-alpha", parents=[common], help="one run per alpha with shared seeds")
    s.add_argument("--alphas", default=",".join(str(a) for a in runner.DEFAULT_ALPHAS))
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    lt = sub.add_parser("lid-train", parents=[common], help="train a character n-gram LID model")
    lt.add_argument("--corpus", help="TSV: lang<TAB>text (default: synthetic corpus from the config)")
    lt.add_argument("--order-lo", type=int, default=1)
    lt.add_argument("--order-hi", type=int, default=3)
    lt.set_defaults(func=cmd_lid_train)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, runner.ConfigError, CorpusFormatError, FileNotFoundError) as e:
        print(f"walar {args.command}: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        log.debug("failure", exc_info=True)
        print(f"walar {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
