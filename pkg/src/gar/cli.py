"""``gar`` command line: batch workflows over JSONL corpora.

Exit codes: 0 success, 1 validation error (bad flags, config or input), 2
runtime error. Every output file starts with a manifest record.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

import gar
from gar.analytics import ZERO_ENTROPY_TAU, histogram_table, profile, split_summary
from gar.corpus import (
    MANIFEST_KIND,
    balance_labels,
    dumps,
    load_judgments,
    load_slices,
    load_traces,
    mix_batch,
    sft_examples_from_judgments,
)
from gar.errors import ConfigurationError, GarError, GatewayError, NumericalError
from gar.judge import JudgeConfig, Judgment, build_soundness_prompt, judge_response
from gar.rewards import RewardWeights, score_trace
from gar.slicer import SlicerConfig, segment

log = logging.getLogger("gar")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; validation errors here are 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- helpers ------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    """Structured config from JSON or YAML (by extension; JSON is tried first otherwise)."""
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        if Path(path).suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError:
                data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a mapping")
    return data


def _pick(args, cfg: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _settings_hash(settings: dict) -> str:
    blob = json.dumps(settings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def manifest(subcommand: str, settings: dict, seed: int | None) -> dict:
    """Versions, a hash of the effective settings, and the seed; no timestamps,
    so identical runs produce identical files."""
    return {
        "kind": MANIFEST_KIND,
        "subcommand": subcommand,
        "versions": {
            "gar": gar.__version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "config_hash": _settings_hash(settings),
        "settings": settings,
        "seed": seed,
    }


def write_output(path: str, head: dict, records: Iterable[dict]) -> int:
    tmp = Path(str(path) + ".tmp")
    n = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps(head) + "\n")
        for r in records:
            fh.write(dumps(r) + "\n")
            n += 1
    os.replace(tmp, path)
    return n


def _check_paths(out: str, *inputs: str | None) -> None:
    for p in inputs:
        if p is None:
            continue
        if not Path(p).exists():
            raise ConfigurationError(f"input file not found: {p}")
        if Path(p).resolve() == Path(out).resolve():
            raise ConfigurationError(f"output path must differ from input path: {out}")


def _trace_of(slice_ref: str) -> str:
    return slice_ref.rsplit(":", 1)[0]


# --- subcommands --------------------------------------------------------------


def cmd_slice(args, cfg: dict) -> int:
    _check_paths(args.out, args.input)
    sc = SlicerConfig(
        max_tokens=_pick(args, cfg, "max_tokens", 320),
        tokenizer_mode="whitespace",
    )
    settings = {"max_tokens": sc.max_tokens, "delimiters": list(sc.delimiters), "cue_prefixes": list(sc.cue_prefixes)}
    traces = load_traces(args.input)
    records = (s.to_dict() for t in traces for s in segment(t.think_text, sc, trace_id=t.id))
    n = write_output(args.out, manifest("slice", settings, None), records)
    log.info("wrote %d slices for %d traces", n, len(traces))
    return EXIT_OK


def cmd_judge(args, cfg: dict) -> int:
    from gar.gateway import GatewayClient, GatewayConfig, GenerationRequest

    _check_paths(args.out, args.input, args.traces)
    jc = JudgeConfig(
        max_new_tokens=_pick(args, cfg, "max_new_tokens", 128),
        context_slices=_pick(args, cfg, "context_slices", 0),
    )
    gw = GatewayConfig.from_env(
        endpoint=_pick(args, cfg, "endpoint", None),
        model=_pick(args, cfg, "model", None),
        max_attempts=_pick(args, cfg, "max_attempts", 5),
        timeout=_pick(args, cfg, "timeout", 120.0),
    )
    temperature = _pick(args, cfg, "temperature", 0.6)
    max_in_flight = _pick(args, cfg, "max_in_flight", 8)
    slices = load_slices(args.input)
    questions = {t.id: t.question for t in load_traces(args.traces)} if args.traces else {}

    by_trace = defaultdict(list)
    for s in slices:
        by_trace[s.trace_id].append(s)
    for group in by_trace.values():
        group.sort(key=lambda s: s.index)
    requests = []
    for s in slices:
        before = [p for p in by_trace[s.trace_id] if p.index < s.index][-jc.context_slices:] if jc.context_slices else []
        messages = build_soundness_prompt(s, questions.get(s.trace_id), jc, preceding=before)
        requests.append(GenerationRequest(messages=messages, temperature=temperature, max_tokens=jc.max_new_tokens))

    settings = {
        "max_new_tokens": jc.max_new_tokens,
        "context_slices": jc.context_slices,
        "temperature": temperature,
        "model": gw.model,
        "endpoint": gw.endpoint,
    }
    with GatewayClient(gw) as client:
        results = client.generate_batch(requests, max_in_flight)

    failures = 0
    judgments = []
    for s, res in zip(slices, results):
        if isinstance(res, GatewayError):
            failures += 1
            log.error("slice %s: %s", s.ref, res)
            judgments.append(Judgment(s.ref, None, "", "", False, ""))
        else:
            j = judge_response(res.text, jc, slice_ref=s.ref)
            # server-side length stops count as truncation too
            if res.finish_reason == "length" and not j.truncated:
                j.truncated = True
            judgments.append(j)
    write_output(args.out, manifest("judge", settings, None), (j.to_dict() for j in judgments))
    if failures:
        log.error("%d of %d requests failed", failures, len(slices))
        return EXIT_RUNTIME
    return EXIT_OK


def _weights(args, cfg: dict) -> RewardWeights:
    base = RewardWeights()
    return RewardWeights(
        **{k: float(_pick(args, cfg, k, getattr(base, k))) for k in ("lambda1", "lambda2", "lambda3", "lambda4")}
    )


def cmd_reward(args, cfg: dict) -> int:
    _check_paths(args.out, args.input, args.traces)
    w = _weights(args, cfg)
    judgments = load_judgments(args.input)
    traces = load_traces(args.traces)
    verdicts = defaultdict(list)
    for j in sorted(judgments, key=lambda j: (_trace_of(j.slice_ref), int(j.slice_ref.rsplit(":", 1)[1]))):
        verdicts[_trace_of(j.slice_ref)].append(j.verdict)
    records = []
    for t in traces:
        if t.id not in verdicts:
            raise ConfigurationError(f"trace {t.id!r} has no judged slices")
        records.append(score_trace(t.answer_text, t.ground_truth_answer, verdicts[t.id], w).to_record(t.id))
    settings = {k: getattr(w, k) for k in ("lambda1", "lambda2", "lambda3", "lambda4")}
    write_output(args.out, manifest("reward", settings, None), records)
    return EXIT_OK


def cmd_sft_build(args, cfg: dict) -> int:
    _check_paths(args.out, args.input, args.slices)
    seed = _pick(args, cfg, "seed", 0)
    examples = sft_examples_from_judgments(load_slices(args.slices), load_judgments(args.input))
    balanced = balance_labels(examples, seed)
    write_output(args.out, manifest("sft-build", {"balance": "downsample-majority"}, seed), (e.to_dict() for e in balanced))
    return EXIT_OK


def cmd_mix(args, cfg: dict) -> int:
    _check_paths(args.out, args.gen, args.ref)
    seed = _pick(args, cfg, "seed", 0)
    batch = mix_batch(load_slices(args.gen), load_slices(args.ref), seed)
    write_output(args.out, manifest("mix", {"k": len(batch.generated_slices)}, seed), batch.records())
    return EXIT_OK


def cmd_train_toy(args, cfg: dict) -> int:
    from gar.toyenv.distill import train_distill
    from gar.toyenv.training import TrainingConfig

    _check_paths(args.out)
    toy_cfg = dict(cfg)
    mode = args.mode or toy_cfg.pop("mode", "full")
    toy_cfg.pop("mode", None)
    if args.episodes is not None:
        toy_cfg["episodes"] = args.episodes
    seeds = [args.seed] if args.seed is not None else list(toy_cfg.pop("seeds", [0]))
    toy_cfg.pop("seeds", None)
    for k in ("lambda1", "lambda2", "lambda3", "lambda4"):
        if getattr(args, k) is not None:
            toy_cfg.setdefault("weights", {})[k] = getattr(args, k)
    if isinstance(toy_cfg.get("weights"), dict):
        toy_cfg["weights"] = RewardWeights(**toy_cfg["weights"])
    unknown = set(toy_cfg) - set(TrainingConfig.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown training config keys: {sorted(unknown)}")
    tc = TrainingConfig.for_mode(mode, seeds=tuple(seeds), **toy_cfg)

    records = []
    for seed in tc.seeds:
        if tc.mode == "distill":
            records.extend(train_distill(tc, seed).to_records(args.timing))
        else:
            from gar.toyenv.training import train_joint

            report = train_joint(tc, seed)
            records.extend(report.to_records(args.timing))
            if report.aborted:
                write_output(args.out, manifest("train-toy", tc.to_dict(), seed), records)
                raise NumericalError(report.aborted)
    write_output(args.out, manifest("train-toy", tc.to_dict(), tc.seeds[0]), records)
    return EXIT_OK


def cmd_entropy(args, cfg: dict) -> int:
    _check_paths(args.out, args.input)
    tau = _pick(args, cfg, "tau", ZERO_ENTROPY_TAU)
    profiles = []
    for t in load_traces(args.input):
        if not t.per_token_entropies:
            log.warning("trace %s has no entropies; skipped", t.id)
            continue
        profiles.append(
            profile(
                t.per_token_entropies,
                tau,
                correct=int(bool(t.final_correct)),
                trace_id=t.id,
                approximate=bool(t.extra.get("entropy_approximate", False)),
            )
        )
    if not profiles:
        raise ConfigurationError("no trace carries per-token entropies")
    records = [p.to_dict() for p in profiles]
    for filtered in (False, True):
        summary = {k: v.to_dict() for k, v in split_summary(profiles, filtered).items()}
        records.append({"kind": "summary", "filtered": filtered, **summary})
    write_output(args.out, manifest("entropy", {"tau": tau}, None), records)
    sys.stdout.write(histogram_table(profiles, args.bins))
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gar", description="Slice, judge and score reasoning traces; run the toy trainer.")
    p.add_argument("--version", action="version", version=f"gar {gar.__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, with_in=True):
        if with_in:
            sp.add_argument("--in", dest="input", required=True, help="input JSONL")
        sp.add_argument("--out", required=True, help="output JSONL")
        sp.add_argument("--config", help="JSON or YAML config file")
        return sp

    s = common(sub.add_parser("slice", help="segment traces into slices"))
    s.add_argument("--max-tokens", dest="max_tokens", type=int, help="slice budget L (default 320)")
    s.set_defaults(func=cmd_slice)

    s = common(sub.add_parser("judge", help="query a judge model for slice verdicts"))
    s.add_argument("--traces", help="traces JSONL supplying the question for each slice")
    s.add_argument("--endpoint", help="chat-completion endpoint (else GAR_ENDPOINT)")
    s.add_argument("--model", help="model name (else GAR_MODEL)")
    s.add_argument("--max-new-tokens", dest="max_new_tokens", type=int, help="judge output cap K (default 128)")
    s.add_argument("--context-slices", dest="context_slices", type=int)
    s.add_argument("--temperature", type=float)
    s.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    s.set_defaults(func=cmd_judge)

    s = common(sub.add_parser("reward", help="score traces from judgments"))
    s.add_argument("--traces", required=True, help="traces JSONL with answers and ground truth")
    for k in range(1, 5):
        s.add_argument(f"--lambda{k}", dest=f"lambda{k}", type=float)
    s.set_defaults(func=cmd_reward)

    s = common(sub.add_parser("sft-build", help="label-balanced SFT set from judgments"))
    s.add_argument("--slices", required=True, help="slices JSONL the judgments refer to")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_sft_build)

    s = common(sub.add_parser("mix", help="balanced generated/reference provenance batch"), with_in=False)
    s.add_argument("--gen", required=True, help="generated slices JSONL")
    s.add_argument("--ref", required=True, help="reference slices JSONL")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_mix)

    s = common(sub.add_parser("train-toy", help="run the toy joint trainer"), with_in=False)
    s.add_argument("--mode")
    s.add_argument("--seed", type=int)
    s.add_argument("--episodes", type=int)
    for k in range(1, 5):
        s.add_argument(f"--lambda{k}", dest=f"lambda{k}", type=float)
    s.add_argument("--timing", action="store_true", help="include wall times (breaks byte-identical reruns)")
    s.set_defaults(func=cmd_train_toy)

    s = common(sub.add_parser("entropy", help="per-trace entropy profiles and summaries"))
    s.add_argument("--tau", type=float)
    s.add_argument("--bins", type=int, default=10)
    s.set_defaults(func=cmd_entropy)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (GatewayError, NumericalError) as exc:
        print(f"gar: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (GarError, ValueError, TypeError, FileNotFoundError) as exc:
        print(f"gar: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"gar: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())
