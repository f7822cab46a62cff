"""Command-line entry point.

Subcommands: synth | mine | reform | run | mix | eval | score. Options can
come from a JSON config file (sections keyed by subcommand, globals at the
top level); explicit flags win over file values, and unknown file keys are
rejected rather than ignored. Every invocation writes a JSON report that
embeds the fully resolved config and its hash, so runs are self-describing
and reproducible. Reports go to --report when given, else to stderr,
keeping stdout clean for record output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .contrastive import ContrastiveConfig, batch_hardness, compare_batching
from .ingest import (
    Dialogue,
    ParseStats,
    RecordParseError,
    Sample,
    SyntheticSpec,
    dialogue_to_record,
    generate_synthetic,
    parse_sample_stream,
    sample_from_record,
    sample_to_record,
)
from .metrics import domain_normalized, error_type_rates, score_pairs, werr
from .mining import (
    MixSpec,
    MixStats,
    SimilarityConfig,
    WindowConfig,
    build_dialogue,
    detect_reformulations,
    mix_streams,
)
from .pipeline import OhmConfig, OhmPipeline

log = logging.getLogger("ohmpipe")

_GLOBAL_KEYS = {"seed", "log_level"}

_SECTION_KEYS = {
    "synth": {"clusters", "dim", "per_cluster", "spread", "scale", "seed", "out", "attach_context"},
    "run": {"input", "dim", "clusters", "window", "refit", "batch", "capacity", "flush",
            "seed", "report", "out", "emit_samples", "lenient"},
    "mine": {"pool", "seeds", "dim", "window", "min_window", "shrink", "max_utts", "out"},
    "reform": {"input", "pool", "dim", "cos", "edit", "combine", "ngram", "include_past", "out"},
    "mix": {"spec", "dim", "seed", "out"},
    "eval": {"input", "dim", "mode", "batches", "tau", "batch", "clusters", "window",
             "refit", "capacity", "seed", "report"},
    "score": {"refs", "hyps", "base_hyps", "teacher_hyps", "by_domain", "report"},
}


class CliError(Exception):
    """A user-facing error with a module-qualified category and exit code."""

    def __init__(self, module: str, category: str, message: str, exit_code: int = 4):
        super().__init__(message)
        self.module = module
        self.category = category
        self.exit_code = exit_code


def _load_config_file(path: str | None, command: str) -> dict:
    """Read config values for one subcommand, validating every key."""
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError("cli", "missing-config", f"config file not found: {path}", 3)
    except json.JSONDecodeError as exc:
        raise CliError("cli", "bad-config", f"config file {path} is not valid JSON: {exc}", 2)
    if not isinstance(raw, dict):
        raise CliError("cli", "bad-config", "config file must hold a JSON object", 2)

    values = {}
    for key, value in raw.items():
        if key in _GLOBAL_KEYS:
            values[key] = value
        elif key in _SECTION_KEYS:
            if key != command:
                continue
            section = value
            if not isinstance(section, dict):
                raise CliError("cli", "bad-config", f"section '{key}' must be an object", 2)
            for sub_key, sub_value in section.items():
                if sub_key not in _SECTION_KEYS[command]:
                    raise CliError("cli", "unknown-key",
                                   f"unknown key '{sub_key}' in config section '{command}'", 2)
                values[sub_key] = sub_value
        else:
            raise CliError("cli", "unknown-key", f"unknown config key '{key}'", 2)
    return values


def _resolve(args: argparse.Namespace, command: str, defaults: dict) -> dict:
    """defaults < config file < explicit flags, plus the seed env fallback."""
    resolved = dict(defaults)
    resolved.update(_load_config_file(args.config, command))
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    if resolved.get("seed") is None:
        env_seed = os.environ.get("OHMPIPE_SEED")
        resolved["seed"] = int(env_seed) if env_seed is not None else 0
    return resolved


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _write_report(report: dict, path: str | None):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text, file=sys.stderr)


def _open_input(path: str):
    if path == "-":
        return sys.stdin
    try:
        return open(path, "r")
    except FileNotFoundError:
        raise CliError("cli", "missing-input", f"input file not found: {path}", 3)


def _open_output(path: str | None):
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w")


def _load_samples(path: str, dim: int, lenient: bool = False) -> tuple[list[Sample], ParseStats]:
    stats = ParseStats()
    handle = _open_input(path)
    try:
        samples = list(parse_sample_stream(handle, dim, strict=not lenient, stats=stats))
    finally:
        if handle is not sys.stdin:
            handle.close()
    return samples, stats


def _report_skeleton(command: str, config: dict) -> dict:
    return {
        "command": command,
        "ohmpipe_version": __version__,
        "config": config,
        "config_sha256": _config_hash(config),
    }


# -- subcommands ----------------------------------------------------------


def _cmd_synth(args) -> int:
    defaults = {"clusters": 32, "dim": None, "per_cluster": 100, "spread": 1.0,
                "scale": 10.0, "seed": None, "out": None, "attach_context": False}
    cfg = _resolve(args, "synth", defaults)
    if cfg["dim"] is None:
        raise CliError("synth", "missing-dim", "embedding dimension is required (--dim)", 2)
    started = time.perf_counter()
    spec = SyntheticSpec(
        n_clusters=int(cfg["clusters"]), dim=int(cfg["dim"]),
        samples_per_cluster=int(cfg["per_cluster"]), cluster_spread=float(cfg["spread"]),
        centroid_scale=float(cfg["scale"]), rng_seed=int(cfg["seed"]),
    )
    samples = generate_synthetic(spec, attach_context=bool(cfg["attach_context"]))
    out = _open_output(cfg["out"])
    try:
        for sample in samples:
            out.write(json.dumps(sample_to_record(sample)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    wall = time.perf_counter() - started
    report = _report_skeleton("synth", cfg)
    report["counters"] = {"samples_emitted": len(samples)}
    report["wall_clock_s"] = wall
    report["throughput_samples_per_s"] = len(samples) / wall if wall > 0 else 0.0
    _write_report(report, getattr(args, "report", None))
    return 0


def _cmd_run(args) -> int:
    defaults = {"input": None, "dim": None, "clusters": 32, "window": 4096, "refit": 10000,
                "batch": 16, "capacity": None, "flush": "emit", "seed": None,
                "report": None, "out": None, "emit_samples": False, "lenient": False}
    cfg = _resolve(args, "run", defaults)
    if cfg["dim"] is None:
        raise CliError("run", "missing-dim", "embedding dimension is required (--dim)", 2)
    if cfg["input"] is None:
        raise CliError("run", "missing-input", "an input file is required (--input)", 2)
    flush = {"emit": "emit_partial", "drop": "drop_partial"}.get(cfg["flush"])
    if flush is None:
        raise CliError("run", "bad-flush", "flush must be 'emit' or 'drop'", 2)

    ohm_config = OhmConfig(
        dim=int(cfg["dim"]), update_window_size=int(cfg["window"]),
        n_clusters=int(cfg["clusters"]), refit_interval=int(cfg["refit"]),
        batch_size=int(cfg["batch"]),
        reservoir_capacity=None if cfg["capacity"] is None else int(cfg["capacity"]),
        flush_policy=flush, rng_seed=int(cfg["seed"]),
    )
    stats = ParseStats()
    handle = _open_input(cfg["input"])
    out = _open_output(cfg["out"])
    pipeline = OhmPipeline(ohm_config)
    try:
        stream = parse_sample_stream(handle, ohm_config.dim,
                                     strict=not cfg["lenient"], stats=stats)
        for batch in pipeline.run(stream):
            record = {
                "cluster_label": batch.cluster_label,
                "model_version": batch.model_version,
                "sample_ids": [s.id for s in batch.samples],
            }
            if cfg["emit_samples"]:
                record["samples"] = [sample_to_record(s) for s in batch.samples]
            out.write(json.dumps(record) + "\n")
    finally:
        if handle is not sys.stdin:
            handle.close()
        if out is not sys.stdout:
            out.close()

    report = _report_skeleton("run", cfg)
    report["counters"] = pipeline.report.to_dict()
    report["counters"]["records_skipped_parse"] = stats.records_skipped
    report["wall_clock_s"] = pipeline.report.wall_clock_s
    report["throughput_samples_per_s"] = pipeline.report.throughput
    _write_report(report, cfg["report"])
    return 0


def _cmd_mine(args) -> int:
    defaults = {"pool": None, "seeds": None, "dim": None, "window": 90.0,
                "min_window": 15.0, "shrink": 0.5, "max_utts": 5, "out": None}
    cfg = _resolve(args, "mine", defaults)
    for required in ("pool", "seeds", "dim"):
        if cfg[required] is None:
            raise CliError("mine", f"missing-{required.replace('_', '-')}",
                           f"--{required} is required", 2)
    window_cfg = WindowConfig(
        initial_window_s=float(cfg["window"]), shrink_factor=float(cfg["shrink"]),
        min_window_s=float(cfg["min_window"]), max_utterances=int(cfg["max_utts"]),
    )
    started = time.perf_counter()
    pool, _ = _load_samples(cfg["pool"], int(cfg["dim"]))
    pool.sort(key=lambda s: s.timestamp_s)
    by_id = {s.id: s for s in pool}

    seeds: list[Sample] = []
    with _open_input(cfg["seeds"]) as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                record = json.loads(line)
                seeds.append(sample_from_record(record, int(cfg["dim"]), line_number))
            else:
                if line not in by_id:
                    raise CliError("mine", "unknown-seed-id",
                                   f"seed id {line!r} not present in the pool", 4)
                seeds.append(by_id[line])

    out = _open_output(cfg["out"])
    try:
        for seed in seeds:
            dialogue = build_dialogue(seed, pool, window_cfg)
            out.write(json.dumps(dialogue_to_record(dialogue)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    wall = time.perf_counter() - started
    report = _report_skeleton("mine", cfg)
    report["counters"] = {"dialogues": len(seeds), "pool_size": len(pool)}
    report["wall_clock_s"] = wall
    report["throughput_samples_per_s"] = len(seeds) / wall if wall > 0 else 0.0
    _write_report(report, getattr(args, "report", None))
    return 0


def _cmd_reform(args) -> int:
    defaults = {"input": None, "pool": None, "dim": None, "cos": 0.6, "edit": 0.7,
                "combine": "any", "ngram": 3, "include_past": False, "out": None}
    cfg = _resolve(args, "reform", defaults)
    for required in ("input", "pool", "dim"):
        if cfg[required] is None:
            raise CliError("reform", f"missing-{required}", f"--{required} is required", 2)
    sim_cfg = SimilarityConfig(
        cosine_threshold=float(cfg["cos"]), edit_sim_threshold=float(cfg["edit"]),
        combine=cfg["combine"], ngram_order=int(cfg["ngram"]),
        include_past=bool(cfg["include_past"]),
    )
    started = time.perf_counter()
    pool, _ = _load_samples(cfg["pool"], int(cfg["dim"]))
    by_id = {s.id: s for s in pool}

    flagged = total = 0
    out = _open_output(cfg["out"])
    try:
        with _open_input(cfg["input"]) as handle:
            for line_number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                try:
                    dialogue = Dialogue(
                        seed=by_id[record["seed"]],
                        past=[by_id[i] for i in record.get("past", [])],
                        future=[by_id[i] for i in record.get("future", [])],
                        window_s=record.get("window_s", 90.0),
                    )
                except KeyError as exc:
                    raise CliError("reform", "unknown-sample-id",
                                   f"line {line_number}: sample id {exc} not in the pool", 4)
                annotated = detect_reformulations(dialogue, sim_cfg)
                flagged += bool(annotated.has_reformulation)
                total += 1
                out.write(json.dumps(dialogue_to_record(annotated)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    wall = time.perf_counter() - started
    report = _report_skeleton("reform", cfg)
    report["counters"] = {"dialogues": total, "flagged": flagged}
    report["wall_clock_s"] = wall
    report["throughput_samples_per_s"] = total / wall if wall > 0 else 0.0
    _write_report(report, getattr(args, "report", None))
    return 0


def _cmd_mix(args) -> int:
    defaults = {"spec": None, "dim": None, "seed": None, "out": None}
    cfg = _resolve(args, "mix", defaults)
    for required in ("spec", "dim"):
        if cfg[required] is None:
            raise CliError("mix", f"missing-{required}", f"--{required} is required", 2)
    try:
        spec_doc = json.loads(Path(cfg["spec"]).read_text())
    except FileNotFoundError:
        raise CliError("mix", "missing-spec", f"mix spec not found: {cfg['spec']}", 3)
    streams = spec_doc.get("streams")
    if not isinstance(streams, list) or not streams:
        raise CliError("mix", "bad-spec", "mix spec needs a non-empty 'streams' list", 2)

    started = time.perf_counter()
    dim = int(cfg["dim"])
    handles = []
    pairs = []
    for entry in streams:
        handle = _open_input(entry["path"])
        handles.append(handle)
        pairs.append((parse_sample_stream(handle, dim), float(entry["weight"])))
    mix_spec = MixSpec(streams=pairs, rng_seed=int(cfg["seed"]))
    stats = MixStats()
    emitted = 0
    out = _open_output(cfg["out"])
    try:
        for sample in mix_streams(mix_spec, stats):
            out.write(json.dumps(sample_to_record(sample)) + "\n")
            emitted += 1
    finally:
        for handle in handles:
            if handle is not sys.stdin:
                handle.close()
        if out is not sys.stdout:
            out.close()
    wall = time.perf_counter() - started
    report = _report_skeleton("mix", cfg)
    report["counters"] = {
        "samples_emitted": emitted,
        "emitted_per_stream": stats.emitted_per_stream,
        "exhausted_order": stats.exhausted_order,
    }
    report["wall_clock_s"] = wall
    report["throughput_samples_per_s"] = emitted / wall if wall > 0 else 0.0
    _write_report(report, getattr(args, "report", None))
    return 0


def _cmd_eval(args) -> int:
    defaults = {"input": None, "dim": None, "mode": "compare", "batches": 100, "tau": 0.07,
                "batch": 16, "clusters": 32, "window": 4096, "refit": 10000,
                "capacity": None, "seed": None, "report": None}
    cfg = _resolve(args, "eval", defaults)
    if cfg["input"] is None:
        raise CliError("eval", "missing-input", "an input file is required (--input)", 2)
    if cfg["dim"] is None:
        raise CliError("eval", "missing-dim", "embedding dimension is required (--dim)", 2)
    if cfg["mode"] not in ("ohm", "uniform", "compare"):
        raise CliError("eval", "bad-mode", "mode must be ohm, uniform, or compare", 2)

    started = time.perf_counter()
    samples, _ = _load_samples(cfg["input"], int(cfg["dim"]))
    ohm_config = OhmConfig(
        dim=int(cfg["dim"]), update_window_size=int(cfg["window"]),
        n_clusters=int(cfg["clusters"]), refit_interval=int(cfg["refit"]),
        batch_size=int(cfg["batch"]),
        reservoir_capacity=None if cfg["capacity"] is None else int(cfg["capacity"]),
        rng_seed=int(cfg["seed"]),
    )
    contrastive_cfg = ContrastiveConfig(temperature=float(cfg["tau"]))
    n_batches = int(cfg["batches"])

    report = _report_skeleton("eval", cfg)
    if cfg["mode"] == "compare":
        comparison = compare_batching(samples, ohm_config, contrastive_cfg, n_batches)
        report["comparison"] = comparison.to_dict()
    else:
        rows = []
        if cfg["mode"] == "ohm":
            pipeline = OhmPipeline(ohm_config)
            groups = [b for b in pipeline.run(iter(samples)) if len(b) == ohm_config.batch_size]
        else:
            rng = np.random.default_rng(ohm_config.rng_seed)
            order = rng.permutation(len(samples))
            groups = [
                [samples[int(i)] for i in order[k * ohm_config.batch_size:(k + 1) * ohm_config.batch_size]]
                for k in range(len(samples) // ohm_config.batch_size)
            ]
        for group in groups[:n_batches]:
            h = batch_hardness(group, contrastive_cfg)
            rows.append({"mean_negative_sim": h.mean_negative_sim, "loss": h.loss,
                         "n_pairs": h.n_pairs})
        report["batches"] = rows
        sims = [r["mean_negative_sim"] for r in rows if not np.isnan(r["mean_negative_sim"])]
        report["mean_negative_sim"] = float(np.mean(sims)) if sims else None
    wall = time.perf_counter() - started
    report["counters"] = {"samples_loaded": len(samples)}
    report["wall_clock_s"] = wall
    report["throughput_samples_per_s"] = len(samples) / wall if wall > 0 else 0.0
    _write_report(report, cfg["report"])
    return 0


def _read_scored_file(path: str) -> tuple[dict | None, list[str]]:
    """Read refs/hyps as sample records (id-keyed) or plain aligned lines."""
    lines = []
    with _open_input(path) as handle:
        for line in handle:
            line = line.rstrip("\n")
            if line.strip():
                lines.append(line)
    if lines and lines[0].lstrip().startswith("{"):
        by_id = {}
        domains = {}
        for line in lines:
            record = json.loads(line)
            by_id[record["id"]] = record["text"]
            domains[record["id"]] = record.get("domain")
        return {"texts": by_id, "domains": domains}, []
    return None, lines


def _paired_texts(refs_path: str, hyps_path: str) -> tuple[list[tuple[str, str]], list[str] | None]:
    refs_records, refs_lines = _read_scored_file(refs_path)
    hyps_records, hyps_lines = _read_scored_file(hyps_path)
    if refs_records is not None and hyps_records is not None:
        ref_texts, hyp_texts = refs_records["texts"], hyps_records["texts"]
        shared = [i for i in ref_texts if i in hyp_texts]
        if not shared:
            raise CliError("score", "no-overlap", "refs and hyps share no sample ids", 4)
        pairs = [(ref_texts[i], hyp_texts[i]) for i in shared]
        domains = [refs_records["domains"][i] or "unknown" for i in shared]
        return pairs, domains
    if refs_records is None and hyps_records is None:
        if len(refs_lines) != len(hyps_lines):
            raise CliError("score", "length-mismatch",
                           f"refs has {len(refs_lines)} lines, hyps has {len(hyps_lines)}", 4)
        return list(zip(refs_lines, hyps_lines)), None
    raise CliError("score", "format-mismatch",
                   "refs and hyps must both be plain text or both be sample records", 4)


def _cmd_score(args) -> int:
    defaults = {"refs": None, "hyps": None, "base_hyps": None, "teacher_hyps": None,
                "by_domain": False, "report": None}
    cfg = _resolve(args, "score", defaults)
    for required in ("refs", "hyps"):
        if cfg[required] is None:
            raise CliError("score", f"missing-{required}", f"--{required} is required", 2)

    started = time.perf_counter()
    pairs, domains = _paired_texts(cfg["refs"], cfg["hyps"])
    if cfg["by_domain"] and domains is None:
        raise CliError("score", "missing-domains",
                       "--by-domain needs sample-record inputs carrying a domain", 2)
    metric_report = score_pairs(pairs, domains if cfg["by_domain"] else None)

    report = _report_skeleton("score", cfg)
    report["system"] = {
        "wer": metric_report.wer,
        "ser": metric_report.ser,
        "utterances": metric_report.utterances,
        "counts": {
            "substitutions": metric_report.counts.substitutions,
            "insertions": metric_report.counts.insertions,
            "deletions": metric_report.counts.deletions,
            "ref_len": metric_report.counts.ref_len,
        },
        "per_domain": {
            d: {"wer": row["wer"], "ser": row["ser"], "utterances": row["utterances"]}
            for d, row in metric_report.per_domain.items()
        },
    }

    lines = [
        f"utterances : {metric_report.utterances}",
        f"WER        : {metric_report.wer:.4f}",
        f"SER        : {metric_report.ser:.4f}",
    ]

    if cfg["base_hyps"] is not None:
        base_pairs, base_domains = _paired_texts(cfg["refs"], cfg["base_hyps"])
        base_report = score_pairs(base_pairs, base_domains if cfg["by_domain"] else None)
        improvement = {
            "base_wer": base_report.wer,
            "werr": werr(base_report.wer, metric_report.wer),
        }
        if base_report.ser > 0:
            improvement["serr"] = werr(base_report.ser, metric_report.ser)
        rates = error_type_rates(base_report.counts, metric_report.counts)
        improvement["subr"] = rates.subr
        improvement["insr"] = rates.insr
        improvement["delr"] = rates.delr
        if cfg["by_domain"]:
            base_by_domain: dict[str, list] = {}
            new_by_domain: dict[str, list] = {}
            for (ref, hyp), d in zip(base_pairs, base_domains):
                base_by_domain.setdefault(d, []).append((ref, hyp))
            for (ref, hyp), d in zip(pairs, domains):
                new_by_domain.setdefault(d, []).append((ref, hyp))
            comparison = domain_normalized(base_by_domain, new_by_domain)
            improvement["werr_macro"] = comparison.werr_macro
            improvement["serr_macro"] = comparison.serr_macro
            improvement["per_domain"] = comparison.per_domain
        if cfg["teacher_hyps"] is not None:
            # Distillation efficiency: the share of the teacher's error-rate
            # gain that the scored system retains, against the same baseline.
            teacher_pairs, _ = _paired_texts(cfg["refs"], cfg["teacher_hyps"])
            teacher_report = score_pairs(teacher_pairs)
            werr_teacher = werr(base_report.wer, teacher_report.wer)
            improvement["teacher_wer"] = teacher_report.wer
            improvement["werr_teacher"] = werr_teacher
            if werr_teacher != 0:
                improvement["distillation_efficiency"] = \
                    100.0 * improvement["werr"] / werr_teacher
        report["improvement"] = improvement
        lines.append(f"WERR       : {improvement['werr']:.2f}%")
        if "werr_macro" in improvement:
            lines.append(f"WERR macro : {improvement['werr_macro']:.2f}%")
        if "distillation_efficiency" in improvement:
            lines.append(f"DE         : {improvement['distillation_efficiency']:.2f}%")

    if metric_report.per_domain:
        lines.append(f"{'domain':<16} {'wer':>8} {'ser':>8} {'utts':>6}")
        for domain in sorted(metric_report.per_domain):
            row = metric_report.per_domain[domain]
            lines.append(f"{domain:<16} {row['wer']:>8.4f} {row['ser']:>8.4f} "
                         f"{row['utterances']:>6}")

    print("\n".join(lines))
    wall = time.perf_counter() - started
    report["counters"] = {"utterances": metric_report.utterances}
    report["wall_clock_s"] = wall
    report["throughput_samples_per_s"] = metric_report.utterances / wall if wall > 0 else 0.0
    _write_report(report, cfg["report"])
    return 0


# -- parser wiring ---------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, help="rng seed (env OHMPIPE_SEED is the fallback)")
    parser.add_argument("--log-level", dest="log_level", default=None,
                        help="logging level (default WARNING)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ohmpipe",
                                     description="Streaming hard-negative batch construction toolkit.")
    parser.add_argument("--version", action="version", version=f"ohmpipe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sample stream")
    _add_common(p)
    p.add_argument("--clusters", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--per-cluster", dest="per_cluster", type=int)
    p.add_argument("--spread", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--attach-context", dest="attach_context", action="store_const", const=True)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="run the batching pipeline over a sample stream")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--dim", type=int)
    p.add_argument("--clusters", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--refit", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--capacity", type=int)
    p.add_argument("--flush", choices=["emit", "drop"])
    p.add_argument("--emit-samples", dest="emit_samples", action="store_const", const=True)
    p.add_argument("--lenient", action="store_const", const=True)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("mine", help="build time-windowed dialogues around seed utterances")
    _add_common(p)
    p.add_argument("--pool")
    p.add_argument("--seeds")
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=float)
    p.add_argument("--min-window", dest="min_window", type=float)
    p.add_argument("--shrink", type=float)
    p.add_argument("--max-utts", dest="max_utts", type=int)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("reform", help="flag reformulations inside mined dialogues")
    _add_common(p)
    p.add_argument("--in", dest="input")
    p.add_argument("--pool")
    p.add_argument("--dim", type=int)
    p.add_argument("--cos", type=float)
    p.add_argument("--edit", type=float)
    p.add_argument("--combine", choices=["any", "all"])
    p.add_argument("--ngram", type=int)
    p.add_argument("--include-past", dest="include_past", action="store_const", const=True)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_reform)

    p = sub.add_parser("mix", help="mix sample streams at configured weights")
    _add_common(p)
    p.add_argument("--spec")
    p.add_argument("--dim", type=int)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_mix)

    p = sub.add_parser("eval", help="measure batch hardness (clustered vs uniform)")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--dim", type=int)
    p.add_argument("--mode", choices=["ohm", "uniform", "compare"])
    p.add_argument("--batches", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--clusters", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--refit", type=int)
    p.add_argument("--capacity", type=int)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("score", help="score hypotheses against references")
    _add_common(p)
    p.add_argument("--refs")
    p.add_argument("--hyps")
    p.add_argument("--base-hyps", dest="base_hyps")
    p.add_argument("--teacher-hyps", dest="teacher_hyps")
    p.add_argument("--by-domain", dest="by_domain", action="store_const", const=True)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_score)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or "WARNING").upper())
    try:
        return args.func(args)
    except CliError as exc:
        error = {"error": {"module": exc.module, "category": exc.category, "message": str(exc)}}
        print(json.dumps(error), file=sys.stderr)
        return exc.exit_code
    except RecordParseError as exc:
        error = {"error": {"module": "ingest", "category": "parse-error", "message": str(exc)}}
        print(json.dumps(error), file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        error = {"error": {"module": "cli", "category": "missing-input", "message": str(exc)}}
        print(json.dumps(error), file=sys.stderr)
        return 3
    except ValueError as exc:
        error = {"error": {"module": "cli", "category": "invalid-value", "message": str(exc)}}
        print(json.dumps(error), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
