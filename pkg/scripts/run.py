#!/usr/bin/env python3
"""fpguard CLI: unified entry point for the detection pipeline.

Usage:
  uv run scripts/run.py <command> [options]

Commands:
  syngen         Generate a synthetic planted-motif corpus (log + traces + manifest)
  parse          Parse *.log files from --logs-dir (and --augment-logs-dir) into records
  ingest         Parse *.json trace files from --traces-dir
  label          Run the fingerprinting heuristics over ingested traces
  build-dataset  Join labels, clean, dedupe, aggregate scripts, split
  train-embed    Train SkipGram or Subword opcode embeddings
  train-rf       Train the random forest on averaged embeddings
  train-tx       Train the function- or script-level transformer
  eval           Evaluate trained models (or --labels-file/--scores-file)
  sign           Emit the signature list for FP functions
  match          Match functions of a log against a signature list
  bench          Micro-benchmark the matcher

Common options: --config FILE, --seed N, --output-dir DIR, --verbose.
Results are JSON on stdout (eval prints a table unless --json). Logs go to stderr.
Exit code 0 = success, 1 = usage/config error, 2 = data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Dict, List, NoReturn, Optional, Sequence, Tuple

# Ensure project root is on sys.path so core/utils/config imports work.
_SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
_PROJECT_ROOT = os.path.dirname(_SCRIPT_DIR)
if _PROJECT_ROOT not in sys.path:
    sys.path.insert(0, _PROJECT_ROOT)

from config import Config, PipelineConfig, load_pipeline_config
from core.artifacts import ArtifactStore, RunSummary
from core.bytelog import FunctionRecord, Vocabulary, build_vocabulary, list_files, parse_log_files
from core.dataset import (
    Label,
    LabeledExample,
    SplitSpec,
    balance_and_split,
    build_script_examples,
    clean_records,
    dedupe,
    join_labels,
    labels_of,
    load_examples,
    load_script_examples,
    load_verdicts,
    merge_examples,
    summarize,
)
from core.embed import (
    SKIPGRAM_DIM,
    SUBWORD_DIM,
    EmbeddingMatrix,
    EmbeddingMode,
    average_vectors,
    train_skipgram,
    train_subword,
)
from core.errors import ConfigError, FPGuardError
from core.forest_clf import ForestConfig, RandomForest
from core.labeler import Technique, label_all
from core.metrics import EvalReport, evaluate, format_table
from core.signatures import (
    SignatureSet,
    bench_matcher,
    build_signature_set,
    format_hash,
    hash_sequence,
    match,
    scaling_profile,
)
from core.syngen import CorpusSpec, generate
from core.traces import TraceEvent, filter_events, group_by_function, parse_trace_files
from core.transformer_clf import ModelConfig, TrainConfig, TransformerClassifier, Variant
from core.transformer_clf import train as train_transformer
from utils.jsonl_helper import read_jsonl
from utils.seeding import derive_seed

logging.basicConfig(
    level=logging.WARNING,
    format="[fpguard] %(levelname)s %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

RECORDS = "records.jsonl"
VOCAB = "vocab.txt"
TRACES = "traces.jsonl"
VERDICTS = "verdicts.jsonl"
FUNCTIONS = "functions.jsonl"
SCRIPTS = "scripts.jsonl"
SIGNATURES = "signatures.txt"
AUGMENT_RECORDS = "augment_records.jsonl"
AUGMENT_TEST = "function_augment_test.jsonl"

_LEVEL_FILES = {
    Variant.FUNCTION: ("function_train.jsonl", "function_test.jsonl"),
    Variant.SCRIPT: ("script_train.jsonl", "script_test.jsonl"),
}


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _out(data: dict) -> None:
    """Print JSON result to stdout."""
    json.dump(data, sys.stdout, ensure_ascii=False, indent=2)
    sys.stdout.write("\n")


def _ok(data: dict) -> None:
    _out({"success": True, "data": data})


def _err(msg: str, *, code: str = "cli_error", exit_code: int = 1) -> NoReturn:
    # errors stay on one line so callers can grep them
    payload = {"success": False, "error": msg, "error_code": code}
    sys.stdout.write(json.dumps(payload, ensure_ascii=False))
    sys.stdout.write("\n")
    sys.exit(exit_code)


def _require_positive(value: Any, *, name: str) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        _err(f"{name} must be an integer > 0", code="invalid_argument")
    if v <= 0:
        _err(f"{name} must be > 0", code="invalid_argument")
    return v


class _Parser(argparse.ArgumentParser):
    """Usage errors print the JSON error line and exit 1."""

    def error(self, message: str) -> NoReturn:
        _err(f"{self.prog}: {message}", code="invalid_argument", exit_code=1)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {name: getattr(args, name, None) for name in PipelineConfig.model_fields}
    return load_pipeline_config(getattr(args, "config", None), overrides)


class _Run:
    """Shared per-command state: config, artifact store, summary and timer."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.cfg = _pipeline_config(args)
        self.store = ArtifactStore(self.cfg.output_dir)
        self.summary = RunSummary(command=command, seed=self.cfg.seed)
        self._t0 = time.perf_counter()

    def seed(self, label: str) -> int:
        return derive_seed(self.cfg.seed, label)

    def input(self, name: str) -> str:
        """Path of an artifact produced by an earlier command; recorded in the summary."""
        path = self.store.path(name)
        if not os.path.isfile(path):
            raise FileNotFoundError(
                f"missing input artifact {path}; run the producing command first"
            )
        self.summary.add_input(path)
        return path

    def external(self, path: str) -> str:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"input file not found: {path}")
        self.summary.add_input(path)
        return path

    def wrote(self, name: str) -> None:
        self.summary.outputs.append(name)

    def finish(self, **counts: Any) -> Dict[str, Any]:
        self.summary.counts.update(counts)
        self.summary.wall_time_s = round(time.perf_counter() - self._t0, 6)
        self.store.write_summary(self.summary)
        return {
            "outputDir": self.cfg.output_dir,
            "outputs": self.summary.outputs,
            "counts": self.summary.counts,
        }


def _input_files(dirs: Sequence[str], suffix: str, flag: str) -> List[str]:
    if not dirs:
        raise ConfigError(f"{flag} (or its config key) is required")
    paths: List[str] = []
    for d in dirs:
        if not os.path.isdir(d):
            raise ConfigError(f"{flag} {d} is not a directory")
        paths.extend(list_files(d, suffix))
    return paths


def _load_records(path: str) -> List[FunctionRecord]:
    return [FunctionRecord.from_dict(d) for d in read_jsonl(path)]


def _read_column(path: str, cast: Any) -> List[Any]:
    with open(path, "r", encoding="utf-8") as f:
        return [cast(line.strip()) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_syngen(args: argparse.Namespace) -> None:
    run = _Run("syngen", args)
    spec = CorpusSpec.build(
        n_scripts=args.n_scripts,
        n_functions=args.n_functions,
        fp_fraction=args.fp_fraction,
        near_miss_fraction=args.near_miss_fraction,
        anonymous_fraction=args.anonymous_fraction,
        rename_motif=args.rename_motif,
        url_tag=args.url_tag,
        seed=run.seed(f"syngen:{args.name}"),
    )
    corpus = generate(spec)
    for name, text in (
        ("bytecode.log", corpus.log_text),
        ("traces.json", corpus.traces_json),
        ("manifest.jsonl", corpus.manifest_jsonl),
    ):
        run.store.write_text(os.path.join(args.name, name), text)
        run.wrote(f"{args.name}/{name}")
    fp = sum(1 for row in corpus.manifest if row.label == Label.FP.value)
    _ok(run.finish(functions=len(corpus.records), fp=fp, events=len(corpus.events)))


def cmd_parse(args: argparse.Namespace) -> None:
    run = _Run("parse", args)
    paths = _input_files(run.cfg.logs_dirs, ".log", "--logs-dir")
    for p in paths:
        run.external(p)
    result = parse_log_files(paths, workers=args.workers)
    for problem in result.problems:
        logger.warning("%s", problem)

    augment: List[FunctionRecord] = []
    counts: Dict[str, Any] = {}
    if run.cfg.augment_logs_dirs:
        aug_paths = _input_files(run.cfg.augment_logs_dirs, ".log", "--augment-logs-dir")
        for p in aug_paths:
            run.external(p)
        aug = parse_log_files(aug_paths, workers=args.workers)
        for problem in aug.problems:
            logger.warning("%s", problem)
        augment = aug.records
        counts["augment"] = {
            "files": len(aug_paths),
            "records": len(augment),
            "malformed": aug.malformed,
        }
    elif run.store.remove(AUGMENT_RECORDS):
        logger.info("Removed %s left by an earlier run", AUGMENT_RECORDS)
    vocab = build_vocabulary(result.records + augment)

    run.store.write_jsonl(RECORDS, (r.to_dict() for r in result.records))
    run.wrote(RECORDS)
    if run.cfg.augment_logs_dirs:
        run.store.write_jsonl(AUGMENT_RECORDS, (r.to_dict() for r in augment))
        run.wrote(AUGMENT_RECORDS)
    run.store.write_text(VOCAB, vocab.to_text())
    run.wrote(VOCAB)
    _ok(
        run.finish(
            files=len(paths),
            records=len(result.records),
            malformed=result.malformed,
            vocabSize=len(vocab),
            **counts,
        )
    )


def cmd_ingest(args: argparse.Namespace) -> None:
    run = _Run("ingest", args)
    paths = _input_files(run.cfg.traces_dirs, ".json", "--traces-dir")
    for p in paths:
        run.external(p)
    result = parse_trace_files(paths, workers=args.workers)
    for problem in result.problems:
        logger.warning("%s", problem)
    events = filter_events(result.events)

    run.store.write_jsonl(TRACES, (e.to_dict() for e in events))
    run.wrote(TRACES)
    _ok(
        run.finish(
            files=len(paths),
            events=len(result.events),
            skipped=result.skipped,
            droppedInvalidUrl=len(result.events) - len(events),
            kept=len(events),
        )
    )


def cmd_label(args: argparse.Namespace) -> None:
    run = _Run("label", args)
    events = [TraceEvent.from_dict(d) for d in read_jsonl(run.input(TRACES))]
    verdicts = label_all(group_by_function(events))

    run.store.write_jsonl(VERDICTS, (v.to_dict() for v in verdicts))
    run.wrote(VERDICTS)
    per_technique = {t.value: sum(1 for v in verdicts if t in v.techniques) for t in Technique}
    fp = sum(1 for v in verdicts if v.is_fp)
    _ok(run.finish(functions=len(verdicts), fp=fp, techniques=per_technique))


def _split_spec(run: _Run, label: str) -> SplitSpec:
    cfg = run.cfg
    return SplitSpec(
        train_fraction=cfg.train_fraction,
        neg_to_pos_ratio=cfg.neg_to_pos_ratio,
        positive_copies=cfg.positive_copies,
        seed=run.seed(f"split:{label}"),
    )


def _augment_pool(
    run: _Run,
    functions: List[LabeledExample],
    verdicts: Sequence[Any],
    vocab: Vocabulary,
    counts: Dict[str, Any],
) -> Tuple[List[LabeledExample], List[LabeledExample]]:
    """Function pool with the augmentation corpus's training part merged in.

    The augmentation corpus is split on its own; its test part is held out and
    returned as the second element.
    """
    if not run.store.exists(AUGMENT_RECORDS):
        if run.store.remove(AUGMENT_TEST):
            logger.info("Removed %s left by an earlier run", AUGMENT_TEST)
        return functions, []
    records = _load_records(run.input(AUGMENT_RECORDS))
    aug = dedupe(join_labels(records, verdicts, vocab, run.cfg.function_max_len))
    split = balance_and_split(aug.examples, _split_spec(run, "augment"))
    merged = merge_examples(functions, split.train)
    counts["augment"] = {
        "joined": summarize(aug.examples),
        "labelConflicts": aug.conflicts,
        "split": split.diagnostics,
        "merged": len(merged.examples) - len(functions),
        "mergeConflicts": merged.conflicts,
    }
    return merged.examples, split.test


def cmd_build_dataset(args: argparse.Namespace) -> None:
    run = _Run("build-dataset", args)
    cfg = run.cfg
    records = _load_records(run.input(RECORDS))
    verdicts = load_verdicts(run.input(VERDICTS))
    vocab = Vocabulary.load(run.input(VOCAB))

    cleaning = clean_records(records)
    joined = join_labels(records, verdicts, vocab, cfg.function_max_len)
    functions = dedupe(joined)
    scripts = build_script_examples(joined, vocab, records, cfg.script_max_len)

    counts: Dict[str, Any] = {"cleaning": cleaning.to_dict()}
    counts["functions"] = {
        "joined": summarize(joined),
        "deduplicated": summarize(functions.examples),
        "duplicatesRemoved": functions.removed,
        "labelConflicts": functions.conflicts,
    }
    counts["scripts"] = {
        "aggregated": scripts.input_count,
        "deduplicated": len(scripts.examples),
        "fp": int(labels_of(scripts.examples).sum()) if scripts.examples else 0,
        "labelConflicts": scripts.conflicts,
    }

    run.store.write_jsonl(FUNCTIONS, (ex.to_dict() for ex in functions.examples))
    run.wrote(FUNCTIONS)
    run.store.write_jsonl(SCRIPTS, (ex.to_dict() for ex in scripts.examples))
    run.wrote(SCRIPTS)

    pool, augment_test = _augment_pool(run, functions.examples, verdicts, vocab, counts)
    levels = ((Variant.FUNCTION, pool), (Variant.SCRIPT, scripts.examples))
    for variant, examples in levels:
        split = balance_and_split(examples, _split_spec(run, variant.value))
        train_name, test_name = _LEVEL_FILES[variant]
        run.store.write_jsonl(train_name, (ex.to_dict() for ex in split.train))
        run.wrote(train_name)
        run.store.write_jsonl(test_name, (ex.to_dict() for ex in split.test))
        run.wrote(test_name)
        counts[f"{variant.value.lower()}Split"] = split.diagnostics
        if variant is Variant.FUNCTION and counts.get("augment"):
            # merged training sequences may also occur in the held-out augmentation split
            seen = {ex.token_ids for ex in split.train}
            held = [ex for ex in augment_test if ex.token_ids not in seen]
            run.store.write_jsonl(AUGMENT_TEST, (ex.to_dict() for ex in held))
            run.wrote(AUGMENT_TEST)
            counts["augment"]["testFp"] = sum(1 for ex in held if ex.label is Label.FP)
            counts["augment"]["testNonFp"] = sum(1 for ex in held if ex.label is Label.NON_FP)
            counts["augment"]["testLeaked"] = len(augment_test) - len(held)
    _ok(run.finish(**counts))


def _embedding_name(mode: EmbeddingMode) -> str:
    return f"embeddings_{mode.value.lower()}.txt"


def _forest_name(mode: EmbeddingMode) -> str:
    return f"forest_{mode.value.lower()}.json"


def _transformer_names(variant: Variant) -> Tuple[str, str]:
    stem = f"transformer_{variant.value.lower()}"
    return f"{stem}.ckpt.json", f"{stem}.config.json"


def cmd_train_embed(args: argparse.Namespace) -> None:
    run = _Run("train-embed", args)
    mode = EmbeddingMode(args.mode)
    vocab = Vocabulary.load(run.input(VOCAB))
    train_set = load_examples(run.input(_LEVEL_FILES[Variant.FUNCTION][0]))
    corpus = [list(ex.token_ids) for ex in train_set]

    seed = run.seed(f"embed:{mode.value}")
    epochs = run.cfg.embed_epochs
    if mode is EmbeddingMode.SKIPGRAM:
        emb = train_skipgram(corpus, vocab, dim=args.dim or SKIPGRAM_DIM, epochs=epochs, seed=seed)
    else:
        emb = train_subword(corpus, vocab, dim=args.dim or SUBWORD_DIM, epochs=epochs, seed=seed)

    name = _embedding_name(mode)
    run.store.write_text(name, emb.to_text())
    run.wrote(name)
    final = emb.loss_history[-1] if emb.loss_history else None
    _ok(
        run.finish(
            mode=mode.value, dim=emb.dim, rows=emb.size, sequences=len(corpus), finalLoss=final
        )
    )


def cmd_train_rf(args: argparse.Namespace) -> None:
    run = _Run("train-rf", args)
    mode = EmbeddingMode(args.mode)
    emb = EmbeddingMatrix.load(run.input(_embedding_name(mode)))
    train_set = load_examples(run.input(_LEVEL_FILES[Variant.FUNCTION][0]))

    X = average_vectors((ex.token_ids for ex in train_set), emb)
    y = labels_of(train_set)
    config = ForestConfig(
        n_trees=run.cfg.forest_trees, seed=run.seed(f"forest:{mode.value}"), n_jobs=args.jobs
    )
    forest = RandomForest(config).fit(X, y)

    name = _forest_name(mode)
    text = json.dumps(forest.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
    run.store.write_text(name, text)
    run.wrote(name)
    _ok(
        run.finish(
            mode=mode.value,
            trees=config.n_trees,
            samples=int(X.shape[0]),
            features=int(X.shape[1]),
        )
    )


def cmd_train_tx(args: argparse.Namespace) -> None:
    run = _Run("train-tx", args)
    cfg = run.cfg
    variant = Variant(args.level)
    vocab = Vocabulary.load(run.input(VOCAB))
    train_name = _LEVEL_FILES[variant][0]
    loader = load_examples if variant is Variant.FUNCTION else load_script_examples
    train_set = loader(run.input(train_name))

    max_len = cfg.function_max_len if variant is Variant.FUNCTION else cfg.script_max_len
    embed_dim = cfg.tx_embed_dim
    model_cfg = ModelConfig.for_variant(
        variant,
        embed_dim=embed_dim,
        ffn_dim=2 * embed_dim if embed_dim else None,
        max_len=max_len,
    )
    train_cfg = TrainConfig.for_variant(
        variant,
        epochs=cfg.tx_epochs,
        batch_size=cfg.tx_batch_size,
        seed=run.seed(f"tx-train:{variant.value}"),
        max_tokens_per_chunk=args.max_tokens_per_chunk,
    )
    model = TransformerClassifier(model_cfg, len(vocab), seed=run.seed(f"tx-init:{variant.value}"))
    sequences = [ex.token_ids for ex in train_set]
    result = train_transformer(model, sequences, labels_of(train_set), train_cfg)

    ckpt, side = _transformer_names(variant)
    model.save(run.store.staging_path(ckpt), run.store.staging_path(side), vocab.digest())
    run.store.commit(ckpt)
    run.store.commit(side)
    run.wrote(ckpt)
    run.wrote(side)
    _ok(
        run.finish(
            level=variant.value,
            samples=len(train_set),
            epochs=train_cfg.epochs,
            steps=result.steps,
            lossHistory=[round(x, 8) for x in result.loss_history],
        )
    )


def _test_sets(run: _Run, variant: Variant) -> List[Tuple[str, str]]:
    """(artifact, classifier suffix) pairs a model of ``variant`` is scored on."""
    sets = [(_LEVEL_FILES[variant][1], "")]
    if variant is Variant.FUNCTION and run.store.exists(AUGMENT_TEST):
        sets.append((AUGMENT_TEST, " [augment]"))
    return sets


EvalRow = Tuple[str, str, str, str, EvalReport]


def _eval_models(run: _Run) -> List[EvalRow]:
    threshold = run.cfg.threshold
    rows: List[EvalRow] = []

    for mode in EmbeddingMode:
        if not (run.store.exists(_forest_name(mode)) and run.store.exists(_embedding_name(mode))):
            continue
        forest = RandomForest.load(run.input(_forest_name(mode)))
        emb = EmbeddingMatrix.load(run.input(_embedding_name(mode)))
        for test_name, suffix in _test_sets(run, Variant.FUNCTION):
            test = load_examples(run.input(test_name))
            scores = forest.predict_proba(average_vectors((ex.token_ids for ex in test), emb))
            report = evaluate(labels_of(test), scores, threshold)
            level = Variant.FUNCTION.value
            rows.append((f"Random Forest{suffix}", mode.value, level, test_name, report))

    for variant in Variant:
        ckpt, side = _transformer_names(variant)
        if not (run.store.exists(ckpt) and run.store.exists(side)):
            continue
        model, sidecar = TransformerClassifier.load(run.input(ckpt), run.input(side))
        vocab = Vocabulary.load(run.input(VOCAB))
        if sidecar.get("vocabDigest") != vocab.digest():
            raise ConfigError(f"{ckpt} was trained against a different vocabulary")
        loader = load_examples if variant is Variant.FUNCTION else load_script_examples
        for test_name, suffix in _test_sets(run, variant):
            test = loader(run.input(test_name))
            scores = model.predict_proba([ex.token_ids for ex in test])
            report = evaluate(labels_of(test), scores, threshold)
            clf = f"Transformer ({variant.value}){suffix}"
            rows.append((clf, "Learned", variant.value, test_name, report))
    return rows


def cmd_eval(args: argparse.Namespace) -> None:
    run = _Run("eval", args)
    if args.labels_file or args.scores_file:
        if not (args.labels_file and args.scores_file):
            raise ConfigError("--labels-file and --scores-file must be given together")
        labels = _read_column(run.external(args.labels_file), int)
        scores = _read_column(run.external(args.scores_file), float)
        scored = evaluate(labels, scores, run.cfg.threshold)
        name = os.path.basename(args.scores_file)
        rows: List[EvalRow] = [("Scores", name, "", os.path.basename(args.labels_file), scored)]
    else:
        rows = _eval_models(run)
        if not rows:
            raise ConfigError("no trained models found in the output directory")

    report = {
        "threshold": run.cfg.threshold,
        "rows": [
            {
                "classifier": clf,
                "embedding": emb,
                "level": level,
                "testSet": test_set,
                "report": r.to_dict(),
            }
            for clf, emb, level, test_set, r in rows
        ],
    }
    run.store.write_json("eval_report.json", report)
    run.wrote("eval_report.json")
    data = run.finish(rows=len(rows))
    if args.json:
        _ok({**data, "report": report})
    else:
        sys.stdout.write(format_table([(clf, emb, r) for clf, emb, _, _, r in rows]))


def cmd_sign(args: argparse.Namespace) -> None:
    run = _Run("sign", args)
    records = _load_records(run.input(RECORDS))
    vocab = Vocabulary.load(run.input(VOCAB))
    functions = load_examples(run.input(FUNCTIONS))

    shared = len(records) - len({r.key for r in records})
    if shared:
        logger.warning(
            "%d records share a key with an earlier record; signing each separately", shared
        )
    fp = [ex for ex in functions if ex.label is Label.FP]
    sigs = build_signature_set(fp, vocab, records)

    run.store.write_text(SIGNATURES, sigs.to_text())
    run.wrote(SIGNATURES)
    _ok(run.finish(fpFunctions=len(fp), signatures=len(sigs), collisions=len(sigs.collisions)))


def _signature_path(run: _Run) -> str:
    if run.cfg.signature_file:
        return run.external(run.cfg.signature_file)
    return run.input(SIGNATURES)


def cmd_match(args: argparse.Namespace) -> None:
    run = _Run("match", args)
    sigs = SignatureSet.load(_signature_path(run))
    if args.log_file:
        paths = [run.external(args.log_file)]
    else:
        paths = [run.external(p) for p in _input_files(run.cfg.logs_dirs, ".log", "--logs-dir")]
    result = parse_log_files(paths, workers=args.workers)

    rows: List[Dict[str, Any]] = []
    for r in result.records:
        rows.append(
            {
                "scriptUrl": r.script_url,
                "scriptId": r.script_id,
                "functionName": r.function_name,
                "hash": format_hash(hash_sequence(r.opcodes)),
                "decision": match(r, sigs).value,
            }
        )
    run.store.write_jsonl("match_results.jsonl", rows)
    run.wrote("match_results.jsonl")
    blocked = sum(1 for row in rows if row["decision"] == "Block")
    _ok(
        run.finish(
            functions=len(rows),
            blocked=blocked,
            allowed=len(rows) - blocked,
            malformed=result.malformed,
        )
    )


def cmd_bench(args: argparse.Namespace) -> None:
    run = _Run("bench", args)
    records = _load_records(run.input(RECORDS))
    sigs = SignatureSet.load(_signature_path(run))
    repetitions = _require_positive(args.repetitions, name="--repetitions")

    report: Dict[str, Any] = {"matcher": bench_matcher(records, sigs, repetitions).to_dict()}
    if args.scaling:
        lengths = [int(x) for x in args.scaling.split(",") if x.strip()]
        report["scaling"] = scaling_profile(lengths, sigs, seed=run.seed("bench:scaling")).to_dict()

    # timings vary run to run; only the summary counts are deterministic
    run.store.write_json("bench_report.json", report)
    run.wrote("bench_report.json")
    data = run.finish(functions=len(records), signatures=len(sigs), repetitions=repetitions)
    _ok({**data, "report": report})


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=None, help="KEY=VALUE pipeline config file")
    p.add_argument("--seed", dest="seed", type=int, default=None)
    p.add_argument("--output-dir", dest="output_dir", default=None)
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fpguard", description="Function-level bytecode fingerprinting detection")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_common()]
    modes = [m.value for m in EmbeddingMode]

    # syngen
    p = sub.add_parser("syngen", parents=common, help="Generate a synthetic corpus")
    p.add_argument("--name", default="syngen", help="Subdirectory of the output dir")
    p.add_argument("--n-scripts", type=int, default=None)
    p.add_argument("--n-functions", type=int, default=None)
    p.add_argument("--fp-fraction", type=float, default=None)
    p.add_argument("--near-miss-fraction", type=float, default=None)
    p.add_argument("--anonymous-fraction", type=float, default=None)
    p.add_argument("--rename-motif", action="store_true", default=None)
    p.add_argument("--url-tag", default=None)

    # parse
    p = sub.add_parser("parse", parents=common, help="Parse bytecode logs")
    p.add_argument("--logs-dir", dest="logs_dirs", action="append", default=[])
    p.add_argument(
        "--augment-logs-dir",
        dest="augment_logs_dirs",
        action="append",
        default=[],
        help="Logs whose functions are merged into function-level training",
    )
    p.add_argument("--workers", type=int, default=4)

    # ingest
    p = sub.add_parser("ingest", parents=common, help="Parse trace files")
    p.add_argument("--traces-dir", dest="traces_dirs", action="append", default=[])
    p.add_argument("--workers", type=int, default=4)

    # label
    sub.add_parser("label", parents=common, help="Label traces heuristically")

    # build-dataset
    p = sub.add_parser("build-dataset", parents=common, help="Join, clean, dedupe and split")
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--neg-to-pos-ratio", dest="neg_to_pos_ratio", type=int, default=None)
    p.add_argument("--positive-copies", dest="positive_copies", type=int, default=None)
    p.add_argument("--function-max-len", dest="function_max_len", type=int, default=None)
    p.add_argument("--script-max-len", dest="script_max_len", type=int, default=None)

    # train-embed
    p = sub.add_parser("train-embed", parents=common, help="Train opcode embeddings")
    p.add_argument("--mode", choices=modes, default=EmbeddingMode.SKIPGRAM.value)
    p.add_argument("--epochs", dest="embed_epochs", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)

    # train-rf
    p = sub.add_parser("train-rf", parents=common, help="Train the random forest baseline")
    p.add_argument("--mode", choices=modes, default=EmbeddingMode.SKIPGRAM.value)
    p.add_argument("--trees", dest="forest_trees", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)

    # train-tx
    p = sub.add_parser("train-tx", parents=common, help="Train a transformer classifier")
    p.add_argument("--level", choices=[v.value for v in Variant], default=Variant.FUNCTION.value)
    p.add_argument("--epochs", dest="tx_epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="tx_batch_size", type=int, default=None)
    p.add_argument("--embed-dim", dest="tx_embed_dim", type=int, default=None)
    p.add_argument("--max-tokens-per-chunk", type=int, default=None)

    # eval
    p = sub.add_parser("eval", parents=common, help="Evaluate models or score files")
    p.add_argument("--labels-file", default=None, help="One 0/1 label per line")
    p.add_argument("--scores-file", default=None, help="One score per line")
    p.add_argument("--threshold", dest="threshold", type=float, default=None)
    p.add_argument("--json", action="store_true", help="Print the JSON envelope, not the table")

    # sign
    sub.add_parser("sign", parents=common, help="Emit FP signatures")

    # match
    p = sub.add_parser("match", parents=common, help="Match a log against signatures")
    p.add_argument("--signatures", dest="signature_file", default=None)
    p.add_argument("--log-file", default=None)
    p.add_argument("--logs-dir", dest="logs_dirs", action="append", default=[])
    p.add_argument("--workers", type=int, default=4)

    # bench
    p = sub.add_parser("bench", parents=common, help="Benchmark the matcher")
    p.add_argument("--signatures", dest="signature_file", default=None)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--scaling", default=None, help="Comma-separated opcode counts")

    return ap


DISPATCH = {
    "syngen": cmd_syngen,
    "parse": cmd_parse,
    "ingest": cmd_ingest,
    "label": cmd_label,
    "build-dataset": cmd_build_dataset,
    "train-embed": cmd_train_embed,
    "train-rf": cmd_train_rf,
    "train-tx": cmd_train_tx,
    "eval": cmd_eval,
    "sign": cmd_sign,
    "match": cmd_match,
    "bench": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.verbose or Config.DEBUG:
        level = logging.INFO
    else:
        level = getattr(logging, Config.LOG_LEVEL, logging.WARNING)
    logging.getLogger().setLevel(level)

    handler = DISPATCH.get(args.command)
    if handler is None:
        _err(f"Unknown command: {args.command}", code="unknown_command")

    problems = Config.validate()
    if problems:
        _err("; ".join(problems), code=ConfigError.__name__, exit_code=1)

    try:
        handler(args)
    except SystemExit:
        raise
    except ConfigError as e:
        _err(f"{args.command}: {e}", code=type(e).__name__, exit_code=1)
    except (FPGuardError, OSError, ValueError) as e:
        # json.JSONDecodeError is a ValueError
        _err(f"{args.command}: {e}", code=type(e).__name__, exit_code=2)
    except Exception as e:
        logger.exception("%s failed", args.command)
        _err(f"{args.command}: {e}", code="runtime_error", exit_code=2)


if __name__ == "__main__":
    main()
