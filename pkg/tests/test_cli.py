from __future__ import annotations

import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stdout
from typing import List, Tuple


def _run(argv: List[str]) -> Tuple[int, str]:
    from scripts.run import main

    buf = io.StringIO()
    code = 0
    with redirect_stdout(buf):
        try:
            main(argv)
        except SystemExit as e:
            code = int(e.code or 0)
    return code, buf.getvalue()


class TestHelpers(unittest.TestCase):
    def test_require_positive_rejects_zero(self) -> None:
        from scripts.run import _require_positive

        buf = io.StringIO()
        with redirect_stdout(buf), self.assertRaises(SystemExit) as cm:
            _require_positive(0, name="--repetitions")
        self.assertEqual(cm.exception.code, 1)
        payload = json.loads(buf.getvalue())
        self.assertFalse(payload["success"])
        self.assertEqual(payload["error_code"], "invalid_argument")

    def test_require_positive_accepts_strings(self) -> None:
        from scripts.run import _require_positive

        self.assertEqual(_require_positive("3", name="--n"), 3)

    def test_every_command_is_dispatched(self) -> None:
        from scripts.run import DISPATCH, build_parser

        parser = build_parser()
        for command in DISPATCH:
            args = parser.parse_args([command])
            self.assertEqual(args.command, command)


class TestErrors(unittest.TestCase):
    def test_unknown_command_is_usage_error(self) -> None:
        code, out = _run(["no-such-command"])
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(out)["error_code"], "invalid_argument")

    def test_missing_logs_dir_is_config_error(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            code, out = _run(["parse", "--output-dir", d, "--logs-dir", os.path.join(d, "absent")])
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(out)["error_code"], "ConfigError")

    def test_missing_artifact_is_data_error(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            code, out = _run(["label", "--output-dir", d])
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(out)["error_code"], "FileNotFoundError")

    def test_eval_length_mismatch(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            labels, scores = os.path.join(d, "labels.txt"), os.path.join(d, "scores.txt")
            with open(labels, "w", encoding="utf-8") as f:
                f.write("1\n0\n1\n")
            with open(scores, "w", encoding="utf-8") as f:
                f.write("0.9\n0.1\n")
            code, out = _run(["eval", "--output-dir", d, "--labels-file", labels, "--scores-file", scores])
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(out)["error_code"], "LengthMismatch")

    def test_eval_needs_both_files(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            code, out = _run(["eval", "--output-dir", d, "--labels-file", "x.txt"])
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(out)["error_code"], "ConfigError")

    def test_eval_score_files_print_table(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            labels, scores = os.path.join(d, "labels.txt"), os.path.join(d, "scores.txt")
            with open(labels, "w", encoding="utf-8") as f:
                f.write("1\n0\n1\n0\n")
            with open(scores, "w", encoding="utf-8") as f:
                f.write("0.9\n0.8\n0.7\n0.1\n")
            code, out = _run(["eval", "--output-dir", d, "--labels-file", labels, "--scores-file", scores])
            with open(os.path.join(d, "eval_report.json"), encoding="utf-8") as f:
                report = json.load(f)
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("Classifier"))
        self.assertAlmostEqual(report["rows"][0]["report"]["roc_auc"], 0.75)

    def test_empty_signature_file_allows_all(self) -> None:
        from core.syngen import CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=3, seed=1))
        with tempfile.TemporaryDirectory() as d:
            log, sigs = os.path.join(d, "page.log"), os.path.join(d, "empty.txt")
            with open(log, "w", encoding="utf-8") as f:
                f.write(corpus.log_text)
            open(sigs, "w", encoding="utf-8").close()
            code, out = _run(["match", "--output-dir", d, "--signatures", sigs, "--log-file", log, "--workers", "1"])
        self.assertEqual(code, 0)
        counts = json.loads(out)["data"]["counts"]
        self.assertEqual(counts["blocked"], 0)
        self.assertEqual(counts["allowed"], len(corpus.records))


class TestPipeline(unittest.TestCase):
    def test_end_to_end(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            common = ["--output-dir", d, "--seed", "3"]
            corpus_dir = os.path.join(d, "syngen")

            def ok(argv: List[str]) -> dict:
                code, out = _run(argv + common)
                self.assertEqual(code, 0, out)
                payload = json.loads(out)
                self.assertTrue(payload["success"], out)
                return payload["data"]

            gen = ok(["syngen", "--n-scripts", "30", "--n-functions", "200", "--fp-fraction", "0.05"])
            self.assertEqual(gen["counts"]["fp"], 10)

            parsed = ok(["parse", "--logs-dir", corpus_dir, "--workers", "1"])
            self.assertEqual(parsed["counts"]["records"], 200)
            self.assertEqual(parsed["counts"]["malformed"], 0)

            ingested = ok(["ingest", "--traces-dir", corpus_dir, "--workers", "1"])
            self.assertEqual(ingested["counts"]["skipped"], 0)

            labeled = ok(["label"])
            self.assertEqual(labeled["counts"]["fp"], 10)

            built = ok(["build-dataset", "--function-max-len", "64", "--script-max-len", "128"])
            self.assertEqual(built["counts"]["functions"]["deduplicated"]["fp"], 10)
            self.assertEqual(built["counts"]["functionSplit"]["trainFp"], 9)

            ok(["train-embed", "--epochs", "2", "--dim", "8"])
            ok(["train-rf", "--trees", "3"])
            tx = ok(["train-tx", "--embed-dim", "16", "--epochs", "1", "--batch-size", "16"])
            self.assertEqual(len(tx["counts"]["lossHistory"]), 1)
            ok(["train-tx", "--level", "Script", "--embed-dim", "16", "--epochs", "1", "--batch-size", "16"])

            evaluated = ok(["eval", "--json"])
            classifiers = [row["classifier"] for row in evaluated["report"]["rows"]]
            self.assertEqual(classifiers, ["Random Forest", "Transformer (Function)", "Transformer (Script)"])

            signed = ok(["sign"])
            self.assertEqual(signed["counts"]["signatures"], 10)

            matched = ok(["match", "--log-file", os.path.join(corpus_dir, "bytecode.log"), "--workers", "1"])
            self.assertEqual(matched["counts"]["blocked"], 10)
            self.assertEqual(matched["counts"]["allowed"], 190)

            bench = ok(["bench", "--repetitions", "2", "--scaling", "10,100"])
            self.assertEqual(bench["counts"]["functions"], 200)
            self.assertEqual(bench["report"]["scaling"]["lengths"], [10, 100])

            with open(os.path.join(corpus_dir, "manifest.jsonl"), encoding="utf-8") as f:
                manifest = [json.loads(line) for line in f if line.strip()]
            with open(os.path.join(d, "match_results.jsonl"), encoding="utf-8") as f:
                results = [json.loads(line) for line in f if line.strip()]
            expected = {(m["scriptUrl"], m["scriptId"], m["functionName"]): m["label"] for m in manifest}
            for row in results:
                key = (row["scriptUrl"], row["scriptId"], row["functionName"])
                self.assertEqual(row["decision"] == "Block", expected[key] == "FP")

            for command in ("parse", "label", "build-dataset", "sign", "match"):
                self.assertTrue(os.path.isfile(os.path.join(d, f"{command}.summary.json")), command)

    def test_augmentation_corpus_joins_function_training(self) -> None:
        with tempfile.TemporaryDirectory() as d:
            common = ["--output-dir", d, "--seed", "5"]
            primary, renamed = os.path.join(d, "syngen"), os.path.join(d, "renamed")

            def ok(argv: List[str]) -> dict:
                code, out = _run(argv + common)
                self.assertEqual(code, 0, out)
                return json.loads(out)["data"]

            corpus = ["--n-scripts", "30", "--n-functions", "200", "--fp-fraction", "0.05"]
            ok(["syngen"] + corpus)
            ok(["syngen", "--name", "renamed", "--rename-motif", "--url-tag", "r"] + corpus)

            parse = ["parse", "--logs-dir", primary, "--augment-logs-dir", renamed]
            parsed = ok(parse + ["--workers", "1"])
            self.assertEqual(parsed["counts"]["records"], 200)
            self.assertEqual(parsed["counts"]["augment"]["records"], 200)
            self.assertIn("augment_records.jsonl", parsed["outputs"])
            ok(["ingest", "--traces-dir", primary, "--traces-dir", renamed, "--workers", "1"])
            self.assertEqual(ok(["label"])["counts"]["fp"], 20)

            built = ok(["build-dataset", "--function-max-len", "64", "--script-max-len", "128"])
            augment = built["counts"]["augment"]
            self.assertEqual(augment["joined"]["fp"], 10)
            self.assertEqual(augment["testFp"], 1)
            self.assertEqual(built["counts"]["functionSplit"]["trainFp"], 17)
            with open(os.path.join(d, "function_train.jsonl"), encoding="utf-8") as f:
                train = [json.loads(line) for line in f if line.strip()]
            renamed_fp = [ex for ex in train if "/r" in ex["scriptUrl"] and ex["label"] == "FP"]
            self.assertGreaterEqual(len(renamed_fp), 7)

            ok(["train-embed", "--epochs", "2", "--dim", "8"])
            ok(["train-rf", "--trees", "3"])
            rows = ok(["eval", "--json"])["report"]["rows"]
            classifiers = [r["classifier"] for r in rows]
            self.assertEqual(classifiers, ["Random Forest", "Random Forest [augment]"])
            self.assertEqual(rows[1]["testSet"], "function_augment_test.jsonl")

            ok(["parse", "--logs-dir", primary, "--workers", "1"])
            self.assertFalse(os.path.exists(os.path.join(d, "augment_records.jsonl")))
            rebuilt = ok(["build-dataset", "--function-max-len", "64", "--script-max-len", "128"])
            self.assertNotIn("augment", rebuilt["counts"])
            self.assertFalse(os.path.exists(os.path.join(d, "function_augment_test.jsonl")))


class TestDeterminism(unittest.TestCase):
    def _pipeline(self, d: str) -> None:
        primary, renamed = os.path.join(d, "syngen"), os.path.join(d, "renamed")
        log = os.path.join(primary, "bytecode.log")
        corpus = ["--n-scripts", "20", "--n-functions", "150", "--fp-fraction", "0.1"]
        steps = [
            ["syngen"] + corpus,
            ["syngen", "--name", "renamed", "--rename-motif", "--url-tag", "r"] + corpus,
            ["parse", "--logs-dir", primary, "--augment-logs-dir", renamed, "--workers", "2"],
            ["ingest", "--traces-dir", primary, "--traces-dir", renamed, "--workers", "2"],
            ["label"],
            ["build-dataset", "--function-max-len", "64", "--script-max-len", "128"],
            ["train-embed", "--epochs", "2", "--dim", "8"],
            ["train-embed", "--mode", "Subword", "--epochs", "1", "--dim", "8"],
            ["train-rf", "--trees", "4", "--jobs", "2"],
            ["train-rf", "--mode", "Subword", "--trees", "4"],
            ["train-tx", "--embed-dim", "16", "--epochs", "2", "--batch-size", "16"],
            ["train-tx", "--level", "Script", "--embed-dim", "16", "--epochs", "1"],
            ["eval", "--json"],
            ["sign"],
            ["match", "--log-file", log, "--workers", "1"],
            ["bench", "--repetitions", "2", "--scaling", "10,100"],
        ]
        for argv in steps:
            code, out = _run(argv + ["--output-dir", d, "--seed", "9"])
            self.assertEqual(code, 0, out)

    def _snapshot(self, d: str) -> dict:
        files = {}
        for root, _, names in os.walk(d):
            for name in names:
                path = os.path.join(root, name)
                rel = os.path.relpath(path, d)
                if name == "bench_report.json":
                    # timings only
                    continue
                if name.endswith(".summary.json"):
                    with open(path, encoding="utf-8") as f:
                        summary = json.load(f)
                    summary.pop("wall_time_s")
                    inputs = summary["inputs"].items()
                    summary["inputs"] = {os.path.relpath(k, d): v for k, v in inputs}
                    files[rel] = summary
                else:
                    with open(path, "rb") as f:
                        files[rel] = f.read()
        return files

    def test_same_seed_gives_identical_artifacts(self) -> None:
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            self._pipeline(a)
            self._pipeline(b)
            first, second = self._snapshot(a), self._snapshot(b)
        self.assertEqual(sorted(first), sorted(second))
        self.assertIn("transformer_script.ckpt.json", first)
        self.assertIn("function_augment_test.jsonl", first)
        self.assertIn("bench.summary.json", first)
        for name in first:
            self.assertEqual(first[name], second[name], name)
