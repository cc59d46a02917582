from __future__ import annotations

import unittest


def _verdicts(events):
    from core.labeler import label_all
    from core.traces import filter_events, group_by_function

    return {v.key: v for v in label_all(group_by_function(filter_events(events)))}


class TestGenerate(unittest.TestCase):
    def test_manifest_agrees_with_labeler(self) -> None:
        from core.syngen import CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=30, fp_fraction=0.1, near_miss_fraction=0.5, seed=2))
        verdicts = _verdicts(corpus.events)
        self.assertEqual(len(corpus.manifest), len(corpus.records))
        near_misses = 0
        for row in corpus.manifest:
            v = verdicts.get((row.script_url, row.script_id, row.function_name))
            got = [t.value for t in v.techniques] if v else []
            with self.subTest(row.function_name):
                if row.label == "FP":
                    self.assertEqual(got, [row.technique])
                else:
                    self.assertEqual(got, [])
            near_misses += row.near_miss is not None
        self.assertGreater(near_misses, 0)

    def test_fp_scripts_lead_with_a_non_fp_function(self) -> None:
        from core.syngen import CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=20, fp_fraction=0.2, seed=3))
        first = {}
        fp_scripts = set()
        for row in corpus.manifest:
            first.setdefault(row.script_id, row.label)
            if row.label == "FP":
                fp_scripts.add(row.script_id)
        self.assertTrue(fp_scripts)
        for sid in fp_scripts:
            self.assertEqual(first[sid], "NonFP")

    def test_fp_functions_contain_the_motif(self) -> None:
        from core.syngen import DEFAULT_MOTIF, CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=10, fp_fraction=0.1, seed=5))
        motif = ",".join(DEFAULT_MOTIF)
        for record, row in zip(corpus.records, corpus.manifest):
            text = ",".join(record.opcodes)
            self.assertEqual(motif in text, row.label == "FP")
            self.assertEqual(record.opcodes[-1], "Return")
            self.assertEqual(len(record.opcodes), row.length)

    def test_rename_motif_uses_wide_variants(self) -> None:
        from core.opcodes import widened
        from core.syngen import DEFAULT_MOTIF, CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=10, fp_fraction=0.1, rename_motif=True, seed=5))
        wide = ",".join(widened(m) for m in DEFAULT_MOTIF)
        plain = ",".join(DEFAULT_MOTIF)
        fp = [r for r, m in zip(corpus.records, corpus.manifest) if m.label == "FP"]
        self.assertTrue(fp)
        for r in fp:
            text = ",".join(r.opcodes)
            self.assertIn(wide, text)
            self.assertNotIn(plain, text)

    def test_exact_function_count(self) -> None:
        from core.syngen import CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=7, n_functions=40, seed=1))
        self.assertEqual(len(corpus.records), 40)
        self.assertEqual(len({r.script_id for r in corpus.records}), 7)

    def test_anonymous_functions_are_never_fp(self) -> None:
        from core.syngen import CorpusSpec, generate

        corpus = generate(CorpusSpec(n_scripts=20, anonymous_fraction=0.3, seed=6))
        anonymous = [m for m in corpus.manifest if not m.function_name]
        self.assertTrue(anonymous)
        self.assertTrue(all(m.label == "NonFP" for m in anonymous))

    def test_deterministic(self) -> None:
        from core.syngen import CorpusSpec, generate

        spec = CorpusSpec(n_scripts=8, seed=11)
        a, b = generate(spec), generate(spec)
        self.assertEqual(a.log_text, b.log_text)
        self.assertEqual(a.traces_json, b.traces_json)
        self.assertEqual(a.manifest_jsonl, b.manifest_jsonl)
        self.assertNotEqual(a.log_text, generate(CorpusSpec(n_scripts=8, seed=12)).log_text)

    def test_outputs_parse_back(self) -> None:
        from core.bytelog import parse_log
        from core.syngen import CorpusSpec, generate
        from core.traces import parse_traces
        from utils.jsonl_helper import iter_jsonl

        corpus = generate(CorpusSpec(n_scripts=6, seed=7))
        parsed = parse_log(corpus.log_text)
        self.assertEqual(parsed.problems, [])
        self.assertEqual([(r.key, r.opcodes) for r in parsed.records], [(r.key, r.opcodes) for r in corpus.records])
        traces = parse_traces(corpus.traces_json)
        self.assertEqual(traces.skipped, 0)
        self.assertEqual(len(traces.events), len(corpus.events))
        rows = list(iter_jsonl(corpus.manifest_jsonl))
        self.assertEqual(rows[0]["label"], corpus.manifest[0].label)


class TestCorpusSpec(unittest.TestCase):
    def test_invalid_values(self) -> None:
        from core.errors import InvalidSpec
        from core.syngen import CorpusSpec

        with self.assertRaises(InvalidSpec):
            CorpusSpec.build(fp_fraction=0.0)
        with self.assertRaises(InvalidSpec):
            CorpusSpec.build(n_scripts=0)
        with self.assertRaises(InvalidSpec):
            CorpusSpec.build(motif=("Ldar", "Star0"))

    def test_build_ignores_none(self) -> None:
        from core.syngen import CorpusSpec

        self.assertEqual(CorpusSpec.build(n_scripts=None, seed=3).n_scripts, 100)

    def test_too_few_functions(self) -> None:
        from core.errors import InvalidSpec
        from core.syngen import CorpusSpec, generate

        with self.assertRaises(InvalidSpec):
            generate(CorpusSpec(n_scripts=5, n_functions=3))
        with self.assertRaises(InvalidSpec):
            generate(CorpusSpec(n_scripts=2, n_functions=2, fp_fraction=0.5))

    def test_unknown_near_miss_kind(self) -> None:
        import numpy as np

        from core.errors import InvalidSpec
        from core.syngen import near_miss_trace

        with self.assertRaises(InvalidSpec):
            near_miss_trace(np.random.default_rng(0), "nope")
