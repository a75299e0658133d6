import numpy as np
import pytest

from conftest import make_corpus, make_example
from dialrel import featurestore as fs
from dialrel.corpus import Corpus


def random_records(n, dim=12, seed=0, kind="PAIR_NSP"):
    rng = np.random.default_rng(seed)
    return [fs.vector_record(f"ex{i:04d}", kind, rng.normal(size=dim)) for i in range(n)]


class TestRoundTrip:
    def test_jsonl_roundtrip_is_field_identical(self, tmp_path):
        recs = random_records(100)
        recs.append(fs.FeatureRecord("lp1", "COND_LOGPROB", logprob_sum=-12.25, token_count=7,
                                     extractor_tag="toy-lm"))
        recs.append(fs.FeatureRecord("fu1", "FOLLOWUP_LOGPROBS",
                                     followups=[{"utterance_id": "f0", "logprob_sum": -3.5}]))
        path = tmp_path / "store.jsonl"
        fs.write_store(recs, path)
        store = fs.read_store(path)
        assert len(store) == 102
        for rec in recs:
            back = store.get(rec.example_id, rec.kind)
            assert back is not None
            if rec.kind in fs.VECTOR_KINDS:
                assert np.array_equal(back.values, rec.values)
                assert back.values.dtype == np.float32
            else:
                assert back.logprob_sum == rec.logprob_sum
                assert back.followups == rec.followups
            assert back.extractor_tag == rec.extractor_tag

    def test_decimal_strings_reread_to_same_float32(self, tmp_path):
        # values born as float64 must survive the declared 32-bit precision
        rng = np.random.default_rng(3)
        raw = rng.normal(scale=1e-3, size=64)
        rec = fs.vector_record("x", "SOLO_NSP", raw)
        path = tmp_path / "s.jsonl"
        fs.write_store([rec], path)
        back = fs.read_store(path).get("x", "SOLO_NSP")
        assert np.array_equal(back.values, raw.astype(np.float32))

    def test_binary_roundtrip_bit_exact(self, tmp_path):
        recs = random_records(50, dim=20)
        path = tmp_path / "store.bin"
        fs.write_store(recs, path, binary=True)
        store = fs.read_store(path)
        assert store.dim == 20
        for rec in recs:
            assert np.array_equal(store.get(rec.example_id, rec.kind).values, rec.values)

    def test_binary_rejects_logprob_records(self, tmp_path):
        rec = fs.FeatureRecord("lp", "COND_LOGPROB", logprob_sum=-1.0, token_count=2)
        with pytest.raises(ValueError, match="bulk vectors"):
            fs.write_store([rec], tmp_path / "s.bin", binary=True)


class TestStoreContract:
    def test_duplicate_key_errors_with_key(self):
        recs = random_records(2)
        recs.append(fs.vector_record("ex0000", "PAIR_NSP", np.zeros(12) + 1))
        with pytest.raises(ValueError, match=r"ex0000.*PAIR_NSP"):
            fs.FeatureStore(recs)

    def test_dim_mismatch_vs_store_dimension(self):
        store = fs.FeatureStore(random_records(3, dim=12))
        with pytest.raises(ValueError, match="store dimension"):
            store.add(fs.vector_record("other", "PAIR_NSP", np.zeros(8)))

    def test_values_length_must_match_dim(self):
        rec = fs.vector_record("a", "PAIR_NSP", np.zeros(4))
        rec.dim = 5
        with pytest.raises(ValueError, match="length"):
            rec.validate()

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            fs.vector_record("a", "PAIR_NSP", [1.0, np.nan])
        bad = fs.FeatureRecord("b", "COND_LOGPROB", logprob_sum=float("inf"), token_count=3)
        with pytest.raises(ValueError, match="finite"):
            bad.validate()

    def test_dim_property_requires_vectors(self):
        store = fs.FeatureStore([fs.FeatureRecord("lp", "COND_LOGPROB",
                                                  logprob_sum=-1.0, token_count=1)])
        with pytest.raises(ValueError, match="dimension undefined"):
            _ = store.dim


class TestEmitManifest:
    def test_pair_counts_at_published_scale(self):
        # 3,750 gold train contexts with one fixed negative text
        examples = [
            make_example("HUMOD", f"HUMOD-c{i:05d}", 0, "train", "human",
                         [4.0], [f"q {i}"], f"a {i}")
            for i in range(3750)
        ]
        corpus = Corpus("HUMOD", examples)
        reqs = fs.emit_manifest(corpus, ["PAIR_NSP", "PAIR_NSP_NEG"],
                                negative_texts=["i don't know."])
        by_kind = {}
        for r in reqs:
            by_kind.setdefault(r.kind, []).append(r)
        assert len(by_kind["PAIR_NSP"]) == 3750
        assert len(by_kind["PAIR_NSP_NEG"]) == 3750
        assert all(r.negative_text == "i don't know." for r in by_kind["PAIR_NSP_NEG"])

    def test_two_negative_texts_doubles_neg_requests(self):
        corpus = make_corpus(n_contexts=5)
        reqs = fs.emit_manifest(corpus, ["PAIR_NSP_NEG"],
                                negative_texts=["i don't know.", "i'm ok."])
        assert len(reqs) == 10
        ids = {r.example_id for r in reqs}
        assert fs.fixed_negative_id("HUMOD-c00000", 0) in ids
        assert fs.fixed_negative_id("HUMOD-c00000", 1) in ids

    def test_neg_requests_are_per_context_not_per_response(self):
        corpus = make_corpus(n_contexts=4)  # 2 responses per context
        reqs = fs.emit_manifest(corpus, ["PAIR_NSP_NEG"], negative_texts=["nope"])
        assert len(reqs) == 4

    def test_empty_kinds_errors(self):
        with pytest.raises(ValueError, match="non-empty"):
            fs.emit_manifest(make_corpus(n_contexts=2), [])

    def test_followups_required(self):
        with pytest.raises(ValueError, match="followups"):
            fs.emit_manifest(make_corpus(n_contexts=2), ["FOLLOWUP_LOGPROBS"])
        reqs = fs.emit_manifest(make_corpus(n_contexts=2), ["FOLLOWUP_LOGPROBS"],
                                followups=["Why are you changing the topic?"])
        assert len(reqs) == 4
        assert reqs[0].followup_utterances == ["Why are you changing the topic?"]

    def test_single_text_kinds_emit_ctx_and_resp_requests(self):
        corpus = make_corpus(n_contexts=3)
        reqs = fs.emit_manifest(corpus, ["SOLO_NSP"])
        assert len(reqs) == 3 + 6
        ctx_reqs = [r for r in reqs if r.example_id.endswith("::ctx")]
        assert len(ctx_reqs) == 3
        assert all(r.response_text is None for r in ctx_reqs)

    def test_shuffled_negatives_emit_shuf_keys(self):
        corpus = make_corpus(n_contexts=3)
        shuffled = [("HUMOD-c00000", "text a"), ("HUMOD-c00001", "text b")]
        reqs = fs.emit_manifest(corpus, ["PAIR_NSP_NEG"], shuffled_negatives=shuffled)
        assert {r.example_id for r in reqs} == {
            fs.shuffled_negative_id("HUMOD-c00000"), fs.shuffled_negative_id("HUMOD-c00001")}
        with pytest.raises(ValueError, match="unknown context"):
            fs.emit_manifest(corpus, ["PAIR_NSP_NEG"],
                             shuffled_negatives=[("nope", "t")])

    def test_manifest_file_roundtrip(self, tmp_path):
        corpus = make_corpus(n_contexts=3)
        reqs = fs.emit_manifest(corpus, ["PAIR_NSP", "COND_LOGPROB"])
        path = tmp_path / "manifest.jsonl"
        fs.write_manifest(reqs, path)
        assert fs.read_manifest(path) == reqs


class TestJoin:
    def test_partial_store_reports_missing(self):
        corpus = make_corpus(n_contexts=3).subset(source="human")  # 3 examples
        ids = [ex.id for ex in corpus.examples]
        store = fs.FeatureStore([fs.vector_record(i, "PAIR_NSP", np.ones(4)) for i in ids[:2]])
        pairs, missing = fs.join(corpus, store, "PAIR_NSP")
        assert [ex.id for ex, _ in pairs] == ids[:2]
        assert missing == [ids[2]]

    def test_empty_store_all_missing(self):
        corpus = make_corpus(n_contexts=2)
        pairs, missing = fs.join(corpus, fs.FeatureStore(), "PAIR_NSP")
        assert pairs == [] and len(missing) == 4

    def test_strict_mode_raises_listing_ids(self):
        corpus = make_corpus(n_contexts=2).subset(source="human")
        with pytest.raises(ValueError, match=corpus.examples[0].id):
            fs.join(corpus, fs.FeatureStore(), "PAIR_NSP", strict=True)


class TestNspHead:
    def test_roundtrip_and_reexport_byte_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        head = fs.NspHead(weight=rng.normal(size=(2, 16)), bias=rng.normal(size=2), d=16)
        p1, p2 = tmp_path / "head1.json", tmp_path / "head2.json"
        fs.write_nsp_head(head, p1)
        back = fs.read_nsp_head(p1)
        assert np.array_equal(back.weight, head.weight)
        assert np.array_equal(back.bias, head.bias)
        fs.write_nsp_head(back, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            fs.NspHead(weight=np.zeros((3, 4)), bias=np.zeros(2), d=4).validate()
