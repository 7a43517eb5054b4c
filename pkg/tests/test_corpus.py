import numpy as np
import pytest

from whisper2normal import corpus, dsp
from whisper2normal.config import CorpusConfig

from conftest import write_wav


class TestIngest:
    def test_synthetic_tree_counts(self, corpus_tree):
        manifest, report = corpus.ingest(corpus_tree)
        assert len(manifest.records) == 30  # 3 speakers x 2 styles x 5 sentences
        assert len(manifest.pairs) == 15
        assert report.ingested == 30
        assert not report.errors

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        manifest, report = corpus.ingest(tmp_path / "empty")
        assert manifest.records == [] and manifest.pairs == []
        assert report.scanned == 0

    def test_missing_root_fatal(self, tmp_path):
        with pytest.raises(corpus.CorpusError):
            corpus.ingest(tmp_path / "nope")

    def test_corrupt_wav_reported_not_dropped(self, corpus_tree):
        bad = corpus_tree / "US" / "s01" / "s01_whisper_u999.wav"
        bad.write_bytes(b"RIFF this is junk")
        manifest, report = corpus.ingest(corpus_tree)
        assert len(manifest.records) == 30
        assert any("u999" in e for e in report.errors)

    def test_zero_length_rejected(self, corpus_tree):
        write_wav(corpus_tree / "US" / "s01" / "s01_whisper_u998.wav", np.zeros(0), 22050)
        manifest, report = corpus.ingest(corpus_tree)
        assert all(r.utterance_id != "u998" for r in manifest.records)
        assert any("u998" in e for e in report.errors)

    def test_unmatched_names_skipped_with_note(self, corpus_tree):
        write_wav(corpus_tree / "US" / "s01" / "README_audio.wav", np.ones(100) * 0.1, 22050)
        manifest, report = corpus.ingest(corpus_tree)
        assert len(manifest.records) == 30
        assert any("README_audio" in s for s in report.skipped)

    def test_site_filter_excludes_sg(self, corpus_tree):
        write_wav(
            corpus_tree / "SG" / "s09" / "s09_whisper_u001.wav", np.ones(4000) * 0.2, 22050
        )
        us_only, _ = corpus.ingest(corpus_tree, site_filter="US")
        assert all(r.site == "US" for r in us_only.records)
        everything, _ = corpus.ingest(corpus_tree, site_filter=None)
        assert any(r.site == "SG" for r in everything.records)

    def test_durations_positive(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        assert all(r.duration_s > 0 for r in manifest.records)


class TestPairing:
    def test_fully_parallel_fixture(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        paired, remainder = corpus.pair_utterances(manifest)
        assert len(paired.pairs) == 15
        assert remainder == []
        for pair in paired.pairs:
            assert pair.whisper.style == "whisper"
            assert pair.normal.style == "normal"
            assert pair.whisper.speaker_id == pair.normal.speaker_id
            assert pair.whisper.utterance_id == pair.normal.utterance_id

    def test_unmatched_singleton(self):
        rec = corpus.UtteranceRecord("s01", "u001", "whisper", "US", "/tmp/x.wav", 1.0)
        manifest, remainder = corpus.pair_utterances(corpus.CorpusManifest(records=[rec]))
        assert manifest.pairs == []
        assert remainder == [rec]

    def test_idempotent(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        once, _ = corpus.pair_utterances(manifest)
        pairs_once = [(p.speaker_id, p.utterance_id) for p in once.pairs]
        twice, _ = corpus.pair_utterances(once)
        assert [(p.speaker_id, p.utterance_id) for p in twice.pairs] == pairs_once

    def test_pair_audio_loads(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        pair = manifest.pairs[0]
        for rec in (pair.whisper, pair.normal):
            w = dsp.load_audio(rec.audio_path)
            assert len(w) > 0


class TestSpeakerView:
    def test_filter_keeps_only_that_speaker(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        view = corpus.speaker_view(manifest, "s02")
        assert {r.speaker_id for r in view.records} == {"s02"}
        assert len(view.records) == 10
        assert len(view.pairs) == 5

    def test_unknown_speaker_not_found(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        with pytest.raises(corpus.SpeakerNotFoundError):
            corpus.speaker_view(manifest, "s99")


class TestSplit:
    def test_deterministic_and_disjoint(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        a = corpus.assign_split(manifest, test_fraction=0.2, seed=3).split
        b = corpus.assign_split(manifest, test_fraction=0.2, seed=3).split
        assert a == b
        assert set(a.values()) <= {"train", "test"}
        assert sum(1 for v in a.values() if v == "test") == 1  # round(0.2 * 5)

    def test_proportions_on_larger_pool(self):
        records = [
            corpus.UtteranceRecord("s01", f"u{i:04d}", "whisper", "US", f"/tmp/{i}.wav", 1.0)
            for i in range(100)
        ]
        manifest = corpus.assign_split(corpus.CorpusManifest(records=records), 0.07, seed=0)
        assert sum(1 for v in manifest.split.values() if v == "test") == 7

    def test_published_list_wins(self, corpus_tree, tmp_path):
        manifest, _ = corpus.ingest(corpus_tree)
        listed = tmp_path / "test_utts.txt"
        listed.write_text("u000\nu003\n")
        manifest = corpus.assign_split(manifest, test_list=listed)
        assert manifest.split["u000"] == "test"
        assert manifest.split["u003"] == "test"
        assert manifest.split["u001"] == "train"

    def test_subset_by_split(self, corpus_tree):
        manifest, _ = corpus.ingest(corpus_tree)
        manifest = corpus.assign_split(manifest, test_fraction=0.2, seed=1)
        test_set = corpus.subset_by_split(manifest, "test")
        assert test_set.records
        assert all(manifest.split[r.utterance_id] == "test" for r in test_set.records)


class TestManifestFile:
    def test_round_trip_byte_identical(self, corpus_tree, tmp_path):
        manifest, _ = corpus.ingest(corpus_tree)
        manifest = corpus.assign_split(manifest, test_fraction=0.2, seed=5)
        p1 = tmp_path / "m1.jsonl"
        p2 = tmp_path / "m2.jsonl"
        corpus.save_manifest(manifest, p1)
        corpus.save_manifest(corpus.load_manifest(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_line_raises(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"speaker_id": "s01"\n')
        with pytest.raises(corpus.CorpusError, match="malformed"):
            corpus.load_manifest(path)

    def test_custom_stem_regex(self, tmp_path):
        root = tmp_path / "alt"
        write_wav(root / "w_s7_0001.wav", np.ones(2000) * 0.1, 22050)
        write_wav(root / "n_s7_0001.wav", np.ones(2000) * 0.1, 22050)
        cfg = CorpusConfig(
            stem_regex=r"^(?P<style>[wn])_(?P<speaker>[A-Za-z0-9]+)_(?P<utterance>\d+)$"
        )
        manifest, report = corpus.ingest(root, cfg)
        assert len(manifest.records) == 2
        assert len(manifest.pairs) == 1
        assert not report.skipped
