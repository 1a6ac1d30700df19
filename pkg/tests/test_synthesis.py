"""Synthesis jobs, stub rendering, duration checks, and manifests."""

from __future__ import annotations

import dataclasses
import json

import pytest

from todvoice.clients import StubTTSClient, TTSClient, ClientError, wav_duration_s
from todvoice.corpus import Emotion, Role, Turn
from todvoice.seeding import rng_for
from todvoice.synthesis import (
    ManifestRow,
    SynthesisJob,
    build_job,
    style_instruction,
    synthesize,
    synthesize_corpus,
    synthesize_dialogue,
    turn_out_path,
    verify_durations,
    write_manifest,
)

from conftest import assistant_pool_profiles, make_dialogue, user_pool_profiles


def _labeled_dialogue(dialogue_id="abcd_10083"):
    d = make_dialogue(dialogue_id=dialogue_id)
    user = user_pool_profiles()[0]
    assistant = assistant_pool_profiles()[0]
    return dataclasses.replace(
        d,
        turns=tuple(t.with_(emotion=Emotion.NEUTRAL) for t in d.turns),
        user_speaker=user,
        assistant_speaker=assistant,
    )


class TestJobs:
    def test_out_path_scheme(self):
        assert turn_out_path("abcd_10083", 3) == "data/audio/abcd_10083/turn03.wav"
        assert turn_out_path("x", 0) == "data/audio/x/turn00.wav"

    def test_singleton_keyword_map_forces_instruction(self):
        rng = rng_for(0, "style")
        got = style_instruction(Emotion.NEUTRAL, {Emotion.NEUTRAL: ("calm",)}, rng)
        assert got == "Please speak in a calm tone."

    def test_build_job_uses_role_speaker(self):
        d = _labeled_dialogue()
        user_job = build_job(d, 0, rng=rng_for(0, "j0"))
        asst_job = build_job(d, 1, rng=rng_for(0, "j1"))
        assert user_job.speaker_ref == d.user_speaker.ref_audio
        assert asst_job.speaker_ref == d.assistant_speaker.ref_audio

    def test_build_job_requires_label(self):
        d = _labeled_dialogue()
        d = dataclasses.replace(d, turns=tuple(t.with_(emotion=None) for t in d.turns))
        with pytest.raises(ValueError):
            build_job(d, 0, rng=rng_for(0, "x"))

    def test_empty_normalized_text_rejected(self):
        with pytest.raises(ValueError):
            SynthesisJob(dialogue_id="d", turn_index=0, normalized_text="  ",
                         style_instruction="s", speaker_ref="r", out_path="p")


class TestSynthesize:
    def test_stub_duration_formula(self, tmp_path):
        job = SynthesisJob(
            dialogue_id="d", turn_index=0,
            normalized_text="x" * 50,
            style_instruction="Please speak in a calm tone.",
            speaker_ref="ref.wav",
            out_path="data/audio/d/turn00.wav",
        )
        row = synthesize(job, StubTTSClient(), tmp_path)
        assert row.status == "ok"
        assert row.duration_s == pytest.approx(3.0)
        written = tmp_path / "data/audio/d/turn00.wav"
        assert written.exists()
        assert wav_duration_s(written.read_bytes()) == pytest.approx(3.0, abs=1e-3)

    def test_failed_job_marked_and_run_continues(self, tmp_path):
        class Broken(TTSClient):
            def synthesize(self, text, speaker_ref=None, style=None):
                raise ClientError("tts down")

        d = _labeled_dialogue()
        out, rows = synthesize_dialogue(d, Broken(), tmp_path, rng_for(0, "fail"))
        assert all(r.status == "failed" for r in rows)
        assert all(t.audio_ref is None for t in out.turns)

    def test_synthesize_dialogue_attaches_audio(self, tmp_path):
        d = _labeled_dialogue()
        out, rows = synthesize_dialogue(d, StubTTSClient(), tmp_path, rng_for(0, "ok"))
        assert [r.status for r in rows] == ["ok"] * len(d.turns)
        for t in out.turns:
            assert t.audio_ref == turn_out_path(d.dialogue_id, t.index)
            assert t.duration_s is not None
            assert (tmp_path / t.audio_ref).exists()

    def test_corpus_rows_sorted_and_deterministic(self, tmp_path):
        ds = [_labeled_dialogue("dlg-b"), _labeled_dialogue("dlg-a")]
        out1, rows1 = synthesize_corpus(ds, StubTTSClient(), tmp_path / "r1",
                                        lambda did: rng_for(0, did, "style"), workers=2)
        out2, rows2 = synthesize_corpus(ds, StubTTSClient(), tmp_path / "r2",
                                        lambda did: rng_for(0, did, "style"), workers=1)
        assert [r.to_dict() for r in rows1] == [r.to_dict() for r in rows2]
        ids = [(r.dialogue_id, r.turn) for r in rows1]
        assert ids == sorted(ids)


class TestVerifyDurations:
    def test_all_good(self, tmp_path):
        d = _labeled_dialogue()
        out, _ = synthesize_dialogue(d, StubTTSClient(), tmp_path, rng_for(0, "v"))
        report = verify_durations(out, tmp_path)
        assert not report.violations
        assert report.total_s == pytest.approx(
            sum(t.duration_s for t in out.turns))

    def test_duration_out_of_bounds_flagged(self, tmp_path):
        d = _labeled_dialogue()
        out, _ = synthesize_dialogue(d, StubTTSClient(), tmp_path, rng_for(0, "v"))
        long_turns = tuple(
            t.with_(duration_s=31.0) if t.index == 0 else t for t in out.turns)
        report = verify_durations(dataclasses.replace(out, turns=long_turns), tmp_path)
        assert any(v.rule == "audio.duration" for v in report.violations)

    def test_missing_file_flagged(self, tmp_path):
        d = _labeled_dialogue()
        out, _ = synthesize_dialogue(d, StubTTSClient(), tmp_path, rng_for(0, "v"))
        (tmp_path / out.turns[0].audio_ref).unlink()
        report = verify_durations(out, tmp_path)
        assert any(v.rule == "audio.missing" for v in report.violations)

    def test_five_two_second_turns_total_ten(self, tmp_path):
        d = _labeled_dialogue()
        turns = []
        for i in range(5):
            ref = turn_out_path(d.dialogue_id, i)
            target = tmp_path / ref
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(b"")
            turns.append(Turn(index=i, role=Role.USER if i % 2 == 0 else Role.ASSISTANT,
                              text="x", emotion=Emotion.NEUTRAL,
                              audio_ref=ref, duration_s=2.0))
        report = verify_durations(dataclasses.replace(d, turns=tuple(turns)), tmp_path)
        assert not report.violations
        assert report.total_s == pytest.approx(10.0)

    def test_duration_read_from_wav_when_unset(self, tmp_path):
        d = _labeled_dialogue()
        out, _ = synthesize_dialogue(d, StubTTSClient(), tmp_path, rng_for(0, "v"))
        blank = tuple(t.with_(duration_s=None) for t in out.turns)
        report = verify_durations(dataclasses.replace(out, turns=blank), tmp_path)
        assert not report.violations
        assert report.total_s == pytest.approx(
            sum(t.duration_s for t in out.turns), abs=1e-3)


def test_write_manifest_is_ndjson_sorted(tmp_path):
    rows = [
        ManifestRow(dialogue_id="b", turn=0, status="ok", duration_s=1.0),
        ManifestRow(dialogue_id="a", turn=1, status="failed"),
        ManifestRow(dialogue_id="a", turn=0, status="ok", duration_s=2.0),
    ]
    path = tmp_path / "manifest.jsonl"
    write_manifest(rows, path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [(r["dialogue_id"], r["turn"]) for r in lines] == [("a", 0), ("a", 1), ("b", 0)]
    assert lines[1]["status"] == "failed"
