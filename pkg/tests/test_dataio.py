import json

import numpy as np
import pytest

from aadkit import dataio
from aadkit.errors import BadConfig, ManifestError, ShapeMismatch, UnknownTask


class TestArrays:
    def test_roundtrip(self, tmp_path, rng):
        data = rng.standard_normal((100, 4)).astype(np.float32)
        path = tmp_path / "a.aad"
        dataio.write_array(path, data, 125.0)
        back, fs = dataio.read_array(path)
        assert fs == 125.0
        assert np.array_equal(back, data.astype(np.float64))

    def test_truncated_payload_rejected(self, tmp_path, rng):
        path = tmp_path / "a.aad"
        dataio.write_array(path, rng.standard_normal((50, 2)), 40.0)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ShapeMismatch):
            dataio.read_array(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "a.aad"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(ManifestError):
            dataio.read_array(path)


class TestTimeline:
    def test_task1_single_span(self):
        tl = dataio.build_timeline(1, 30.0, None, [2])
        assert len(tl) == 1
        assert tl[0].attended == 2
        assert (tl[0].start_s, tl[0].end_s) == (0.0, 30.0)

    def test_task2_switch(self):
        tl = dataio.build_timeline(2, 30.0, 15.0, [1, 3])
        assert [(s.start_s, s.end_s, s.attended) for s in tl] == [
            (0.0, 15.0, 1),
            (15.0, 30.0, 3),
        ]

    def test_task4_ignore_after_switch(self):
        tl = dataio.build_timeline(4, 30.0, 15.0, [1])
        assert tl[1].attended is None

    def test_task3_unknown_target(self):
        tl = dataio.build_timeline(3, 30.0, 14.0, [2])
        assert tl[1].attended is None

    def test_unknown_task(self):
        with pytest.raises(UnknownTask):
            dataio.build_timeline(9, 30.0, None, [1])


class TestSessionRoundtrip:
    def test_save_load(self, tmp_path):
        cfg = dataio.SynthConfig(n_trials=6, duration_s=10.0, n_channels=4,
                                 seed=2, switch_times=[None, 8.0, None, 4.0,
                                                       None, None],
                                 tasks=[1, 2, 1, 4, 6, 1])
        session = dataio.synth_generate(cfg)
        path = dataio.save_session(session, tmp_path)
        back = dataio.load_session(path)
        assert back.subject == session.subject
        assert back.preprocessed
        assert len(back.trials) == 6
        for a, b in zip(session.trials, back.trials):
            assert a.task == b.task
            assert a.group == b.group
            assert np.allclose(a.eeg.samples, b.eeg.samples, atol=1e-6)
            assert [s.attended for s in a.timeline] == [
                s.attended for s in b.timeline
            ]
        # task 6 trials carry two speakers
        assert len(back.trials[4].speakers) == 2

    def test_recording_scale_shapes(self, tmp_path):
        cfg = dataio.SynthConfig(n_trials=1, duration_s=30.0, n_channels=16,
                                 fs=125.0, seed=1)
        path = dataio.save_session(dataio.synth_generate(cfg), tmp_path)
        session = dataio.load_session(path)
        trial = session.trials[0]
        assert trial.eeg.samples.shape == (3750, 16)
        assert session.fs == 125.0
        assert trial.eeg.channel_names[:2] == ["L1", "L2"]

    def test_loader_checks_shape(self, tmp_path):
        cfg = dataio.SynthConfig(n_trials=2, duration_s=5.0, n_channels=3,
                                 seed=0)
        path = dataio.save_session(dataio.synth_generate(cfg), tmp_path)
        manifest = json.loads(path.read_text())
        manifest["trials"][0]["channels"] = ["a", "b"]  # wrong count
        path.write_text(json.dumps(manifest))
        with pytest.raises(ShapeMismatch):
            dataio.load_session(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"subject": "x", "fs_eeg": 40.0}))
        with pytest.raises(ManifestError):
            dataio.load_session(path)


class TestAttendedStreams:
    def test_single_span_verbatim(self):
        cfg = dataio.SynthConfig(n_trials=1, duration_s=10.0, n_channels=2,
                                 seed=4)
        trial = dataio.synth_generate(cfg).trials[0]
        streams = dataio.build_attended_streams(trial)
        att_id = trial.timeline[0].attended
        env = next(s.envelope for s in trial.speakers
                   if s.speaker_id == att_id)
        assert np.array_equal(streams.attended, env)
        assert streams.mask.all()

    def test_switch_composite(self):
        cfg = dataio.SynthConfig(n_trials=1, duration_s=10.0, n_channels=2,
                                 seed=5, switch_times=[6.0])
        trial = dataio.synth_generate(cfg).trials[0]
        streams = dataio.build_attended_streams(trial)
        fs = trial.speakers[0].fs
        cut = int(round(6.0 * fs))
        pre = trial.timeline[0].attended
        post = trial.timeline[1].attended
        env = {s.speaker_id: s.envelope for s in trial.speakers}
        assert np.array_equal(streams.attended[:cut], env[pre][:cut])
        assert np.array_equal(streams.attended[cut:], env[post][cut:])

    def test_per_sample_lookup_oracle(self):
        cfg = dataio.SynthConfig(n_trials=3, duration_s=8.0, n_channels=2,
                                 seed=6, switch_times=[4.0, None, 5.0])
        for trial in dataio.synth_generate(cfg).trials:
            streams = dataio.build_attended_streams(trial)
            fs = trial.speakers[0].fs
            env = {s.speaker_id: s.envelope for s in trial.speakers}
            ids = sorted(env)
            t_len = len(streams.attended)
            for t in range(0, t_len, 7):
                sec = t / fs
                att = None
                for span in trial.timeline:
                    if span.start_s <= sec < span.end_s:
                        att = span.attended
                        break
                if att is None:
                    assert not streams.mask[t]
                    continue
                assert streams.attended[t] == env[att][t]
                others = [i for i in ids if i != att]
                for k, sid in enumerate(others):
                    assert streams.unattended[k][t] == env[sid][t]

    def test_partition_property(self):
        cfg = dataio.SynthConfig(n_trials=2, duration_s=6.0, n_channels=2,
                                 seed=8, switch_times=[3.0, None])
        for trial in dataio.synth_generate(cfg).trials:
            streams = dataio.build_attended_streams(trial)
            env = {s.speaker_id: s.envelope for s in trial.speakers}
            total = sum(env.values())
            got = streams.attended + sum(streams.unattended)
            m = streams.mask
            assert np.allclose(got[m], total[m])

    def test_none_span_marked(self):
        cfg = dataio.SynthConfig(n_trials=1, duration_s=10.0, n_channels=2,
                                 seed=9, tasks=[4], switch_times=[5.0])
        trial = dataio.synth_generate(cfg).trials[0]
        streams = dataio.build_attended_streams(trial)
        fs = trial.speakers[0].fs
        cut = int(round(5.0 * fs))
        assert streams.mask[:cut].all()
        assert not streams.mask[cut:].any()
        assert np.all(streams.attended[cut:] == 0)


class TestSynth:
    def test_determinism(self):
        cfg = dataio.SynthConfig(n_trials=4, duration_s=6.0, n_channels=3,
                                 seed=42)
        a = dataio.synth_generate(cfg)
        b = dataio.synth_generate(cfg)
        for ta, tb in zip(a.trials, b.trials):
            assert np.array_equal(ta.eeg.samples, tb.eeg.samples)
            for sa, sb in zip(ta.speakers, tb.speakers):
                assert np.array_equal(sa.envelope, sb.envelope)

    def test_trial_order_invariance(self):
        # per-trial substreams: a longer session reproduces the shorter one
        small = dataio.synth_generate(
            dataio.SynthConfig(n_trials=3, duration_s=5.0, n_channels=2,
                               seed=13)
        )
        big = dataio.synth_generate(
            dataio.SynthConfig(n_trials=6, duration_s=5.0, n_channels=2,
                               seed=13)
        )
        for ta, tb in zip(small.trials, big.trials[:3]):
            assert np.array_equal(ta.eeg.samples, tb.eeg.samples)

    def test_envelopes_nonnegative(self):
        cfg = dataio.SynthConfig(n_trials=3, duration_s=5.0, n_channels=2,
                                 seed=3)
        for trial in dataio.synth_generate(cfg).trials:
            for s in trial.speakers:
                assert np.all(s.envelope >= 0)

    def test_group_assignment(self):
        cfg = dataio.SynthConfig(n_trials=6, duration_s=5.0, n_channels=2,
                                 seed=3, group_b_every=3)
        session = dataio.synth_generate(cfg)
        groups = [t.group for t in session.trials]
        assert groups == [1, 1, 2, 1, 1, 2]
        ids = [t.speaker_ids() for t in session.trials]
        assert all(i in (1, 2, 3) for i in ids[0])
        assert all(i in (4, 5, 6) for i in ids[2])

    def test_config_validation_names_field(self):
        with pytest.raises(BadConfig, match="snr"):
            dataio.SynthConfig(snr=0.0).validate()
        with pytest.raises(BadConfig, match="switch_times"):
            dataio.SynthConfig(n_trials=2, switch_times=[1.0]).validate()
        with pytest.raises(BadConfig, match="n_speakers"):
            dataio.SynthConfig(n_speakers=5).validate()

    def test_load_config_rejects_unknown_field(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"n_trials": 2, "bogus": 1}))
        with pytest.raises(BadConfig, match="bogus"):
            dataio.load_synth_config(p)


class TestSerialization:
    def test_deterministic_model_bytes(self, rng):
        from aadkit.linear import WfModel

        m = WfModel(rng.standard_normal(12), 0.5, 4, 3)
        assert dataio.serialize_model(m) == dataio.serialize_model(m)

    def test_distinct_weights_distinct_bytes(self, rng):
        from aadkit.linear import WfModel

        a = WfModel(rng.standard_normal(6), 0.5, 3, 2)
        b = WfModel(a.w + 1e-12, 0.5, 3, 2)
        assert dataio.serialize_model(a) != dataio.serialize_model(b)


class TestExport:
    def _report(self, rng):
        from aadkit import metrics

        report = metrics.MetricsReport("wf", "loto", 30.0)
        for i in range(5):
            rhos = tuple(rng.uniform(-1, 1, 3))
            d = metrics.decide_window(rhos, 0)
            report.windows.append(
                metrics.WindowRecord("t000", i, d.predicted, 0, rhos,
                                     d.correct, d.tie)
            )
        report.folds.append(
            metrics.FoldResult(0, ("t000",), {"lam": 1.0, "L": 8}, 0.8, 0.5,
                               5, b"modelbytes")
        )
        report.time_pcc["t000"] = (
            ("spk1", "spk2"),
            rng.uniform(-1, 1, (6, 2)),
        )
        return metrics.finalize_report(report)

    def test_roundtrip_and_idempotent(self, tmp_path, rng):
        report = self._report(rng)
        paths = dataio.export_results(report, tmp_path)
        first = {p: p.read_bytes() for p in paths}
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["accuracy"]["mean"] == report.accuracy
        assert summary["n_windows"] == 5
        dataio.export_results(report, tmp_path)
        for p, content in first.items():
            assert p.read_bytes() == content

    def test_window_csv_rows(self, tmp_path, rng):
        report = self._report(rng)
        dataio.export_results(report, tmp_path)
        lines = (tmp_path / "windows.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 5
        tlines = (tmp_path / "time_pcc.csv").read_text().strip().splitlines()
        assert len(tlines) == 1 + 6 * 2


class TestWav:
    def test_16bit_roundtrip(self, tmp_path, rng):
        import wave

        samples = (rng.uniform(-0.5, 0.5, 8000) * 32767).astype(np.int16)
        p = tmp_path / "x.wav"
        with wave.open(str(p), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(16000)
            fh.writeframes(samples.tobytes())
        audio = dataio.read_wav(p)
        assert audio.fs == 16000
        assert np.allclose(audio.samples, samples / 32768.0, atol=1e-9)

    def test_24bit(self, tmp_path):
        import wave

        vals = np.array([0, 1 << 22, -(1 << 22)], dtype=np.int32)
        raw = b"".join(
            int(v & 0xFFFFFF).to_bytes(3, "little") for v in vals
        )
        p = tmp_path / "y.wav"
        with wave.open(str(p), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(3)
            fh.setframerate(16000)
            fh.writeframes(raw)
        audio = dataio.read_wav(p)
        assert np.allclose(audio.samples, [0.0, 0.5, -0.5])
