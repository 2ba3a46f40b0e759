import json
import struct
import wave

import numpy as np
import pytest

import avsf


def test_embedding_round_trip_and_layout(tmp_path):
    path = tmp_path / "x.avsf"
    avsf.write_embeddings(path, np.array([[0.0, 1.0]]), "audio", 25.0)
    raw = path.read_bytes()
    assert len(raw) == 36
    magic, version, modality, dim, frames, fps = struct.unpack("<4sIB3xIQf", raw[:28])
    assert (magic, version, modality, dim, frames, fps) == (b"AVSF", 1, 1, 2, 1, 25.0)
    assert struct.unpack("<2f", raw[28:]) == (0.0, 1.0)

    data = np.random.default_rng(0).normal(size=(7, 3)).astype(np.float32)
    avsf.write_embeddings(path, data, "visual")
    back, mod, fps = avsf.read_embeddings(path)
    assert mod == "visual" and fps == 25.0
    np.testing.assert_array_equal(back, data.astype(np.float64))

    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(avsf.AvsfError):
        avsf.read_embeddings(path)


def test_wav_scaling_matches_the_wave_module(tmp_path):
    path = tmp_path / "a.wav"
    pcm = np.array([-32768, 32767, 0, 16384] + [0] * 15996, dtype="<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(pcm.tobytes())
    samples, rate = avsf.read_wav(path)
    with wave.open(str(path), "rb") as w:
        expected = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2") / 32768.0
    assert rate == 16000.0
    assert samples[0] == -1.0
    np.testing.assert_array_equal(samples, expected)

    feats = avsf.mfcc(samples, stack=4)
    assert feats.shape == (24, 52)


def test_scoring_and_metrics():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(10, 4))
    assert avsf.score(x, x, "plain")["score"] == pytest.approx(1.0)
    r = avsf.score(x, x, "dtw")
    assert r["offset"] is None and len(r["path"]) == 10
    assert avsf.score(x, x)["offset"] == 0
    assert avsf.cosine([1.0, 0.0], [0.0, 0.0]) == 0.0
    assert avsf.auc([0.5, 0.2], [0.3, 0.1]) == 0.75
    assert avsf.calibrate_threshold([0.2, 0.4, 0.6, 0.8, 1.0], 0.2) == 0.2

    pts = np.array([[0.0], [0.1], [10.0], [10.1]])
    centroids, trace = avsf.kmeans_fit(pts, 2, seed=7)
    assert sorted(centroids[:, 0].round(6)) == [0.05, 10.05]
    assert avsf.assign(centroids, pts)[0] == avsf.assign(centroids, pts)[1]


def test_benchmark_eval_and_cli(tmp_path):
    n = avsf.build_benchmark(tmp_path / "b", "real=30,swap=30", seed=3, frames=100)
    assert n == 60
    report = json.loads(avsf.evaluate(tmp_path / "b" / "manifest.jsonl"))
    assert report["auc_overall"] >= 0.99
    assert report["n_real"] == 30

    code, out, err = avsf.run_cli(["bogus"])
    assert code == 1 and "Usage" in err
    v = str(tmp_path / "b" / "real_00000.v.avsf")
    code, out, _ = avsf.run_cli(["score", "--visual", v, "--audio", v, "--alignment", "plain"])
    assert code == 0 and out == "1.0,\n"
