import json

import numpy as np
import pytest

from tftts import io
from tftts.cli import format_number, main, to_json
from tftts.corpus import render_tokens
from tftts.signal import Waveform

TINY_CFG = """
corpus_size = 4
min_duration = 0.5
max_duration = 0.75
batch_size = 2
steps = 3
embed_dim = 4
enc_dim = 4
dec_dim = 4
gl_iterations = 4
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


@pytest.fixture
def wav(tmp_path):
    path = tmp_path / "in.wav"
    io.write_wav(path, render_tokens([1, 4, 2]), 32)
    return path


def test_number_formatting():
    assert format_number(80.0) == "80.0000"
    assert format_number(-6.020599913) == "-6.02060"
    assert format_number(1.23456789e-7) == "1.23457e-07"
    assert format_number(3) == "3"
    assert format_number(float("nan")) == "null"
    assert format_number(True) == "true"
    assert to_json({"a": [1.0, "x", None]}) == '{"a": [1.00000, "x", null]}'


def test_extract_reconstruct_evaluate(capsys, tmp_path, wav):
    mel = tmp_path / "y.melf"
    code, out, _ = run(capsys, "extract", "--in", str(wav), "--out", str(mel))
    assert code == 0 and out["frames"] == 1 + (12000 - 800) // 200 and out["n_mels"] == 80
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    for target in (a, b):
        code, out, _ = run(capsys, "reconstruct", "--in", str(mel), "--out", str(target), "--iterations", "4")
        assert code == 0 and out["iterations"] == 4
    assert a.read_bytes() == b.read_bytes()
    code, out, _ = run(capsys, "evaluate", "--est", str(a), "--ref", str(a))
    assert code == 0 and out["si_sdr_db"] == 80.0 and out["loss_t"] == -80.0
    capsys.readouterr()
    main(["evaluate", "--est", str(a), "--ref", str(a)])
    assert "80.0000" in capsys.readouterr().out


def test_loss_command(capsys, tmp_path, wav):
    mel = tmp_path / "y.melf"
    run(capsys, "extract", "--in", str(wav), "--out", str(mel))
    code, out, _ = run(capsys, "loss", "--pred", str(mel), "--target", str(mel), "--lambda", "0",
                       "--est", str(wav), "--ref", str(wav))
    assert code == 0 and out["total"] == out["loss_f"] == 0.0
    code, out, _ = run(capsys, "loss", "--pred", str(mel), "--target", str(mel), "--iterations", "2")
    assert code == 0 and out["loss_t"] == -80.0 and out["total"] == pytest.approx(-0.08)
    code, _, err = run(capsys, "loss", "--pred", str(mel), "--target", str(mel), "--est", str(wav))
    assert code == 1 and err["error"] == "invalid-input"


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--iterations", "1", "--frames", "6")
    assert code == 0 and out["passed"] is True and out["max_rel_error"] <= 1e-3
    code, out, _ = run(capsys, "gradcheck", "--frames", "6", "--tol", "1e-12")
    assert code == 3 and out["passed"] is False


def test_train_resume_synthesize(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_CFG, encoding="utf-8")
    ckpt, log = tmp_path / "m.ckpt", tmp_path / "log.jsonl"
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--out", str(ckpt), "--log", str(log))
    assert code == 0 and out["steps"] == 3
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert [x["step"] for x in lines] == [0, 1, 2]
    code, out, _ = run(capsys, "train", "--resume", str(ckpt), "--steps", "5", "--out", str(ckpt))
    assert code == 0 and out["steps"] == 5
    wav = tmp_path / "s.wav"
    code, out, _ = run(capsys, "synthesize", "--ckpt", str(ckpt), "--tokens", "3 1 4 1", "--out", str(wav))
    assert code == 0 and out["frames"] == 1 + (16000 - 800) // 200 and out["iterations"] == 4
    assert len(io.read_wav(wav)) == out["samples"]
    code, _, err = run(capsys, "synthesize", "--ckpt", str(ckpt), "--tokens", "3 99", "--out", str(wav))
    assert code == 1 and err["error"] == "invalid-input"
    code, _, err = run(capsys, "synthesize", "--ckpt", str(ckpt), "--tokens", "1", "--out", str(wav),
                       "--max-frames", "0")
    assert code == 1


def test_errors_are_single_line_json(capsys, tmp_path):
    code, _, err = run(capsys, "evaluate", "--est", str(tmp_path / "missing.wav"), "--ref", "x")
    assert code == 1 and err["error"] == "io"
    code, _, err = run(capsys, "nonsense")
    assert code == 2 and err["error"] == "usage"
    code, _, err = run(capsys, "reconstruct", "--in", "a")
    assert code == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    code, _, err = run(capsys, "train", "--config", str(bad), "--out", str(tmp_path / "c"))
    assert code == 1 and err["error"] == "invalid-config"
    junk = tmp_path / "junk.melf"
    junk.write_bytes(b"nope")
    code, _, err = run(capsys, "reconstruct", "--in", str(junk), "--out", str(tmp_path / "o.wav"))
    assert code == 1 and err["error"] == "corrupt-file"


def test_cli_numbers_match_library(capsys, tmp_path, rng):
    from tftts.loss import si_sdr

    ref = rng.standard_normal(4000) * 0.1
    est = ref + 0.05 * rng.standard_normal(4000)
    io.write_wav(tmp_path / "r.wav", Waveform(ref), 32)
    io.write_wav(tmp_path / "e.wav", Waveform(est), 32)
    _, out, _ = run(capsys, "evaluate", "--est", str(tmp_path / "e.wav"), "--ref", str(tmp_path / "r.wav"))
    lib = si_sdr(io.read_wav(tmp_path / "e.wav"), io.read_wav(tmp_path / "r.wav"))
    assert out["si_sdr_db"] == float(format_number(lib))
    assert np.isfinite(out["si_sdr_db"])
