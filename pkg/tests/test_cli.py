import subprocess
import sys

import pytest

from vqlink import codec as cd
from vqlink.cli import main
from vqlink.vq import Codebook


def test_selftest_exit_zero(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "vqlink", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "sweep" in out.stdout


def test_missing_codebook_exits_2(config_writer, capsys):
    path = config_writer(codebook=False)
    assert main(["sweep", "--config", str(path)]) == 2
    assert "'codebook'" in capsys.readouterr().err


def test_malformed_config_exits_2(artifact_files, capsys):
    bad = artifact_files / "bad.ini"
    bad.write_text("[pipeline\nmode = vq\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_ebn0_list_exits_2(config_writer):
    assert main(["sweep", "--config", str(config_writer()), "--ebn0", "a,b"]) == 2


def test_unknown_subcommand():
    assert main(["fly"]) == 2


def test_sweep_writes_csv(config_writer, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["sweep", "--config", str(config_writer()), "--trials", "2", "--workers", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("status,mode,channel") and len(lines) == 3


def test_sweep_seed_flag_accepts_u64(config_writer, capsys):
    assert main(["sweep", "--config", str(config_writer()), "--trials", "1", "--ebn0", "4", "--seed", str(2**64 - 1), "--workers", "1"]) == 0
    assert f",{2**64 - 1}," in capsys.readouterr().out


@pytest.mark.parametrize("mode", ["direct", "tanh", "vq"])
def test_eval_noiseless_bleu(config_writer, capsys, mode):
    assert main(["eval", "--config", str(config_writer()), "--mode", mode, "--ebn0", "inf", "--sentences", "5"]) == 0
    fields = dict(kv.split("=") for kv in capsys.readouterr().out.split())
    assert fields["bleu_4"] == fields["noiseless_bleu_4"]


def test_train_and_fit_codebook(artifact_files, tmp_path, capsys):
    ckpt = tmp_path / "c.ckpt"
    cb = tmp_path / "cb.txt"
    corpus = artifact_files / "corpus.txt"
    assert main(["train", "--out", str(ckpt), "--corpus", str(corpus), "--epochs", "2", "--codebook-out", str(cb)]) == 0
    loaded = cd.load_checkpoint(ckpt)
    assert loaded.meta["d_z"] == "2" and Codebook.load(cb).K == 64
    fitted = tmp_path / "fit.txt"
    assert main(["fit-codebook", "--checkpoint", str(ckpt), "--corpus", str(corpus), "--K", "8", "--out", str(fitted)]) == 0
    assert Codebook.load(fitted).K == 8


def test_noise_tuning_from_checkpoint(artifact_files, tmp_path):
    out = tmp_path / "tuned.ckpt"
    args = ["train", "--init", str(artifact_files / "codec.ckpt"), "--out", str(out), "--epochs", "1", "--noise-tuning", "--noise-mode", "surrogate"]
    assert main(args) == 0
    assert cd.load_checkpoint(out).codebook is not None
