import json
import os

import pytest

from markovlens.cli import main


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_sample_shape_and_determinism(capsys, tmp_path):
    out1 = str(tmp_path / "a.txt")
    out2 = str(tmp_path / "b.txt")
    argv = ["sample", "--p", "0.5", "--q", "0.8", "--n", "64", "--count", "10",
            "--seed", "7"]
    assert main(argv + ["--out", out1]) == 0
    assert main(argv + ["--out", out2]) == 0
    with open(out1, "rb") as f1, open(out2, "rb") as f2:
        b1, b2 = f1.read(), f2.read()
    assert b1 == b2
    lines = b1.decode().strip().split("\n")
    assert len(lines) == 10
    assert all(len(line.split()) == 64 for line in lines)
    assert set(" ".join(lines).split()) <= {"0", "1"}


def test_sample_to_stdout(capsys):
    code, out, _ = run_cli(["sample", "--p", "0.3", "--q", "0.4", "--n", "5"], capsys)
    assert code == 0
    assert len(out.strip().split("\n")) == 1


def test_invalid_probability_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--p", "1.5", "--q", "0.5", "--n", "8"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "--p" in err


def test_verify_global_high(capsys):
    code, out, _ = run_cli(["verify", "--kind", "global-high", "--p", "0.5",
                            "--q", "0.8"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["all_passed"] is True
    assert data["checks"]["pred_matches_kernel"]["pass"] is True


def test_verify_unigram_tied_with_spectrum(capsys, tmp_path):
    spectrum = str(tmp_path / "spectrum.csv")
    code, out, _ = run_cli(["verify", "--kind", "unigram", "--p", "0.5",
                            "--q", "0.8", "--tied", "--spectrum-csv", spectrum],
                           capsys)
    assert code == 0
    data = json.loads(out)
    assert data["checks"]["hessian_min_eigenvalue"]["pass"] is True
    with open(spectrum) as fp:
        lines = [l for l in fp.read().strip().split("\n") if not l.startswith("#")]
    assert lines[0] == "index,eigenvalue"
    eigs = [float(l.split(",")[1]) for l in lines[1:]]
    assert len(eigs) == 229  # tied d=4, N=8, m=4, r=16 parameter count
    assert eigs == sorted(eigs)


def test_verify_unigram_untied(capsys):
    code, out, _ = run_cli(["verify", "--kind", "unigram", "--p", "0.5",
                            "--q", "0.8", "--untied"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["kind"] == "unigram_untied"
    assert data["checks"]["negative_curvature"]["pass"] is True
    assert data["checks"]["positive_curvature"]["pass"] is True


def test_verify_regime_violation_is_check_failure(capsys):
    code, out, _ = run_cli(["verify", "--kind", "global-low", "--p", "0.5",
                            "--q", "0.8"], capsys)
    assert code == 1
    data = json.loads(out)
    assert data["all_passed"] is False
    assert data["checks"]["construction_feasible"]["pass"] is False


TINY_TRAIN = ["--p", "0.2", "--q", "0.3", "--tied", "--context", "8",
              "--embed-dim", "4", "--attn-dim", "4", "--ff-dim", "8",
              "--batch-size", "8", "--iterations", "12", "--eval-every", "6",
              "--eval-batches", "1", "--seed", "3"]


def test_train_emits_artifacts(capsys, tmp_path):
    out_dir = str(tmp_path / "run")
    code, out, _ = run_cli(["train", *TINY_TRAIN, "--out-dir", out_dir], capsys)
    assert code == 0
    for name in ("run.json", "curve.csv", "scatter.csv", "run.params"):
        assert os.path.exists(os.path.join(out_dir, name))
    with open(os.path.join(out_dir, "run.json")) as fp:
        record = json.load(fp)
    assert record["wall_time"] is None
    assert record["config"]["seed"] == 3
    with open(os.path.join(out_dir, "curve.csv")) as fp:
        text = fp.read()
    assert "# schema=loss_curve" in text
    assert "# entropy_rate=" in text
    assert "iteration,test_loss,train_loss" in text


def test_train_byte_identical_reruns(capsys, tmp_path):
    dir1, dir2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    run_cli(["train", *TINY_TRAIN, "--out-dir", dir1], capsys)
    run_cli(["train", *TINY_TRAIN, "--out-dir", dir2], capsys)
    for name in ("run.json", "curve.csv", "scatter.csv", "run.params"):
        with open(os.path.join(dir1, name), "rb") as f1:
            with open(os.path.join(dir2, name), "rb") as f2:
                assert f1.read() == f2.read(), name


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg_path = str(tmp_path / "cfg.json")
    with open(cfg_path, "w") as fp:
        json.dump({"p": 0.2, "q": 0.3, "iterations": 12, "context": 8,
                   "embed_dim": 4, "attn_dim": 4, "ff_dim": 8, "batch_size": 8,
                   "eval_every": 6, "eval_batches": 1, "tied": True, "seed": 3}, fp)
    out_dir = str(tmp_path / "run")
    code, out, _ = run_cli(["train", "--config", cfg_path, "--seed", "9",
                            "--out-dir", out_dir], capsys)
    assert code == 0
    with open(os.path.join(out_dir, "run.json")) as fp:
        record = json.load(fp)
    assert record["config"]["seed"] == 9  # flag beats config file
    assert record["config"]["iterations"] == 12


def test_config_file_unknown_key_rejected(capsys, tmp_path):
    cfg_path = str(tmp_path / "cfg.json")
    with open(cfg_path, "w") as fp:
        json.dump({"iterations": 5, "bogus": 1}, fp)
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", cfg_path])
    assert exc.value.code == 2
    assert "bogus" in capsys.readouterr().err


def test_sweep_row_count(capsys, tmp_path):
    out_dir = str(tmp_path / "sweep")
    code, out, _ = run_cli(["sweep", *TINY_TRAIN, "--grid", "2", "--seeds", "2",
                            "--out-dir", out_dir], capsys)
    assert code == 0
    with open(os.path.join(out_dir, "sweep.csv")) as fp:
        lines = [l for l in fp.read().strip().split("\n") if not l.startswith("#")]
    assert lines[0].startswith("p,q,tied,seed")
    assert len(lines) - 1 == 2 * 2 * 2  # grid^2 cells x seeds


def test_depth_summary(capsys, tmp_path):
    out_dir = str(tmp_path / "depth")
    code, out, _ = run_cli(["depth", *TINY_TRAIN, "--depths", "1,2",
                            "--seeds", "1", "--out-dir", out_dir], capsys)
    assert code == 0
    assert os.path.exists(os.path.join(out_dir, "depth.json"))
    assert os.path.exists(os.path.join(out_dir, "curve_L1_s0.csv"))
    assert os.path.exists(os.path.join(out_dir, "curve_L2_s0.csv"))
    assert "layers=1" in out and "layers=2" in out


def test_interpret_roundtrip(capsys, tmp_path):
    out_dir = str(tmp_path / "run")
    run_cli(["train", *TINY_TRAIN, "--out-dir", out_dir], capsys)
    code, out, _ = run_cli(
        ["interpret", "--params", os.path.join(out_dir, "run.params"),
         "--p", "0.2", "--q", "0.3"], capsys)
    assert code == 0
    data = json.loads(out)
    assert "attention_ratio" in data
    assert len(data["rank1_fit"]["sign_vector"]) == 4


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("sample", "verify", "train", "sweep", "depth", "interpret"):
        assert cmd in out


def test_interpret_rejects_bad_inputs(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["interpret", "--params", str(tmp_path / "missing.params")])
    assert exc.value.code == 2
    bad = tmp_path / "bad.params"
    bad.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(SystemExit) as exc:
        main(["interpret", "--params", str(bad)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["interpret", "--params", str(bad), "--p", "2.0"])
    assert exc.value.code == 2
