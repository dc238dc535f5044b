import json

import pytest

from dnat.cli import dispatch, load_run_config


def run(capsys, *argv):
    code = dispatch(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_no_args_is_usage_error(capsys):
    code, _, err = run(capsys, )
    assert code == 2


def test_unknown_subcommand(capsys):
    code, _, _ = run(capsys, "frobnicate")
    assert code == 2


def test_evaluate_identical_files(tmp_path, capsys):
    f = tmp_path / "a.txt"
    f.write_text("the cat sat\na b c\n")
    code, out, _ = run(
        capsys, "evaluate", "--hyp", str(f), "--ref", str(f), "--metrics", "bleu1"
    )
    assert code == 0
    assert out.strip() == "bleu1\t100.00"


def test_evaluate_multiple_metrics(tmp_path, capsys):
    hyp = tmp_path / "hyp.txt"
    ref = tmp_path / "ref.txt"
    hyp.write_text("the cat sat\n")
    ref.write_text("the cat slept\n")
    code, out, _ = run(
        capsys, "evaluate", "--hyp", str(hyp), "--ref", str(ref), "--metrics", "bleu1,f1"
    )
    assert code == 0
    lines = dict(line.split("\t") for line in out.strip().splitlines())
    assert lines["bleu1"] == "66.67"


def test_evaluate_unknown_metric_is_domain_error(tmp_path, capsys):
    f = tmp_path / "a.txt"
    f.write_text("x\n")
    code, _, err = run(capsys, "evaluate", "--hyp", str(f), "--ref", str(f), "--metrics", "meteor")
    assert code == 1
    assert "unknown metric" in err


def test_diffuse_t_zero_echoes(capsys):
    code, out, _ = run(
        capsys, "diffuse", "--text", "a b c", "--t", "0", "--steps", "10", "--seed", "1"
    )
    assert code == 0
    assert out.strip() == "a b c"


def test_diffuse_terminal_all_mask(capsys):
    code, out, _ = run(
        capsys, "diffuse", "--text", "a b c", "--t", "10", "--steps", "10", "--seed", "1"
    )
    assert code == 0
    assert out.split() == ["[MASK]"] * 3


def test_diffuse_deterministic(capsys):
    args = ["diffuse", "--text", "a b c d e", "--t", "5", "--steps", "10", "--seed", "3"]
    _, out1, _ = run(capsys, *args)
    _, out2, _ = run(capsys, *args)
    assert out1 == out2


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == 0
    assert "FAIL" not in out
    assert out.count("PASS") >= 5


def test_run_config_rejects_unknown_sections():
    with pytest.raises(ValueError, match="unknown config section"):
        load_run_config({"optimizer": {}})
    with pytest.raises(ValueError, match="unknown key"):
        load_run_config({"train": {"learning_rate": 1}})


def test_print_config_round_trip(tmp_path, capsys):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"train": {"lr": 0.001, "total_steps": 2}}))
    code, out, _ = run(
        capsys, "train", "--config", str(cfg_path), "--synthetic", "copy,K=5,len=3,n=20,seed=1",
        "--print-config",
    )
    assert code == 0
    echoed = json.loads(out)
    code2, out2, _ = run(
        capsys, "train", "--config", str(cfg_path), "--synthetic", "copy,K=5,len=3,n=20,seed=1",
        "--print-config",
    )
    assert json.loads(out2) == echoed
    assert echoed["train"]["lr"] == 0.001


def test_set_overrides(capsys, tmp_path):
    code, out, _ = run(
        capsys, "train", "--synthetic", "copy,K=5,len=3,n=20,seed=1",
        "--set", "train.lr=0.01", "--set", "sample.steps=7", "--print-config",
    )
    assert code == 0
    cfg = json.loads(out)
    assert cfg["train"]["lr"] == 0.01
    assert cfg["sample"]["steps"] == 7


def test_train_generate_evaluate_pipeline(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, _, err = run(
        capsys, "train", "--synthetic", "copy,K=8,len=3,n=60,seed=1", "--out", str(out_dir),
        "--set", "train.total_steps=5", "--set", "train.batch_size=4",
        "--set", "train.diffusion_steps=8", "--set", "model.d_model=16",
        "--set", "model.d_ff=32", "--set", "model.n_heads=2",
        "--set", "model.n_enc_layers=1", "--set", "model.n_dec_layers=1",
    )
    assert code == 0, err
    assert (out_dir / "checkpoint.dnat").exists()
    assert (out_dir / "vocab.txt").exists()

    trace = tmp_path / "trace.jsonl"
    code, out, err = run(
        capsys, "generate", "--checkpoint", str(out_dir / "checkpoint.dnat"),
        "--input", "3 1 2", "--steps", "4", "--sp-turns", "1", "--length", "3",
        "--seed", "0", "--trace", str(trace),
    )
    assert code == 0, err
    records = [json.loads(line) for line in trace.read_text().splitlines()]
    assert len(records) == 4
    assert records[0]["y_t"] == ["[MASK]"] * 3
    assert {"t", "y_t", "y0_hat"} <= set(records[0])

    # determinism of the whole subcommand
    code, out2, _ = run(
        capsys, "generate", "--checkpoint", str(out_dir / "checkpoint.dnat"),
        "--input", "3 1 2", "--steps", "4", "--sp-turns", "1", "--length", "3", "--seed", "0",
    )
    assert out.splitlines()[0] == out2.splitlines()[0]


def test_train_requires_out(capsys):
    code, _, err = run(capsys, "train", "--synthetic", "copy,K=5,len=3,n=20,seed=1")
    assert code == 1
    assert "--out" in err


def test_train_missing_corpus_config(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--out", str(tmp_path / "x"))
    assert code == 1
    assert "no corpus" in err
