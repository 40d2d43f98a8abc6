import json

import pytest

from comfp.checkpoint import read_checkpoint, write_checkpoint
from comfp.cli import main


def _layer(path, edges):
    path.write_text("".join(f"{a}\t{b}\t{t}\n" for t, (a, b) in enumerate(edges)))


def _manifest(tmp_path, layers):
    entries = []
    for name, edges in layers.items():
        _layer(tmp_path / f"{name}.tsv", edges)
        entries.append({"name": name, "path": f"{name}.tsv", "timestamps": True})
    (tmp_path / "m.json").write_text(json.dumps({"layers": entries}))
    return tmp_path / "m.json"


def test_ingest_summary(tmp_path, capsys):
    m = _manifest(tmp_path, {"a": [("u1", "u2"), ("u2", "u3")], "b": [("u2", "u4")]})
    assert main(["ingest", "--manifest", str(m)]) == 0
    out = capsys.readouterr().out
    assert "n=4 N=2" in out and "layer a: 2 dyads" in out and "overlap a|b: 1" in out


def test_ingest_disjoint_layers_exit_2(tmp_path, capsys):
    m = _manifest(tmp_path, {"a": [("u1", "u2")], "b": [("u3", "u4")]})
    assert main(["ingest", "--manifest", str(m)]) == 2
    err = capsys.readouterr().err
    assert "a" in err and "b" in err


def test_missing_file_exit_1(tmp_path, capsys):
    assert main(["ingest", "--manifest", str(tmp_path / "nope.json")]) == 1
    assert "nope.json" in capsys.readouterr().err


def test_malformed_edge_list_exit_1(tmp_path):
    m = _manifest(tmp_path, {"a": [("u1", "u2")]})
    (tmp_path / "a.tsv").write_text("u1 u2\n")
    assert main(["ingest", "--manifest", str(m)]) == 1


def test_gradcheck_table(capsys):
    assert main(["gradcheck", "--instances", "20"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 22
    worst = max(float(v) for v in lines[-1].split("\t")[1:])
    assert worst < 1e-5


def test_gradcheck_fails_on_impossible_tolerance():
    assert main(["gradcheck", "--instances", "2", "--tol", "0"]) == 3


@pytest.mark.parametrize("model", ["mmsb", "mmsb-c", "comfp"])
def test_synth_train_eval_pipeline(tmp_path, model):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["synth", "--n", "40", "--k", "2", "--t", "2", "--candidates", "400", "--density-ratio", "3",
                 "--out-dir", str(data)]) == 0
    assert main(["train", "--manifest", str(data / "manifest.json"), "--model", model, "--k", "2", "--t", "2",
                 "--iters", "4", "--eval-pool", "10", "--hyper-period", "2", "--out-dir", str(run)]) == 0
    assert (run / f"trace_{model}.csv").read_text().startswith("iteration,log_density,mh_accept_rate,seconds")
    assert main(["eval", "--checkpoint", str(run / f"checkpoint_{model}.txt"), "--split", str(run / "split.txt"),
                 "--out-dir", str(run / "eval")]) == 0
    rows = (run / "eval" / "report.csv").read_text().splitlines()
    assert rows[1] == "model,layer,map,long_tail_map,n_users_evaluated,seconds"
    assert [r.split(",")[1] for r in rows[2:]] == ["dense", "sparse"]


def test_train_zero_iterations_writes_prior_checkpoint(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    main(["synth", "--n", "30", "--k", "2", "--t", "2", "--candidates", "200", "--out-dir", str(data)])
    assert main(["train", "--manifest", str(data / "manifest.json"), "--model", "comfp", "--k", "2", "--t", "2",
                 "--iters", "0", "--eval-pool", "5", "--out-dir", str(run)]) == 0
    assert (run / "checkpoint_comfp.txt").read_text().startswith("# comfp-checkpoint v1")
    assert (run / "trace_comfp.csv").read_text().count("\n") == 1


def test_eval_layer_mismatch_exit_2(tmp_path):
    a = tmp_path / "a"
    main(["synth", "--n", "30", "--k", "2", "--t", "2", "--candidates", "200", "--out-dir", str(a)])
    main(["train", "--manifest", str(a / "manifest.json"), "--model", "mmsb", "--k", "2", "--iters", "1",
          "--eval-pool", "5", "--out-dir", str(a / "run")])
    ckpt = read_checkpoint(a / "run" / "checkpoint_mmsb.txt")
    ckpt.estimates.layer_names = ["x", "y"]
    write_checkpoint(ckpt, tmp_path / "renamed.txt")
    assert main(["eval", "--checkpoint", str(tmp_path / "renamed.txt"), "--split", str(a / "run" / "split.txt"),
                 "--out-dir", str(tmp_path / "ev")]) == 2


def test_run_with_config_file(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--n", "40", "--k", "2", "--t", "2", "--candidates", "400", "--density-ratio", "3",
          "--out-dir", str(data)])
    cfg = {"manifest": "data/manifest.json", "K": 2, "T": 2, "iterations": 3, "eval_pool": 10, "hyper_period": 1}
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    assert main(["run", "--config", str(tmp_path / "exp.json"), "--model", "mmsb", "--model", "comfp",
                 "--out-dir", str(tmp_path / "out")]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert {r["model"] for r in summary["results"]} == {"mmsb", "comfp"}
    assert summary["config"]["iterations"] == 3
