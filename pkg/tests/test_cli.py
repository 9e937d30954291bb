import json

import pytest

from seqnet.cli import DEFAULT_SEED, build_parser
from seqnet.errors import KINSHIP_CAVEAT

from cli_workflow import run, run_workflow, write_inputs

SUBCOMMANDS = ["test", "learn", "mb", "relnet", "ggm", "fit", "predict", "recode", "simulate", "power",
               "recover", "export"]


def _subparsers():
    parser = build_parser()
    action = next(a for a in parser._actions if a.dest == "command")
    return action.choices


def test_all_subcommands_registered():
    assert sorted(_subparsers()) == sorted(SUBCOMMANDS)


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_exits_zero_and_documents_flags(cmd, tmp_path):
    code, out, _ = run([cmd, "--help"], tmp_path)
    assert code == 0
    for action in _subparsers()[cmd]._actions:
        for flag in action.option_strings:
            assert flag in out
        if action.option_strings and action.dest != "help":
            assert action.help


def test_top_level_help(tmp_path):
    code, out, _ = run(["--help"], tmp_path)
    assert code == 0
    assert "simulate" in out


@pytest.mark.parametrize("argv", [[], ["bogus"], ["learn", "--nope"], ["test", "--data", "x.csv"],
                                  ["fit", "--data", "d.csv", "--trait", "t", "--lambda", "abc"],
                                  ["learn", "--data", "d.csv", "--threads", "0"]])
def test_usage_errors_exit_one(argv, tmp_path):
    code, out, err = run(argv, tmp_path)
    assert code == 1
    assert "usage" in err
    assert out == ""


def test_data_errors_exit_two(tmp_path):
    code, _, err = run(["learn", "--data", "missing.csv"], tmp_path)
    assert code == 2
    assert "error" in err
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n1,NA\n")
    code, _, err = run(["relnet", "--data", "bad.csv", "--threshold", "0.5"], tmp_path)
    assert code == 2


def test_default_seed_is_fixed_constant(tmp_path):
    args = build_parser().parse_args(["simulate", "--kind", "dag"])
    assert args.seed == DEFAULT_SEED
    run(["simulate", "--kind", "dag", "--out", "a.json"], tmp_path)
    run(["simulate", "--kind", "dag", "--out", "b.json"], tmp_path)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_test_subcommand_emits_result_json(tmp_path):
    run(["simulate", "--kind", "snp", "--n", "200", "--m", "2", "--out", "d.csv"], tmp_path)
    code, out, err = run(["test", "--data", "d.csv", "--test", "jt", "--x", "snp1", "--y", "trait",
                          "--cond", "snp2"], tmp_path)
    assert code == 0
    obj = json.loads(out)
    assert obj["test"] == "jt" and obj["cond"] == ["snp2"]
    assert 0 <= obj["p"] <= 1


def test_learn_writes_dot_and_log(tmp_path):
    run(["simulate", "--kind", "gaussian", "--p", "4", "--n", "500", "--out", "d.csv"], tmp_path)
    code, out, _ = run(["learn", "--data", "d.csv", "--test", "fisher_z", "--alpha", "0.01", "--out", "net.dot"],
                       tmp_path)
    assert code == 0 and out == ""
    assert (tmp_path / "net.dot").read_text().startswith("digraph")
    lines = (tmp_path / "net.dot.tests.jsonl").read_text().splitlines()
    assert lines and all(json.loads(line)["test"] == "fisher_z" for line in lines)


def test_no_files_outside_out_paths(tmp_path):
    run(["simulate", "--kind", "gaussian", "--p", "4", "--n", "300", "--out", "d.csv"], tmp_path)
    before = set(p.name for p in tmp_path.iterdir())
    run(["relnet", "--data", "d.csv", "--threshold", "0.1"], tmp_path)
    run(["mb", "--data", "d.csv"], tmp_path)
    assert set(p.name for p in tmp_path.iterdir()) == before


def test_kinship_caveat_printed_once(tmp_path):
    run(["simulate", "--kind", "snp", "--n", "300", "--m", "4", "--h2", "0.2", "--out", "d.csv"], tmp_path)
    for argv in (["mb", "--data", "d.csv", "--target", "trait"], ["mb", "--data", "d.csv"],
                 ["learn", "--data", "d.csv", "--test", "fisher_z", "--conflicts", "skip"]):
        code, _, err = run(argv, tmp_path)
        assert code == 0, err
        assert err.count(KINSHIP_CAVEAT) == 1


def test_no_caveat_without_genotypes(tmp_path):
    run(["simulate", "--kind", "gaussian", "--p", "4", "--n", "300", "--out", "d.csv"], tmp_path)
    _, _, err = run(["learn", "--data", "d.csv"], tmp_path)
    assert KINSHIP_CAVEAT not in err


def test_progress_goes_to_stderr_only_when_asked(tmp_path):
    run(["simulate", "--kind", "gaussian", "--p", "4", "--n", "300", "--out", "d.csv"], tmp_path)
    _, out_quiet, err_quiet = run(["learn", "--data", "d.csv"], tmp_path)
    _, out_loud, err_loud = run(["learn", "--data", "d.csv", "--progress"], tmp_path)
    assert err_quiet == ""
    assert "[seqnet]" in err_loud
    assert out_quiet == out_loud


def test_threads_env_fallback(tmp_path, monkeypatch):
    run(["simulate", "--kind", "gaussian", "--p", "5", "--n", "400", "--out", "d.csv"], tmp_path)
    _, ref, _ = run(["learn", "--data", "d.csv", "--format", "json"], tmp_path)
    monkeypatch.setenv("SEQNET_THREADS", "4")
    _, out, _ = run(["learn", "--data", "d.csv", "--format", "json"], tmp_path)
    assert out == ref
    monkeypatch.setenv("SEQNET_THREADS", "zero")
    code, _, _ = run(["learn", "--data", "d.csv"], tmp_path)
    assert code == 1


def test_fit_predict_round_trip(tmp_path):
    run(["simulate", "--kind", "snp", "--n", "200", "--m", "3", "--h2", "0.3", "--out", "d.csv"], tmp_path)
    assert run(["fit", "--data", "d.csv", "--trait", "trait", "--lambda", "0", "--out", "m.json"], tmp_path)[0] == 0
    model = json.loads((tmp_path / "m.json").read_text())
    assert model["lambda"] == 0 and len(model["effects"]) == 3
    code, out, _ = run(["predict", "--data", "d.csv", "--model", "m.json"], tmp_path)
    assert code == 0
    assert out.splitlines()[0] == "prediction" and len(out.splitlines()) == 201


def test_recode_writes_schema(tmp_path):
    write_inputs(tmp_path)
    code, _, _ = run(["recode", "--genotypes", "geno.csv", "--out", "r.csv"], tmp_path)
    assert code == 0
    assert (tmp_path / "r.csv.schema").read_text().splitlines()[0].startswith("s1,ordinal")


def test_export_round_trip(tmp_path):
    run(["simulate", "--kind", "dag", "--p", "5", "--out", "g.json"], tmp_path)
    run(["export", "--graph", "g.json", "--format", "dot", "--out", "g.dot"], tmp_path)
    run(["export", "--graph", "g.dot", "--format", "json", "--out", "back.json"], tmp_path)
    assert json.loads((tmp_path / "back.json").read_text()) == json.loads((tmp_path / "g.json").read_text())


def test_workflow_deterministic(tmp_path):
    a = run_workflow(tmp_path / "a", threads=1)
    b = run_workflow(tmp_path / "b", threads=1)
    assert a == b
    assert len(a["files"]) >= 20
