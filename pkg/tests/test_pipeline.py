from pathlib import Path

import pytest

from espresso import cli
from espresso.callsig import ExpressionCall
from espresso.descriptor import parse_description
from espresso.design import parse_configuration
from espresso.pipeline import OUTPUTS, PipelineError, PipelineRun, load_run, report, run_pipeline
from espresso.rulemine import Level, Rule, RuleStats
from espresso.synthetic import write_genotype_d_run, write_synthetic_experiment

SMALL = parse_configuration("Small:4x4x6")  # 96 spots, 24 clones at 4 replicates


@pytest.fixture
def experiment(tmp_path):
    return write_synthetic_experiment(tmp_path / "exp", config=SMALL, seed=5)


def snapshot(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_full_run_writes_every_output(experiment, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(experiment), "--out", str(out)]) == 0
    expected = {name for stage in OUTPUTS.values() for name in stage.values()} | {"manifest.expd"}
    assert set(snapshot(out)) == expected
    manifest = parse_description((out / "manifest.expd").read_text())
    outputs = {r.fields[0] for r in manifest if r.keyword == "OUTPUT"}
    assert {"calls", "rules", "spots", "layout"} <= outputs
    assert all(str(r.fields[2]).startswith("sha256:") for r in manifest if r.keyword in ("INPUT", "OUTPUT"))


def test_runs_are_byte_identical(experiment, tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", str(experiment), "--out", str(tmp_path / d)]) == 0
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")


def test_rerunning_one_stage_reproduces_its_output(experiment, tmp_path):
    out = tmp_path / "out"
    cli.main(["run", str(experiment), "--out", str(out)])
    before = snapshot(out)
    (out / "calls.tsv").unlink()
    assert cli.main(["run", str(experiment), "--out", str(out), "--stages", "classify"]) == 0
    assert (out / "calls.tsv").read_bytes() == before["calls.tsv"]


def test_empty_stage_list_writes_manifest_only(experiment, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", str(experiment), "--out", str(out), "--stages", ""]) == 0
    assert set(snapshot(out)) == {"manifest.expd"}


def test_absent_array_exits_2_naming_classify(experiment, tmp_path, capsys):
    pairing = experiment.parent / "pairing.tsv"
    pairing.write_text(pairing.read_text() + "CvsM\tCvsM-ghost\tA\tforward\n")
    out = tmp_path / "out"
    assert cli.main(["run", str(experiment), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "[classify]" in err and "CvsM-ghost" in err
    assert not (out / "calls.tsv").exists()


def test_missing_input_exits_2_with_path(experiment, tmp_path, capsys):
    (experiment.parent / "mask.tsv").unlink()
    assert cli.main(["run", str(experiment), "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "[quant]" in err and "mask.tsv" in err


def test_stage_error_exits_1(experiment, tmp_path, capsys):
    code = cli.main(["run", str(experiment), "--out", str(tmp_path / "o"), "--config", "Stanford4x16x24"])
    assert code == 1
    assert "[design]" in capsys.readouterr().err


def test_failed_stage_leaves_earlier_outputs_intact(experiment, tmp_path):
    out = tmp_path / "out"
    cli.main(["run", str(experiment), "--out", str(out)])
    before = snapshot(out)
    (experiment.parent / "pairing.tsv").write_text("comparison\tarray_id\tarray_type\torientation\nCvsM\tghost\tA\tforward\n")
    assert cli.main(["run", str(experiment), "--out", str(out), "--stages", "classify"]) == 2
    assert snapshot(out) == before


def test_manifest_diff_shows_parameter_change(experiment, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["run", str(experiment), "--out", str(a), "--stages", "design"])
    cli.main(["run", str(experiment), "--out", str(b), "--stages", "design", "--seed", "6"])
    capsys.readouterr()
    assert cli.main(["diff", str(a), str(b)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "changed SEED[0] field 0: 5 -> 6" in lines
    assert any(line.startswith("changed OUTPUT") for line in lines)


def test_load_run_overrides(experiment):
    run = load_run(experiment, seed=9, stages=("mine", "design"))
    assert run.seed == 9 and run.stages == ("design", "mine")
    assert run.config == SMALL
    with pytest.raises(ValueError):
        PipelineRun(stages=("bogus",))


def test_run_pipeline_raises_for_missing_explicit_input(tmp_path):
    with pytest.raises(PipelineError) as err:
        run_pipeline(PipelineRun(stages=("design",)), tmp_path)
    assert err.value.exit_code == 2


def test_genotype_d_report(tmp_path):
    run_file = write_genotype_d_run(tmp_path / "gd")
    assert cli.main(["run", str(run_file), "--out", str(tmp_path / "out")]) == 0
    text = (tmp_path / "out" / "report.txt").read_text()
    assert "  CvsM: 72 up, 43 down" in text
    assert "95.83%  ~level(A,CvsS,positive) :- level(A,CvsM,positive).  (69/72)" in text


# --- report --------------------------------------------------------------------------


def test_report_empty_calls_is_all_zero():
    text = report([], [])
    assert "  total: 0 up, 0 down, 0 unchanged" in text


def test_report_uncategorized_and_percent():
    calls = [
        ExpressionCall("1", "CvsM", "up", 16, 14, 2, 0.002),
        ExpressionCall("2", "CvsM", "up", 16, 13, 3, 0.01),
        ExpressionCall("3", "CvsM", "down", 16, 1, 15, 0.0003),
    ]
    rule = Rule(Level("CvsS", "positive"), (Level("CvsM", "positive"),), True)
    text = report(calls, [(rule, RuleStats(72, 69))], [("1", "heat")], [("heat", "environment")])
    assert "  CvsM: 2 up, 1 down, 0 unchanged" in text
    assert "    environment: 1" in text
    assert "    uncategorized: 1 (2)" in text
    assert "95.83%" in text
