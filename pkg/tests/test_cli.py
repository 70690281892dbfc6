import csv
import json
import shutil
import subprocess

import pytest

from latent_layers.cli import main, parse_target
from latent_layers.dist import compose_2layer, named_box
from latent_layers.errors import UnknownId
from latent_layers.graph import CausalScenario
from latent_layers.pipelines import RunReport


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, "--json", *argv)
    return code, json.loads(out)


def test_registry_list(capsys):
    code, rep = run_json(capsys, "registry", "list")
    assert code == 0
    res = rep["stages"][0]["results"]
    assert "ext_bell_ac" in res["scenarios"]
    assert "prop3" in res["pipelines"]


def test_global_flags_after_command(capsys):
    code, out = run(capsys, "registry", "list", "--json")
    assert code == 0 and json.loads(out)["ok"]


def test_validate_and_exogenize(capsys, tmp_path):
    code, rep = run_json(capsys, "validate", "--scenario", "ext_bell_2il")
    assert code == 0
    assert rep["stages"][0]["results"]["intermediate_latents"] == ["M_AC", "M_BC"]
    out = tmp_path / "exo.json"
    code, _ = run(capsys, "exogenize", "--scenario", "ext_bell_bc", "--out", str(out))
    assert code == 0
    g = CausalScenario.from_json(out.read_text())
    assert not g.intermediate_latents


def test_interrupt_writes_scenario(capsys, tmp_path):
    out = tmp_path / "int.json"
    code, _ = run(capsys, "interrupt", "--scenario", "ext_bell_exo", "--setting", "Y", "--split", "B|C", "--out", str(out))
    assert code == 0
    g = CausalScenario.from_json(out.read_text())
    assert set(g.settings) == {"X", "Y", "Y'"}
    # a non-partition fails with a nonzero exit code
    code, out = run(capsys, "interrupt", "--scenario", "ext_bell_exo", "--setting", "Y", "--split", "B")
    assert code != 0 and "InvalidPartition" in out


def test_lp_check_verdicts(capsys, tmp_path):
    w = tmp_path / "w.json"
    code, rep = run_json(capsys, "lp-check", "--scenario", "ext_bell_exo", "--target", "2layer:tsirelson", "--out", str(w))
    assert code == 0 and rep["verdict"] == "Infeasible"
    stage = rep["stages"][0]
    assert stage["results"]["certificate_verified"] is True
    assert stage["module"] == "lp" and stage["inputs"]["interruption"] == "c"
    assert json.loads(w.read_text())["name"] == "farkas_witness"
    code, rep = run_json(capsys, "lp-check", "--target", "2layer:uniform")
    assert code == 0 and rep["verdict"] == "Feasible"
    code, rep = run_json(capsys, "lp-check", "--target", "2layer:pr", "--theory", "ns")
    assert rep["verdict"] == "Infeasible"


def test_lp_check_rejects_other_scenarios(capsys):
    code, out = run(capsys, "lp-check", "--scenario", "bell", "--target", "2layer:pr")
    assert code == 1 and "UnsupportedScenario" in out


def test_witness_on_feasible_target_fails(capsys):
    code, rep = run_json(capsys, "witness", "--target", "2layer:det:3")
    assert code == 1 and not rep["ok"] and "[witness]" in rep["error"]


def test_sdp_bound(capsys):
    code, rep = run_json(capsys, "sdp-bound", "--scenario", "bell", "--functional", "chsh", "--level", "1")
    assert code == 0
    assert abs(rep["stages"][0]["results"]["value"] - 2.8284271) < 1e-5
    code, out = run(capsys, "sdp-bound", "--scenario", "ext_bell_ac", "--functional", "monogamy_bc00", "--level", "2",
                    "--compare", "4.8284")
    assert code == 0 and "4.6188 < 4.8284" in out


def test_sdp_bound_reports_non_convergence(capsys):
    code, rep = run_json(capsys, "sdp-bound", "--scenario", "bell", "--functional", "chsh", "--level", "1",
                         "--sdp-max-iter", "3")
    assert code == 1
    assert rep["stages"][0]["verdict"] == "NotConverged"


def test_entropy_eval(capsys):
    code, rep = run_json(capsys, "entropy-eval", "--inequality", "bc", "--target", "2layer:tsirelson")
    assert code == 0 and rep["stages"][0]["results"]["value"] > 0
    code, rep = run_json(capsys, "entropy-eval", "--inequality", "monogamy:B01", "--target", "2layer:det:2")
    assert code == 0 and rep["stages"][0]["results"]["value"] >= -1e-12


def test_unknown_target():
    with pytest.raises(UnknownId):
        parse_target("3layer:pr")
    assert parse_target("2lt:tsirelson").equals_exactly(compose_2layer(named_box("tsirelson")))


def test_target_from_file(tmp_path):
    p = tmp_path / "box.json"
    p.write_text(compose_2layer(named_box("pr")).to_json())
    assert parse_target(str(p)).equals_exactly(compose_2layer(named_box("pr")))


def test_scan_bc_csv(capsys, tmp_path):
    out = tmp_path / "scan.csv"
    code, rep = run_json(capsys, "scan-bc", "--angle-steps", "4", "--p-steps", "3", "--no-refine", "--out", str(out))
    assert code == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["alice0", "alice1", "bob0", "bob1", "min_bc_ab"]
    assert len(rows) == 1 + 4**4


def test_pipeline_appendix_a(capsys):
    code, rep = run_json(capsys, "pipeline", "appendixA")
    assert code == 0
    assert "distinguished" in rep["verdict"]
    assert [s["stage"] for s in rep["stages"]] == ["inflate", "reduce", "tetra-reduce", "evaluate"]


def test_usage_error_exit_code(capsys):
    assert main(["bogus"]) == 2


def test_report_replay_is_deterministic(capsys):
    _, first = run_json(capsys, "lp-check", "--target", "opt_copy")
    _, second = run_json(capsys, "lp-check", "--target", "opt_copy")
    strip = lambda r: [s["results"] for s in r["stages"]]  # noqa: E731
    assert strip(first) == strip(second)


def test_text_report_rendering():
    r = RunReport("demo")
    r.stage("s", "Value", "dist", x=1.5, names=["a", "b"], table={"k": 1}, long=list(range(20)))
    r.verdict = "done"
    text = r.text()
    assert "[s] Value  (x=1.5, names=[a b])" in text and "verdict: done" in text


@pytest.mark.skipif(shutil.which("latent-layers") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["latent-layers", "registry", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "scenarios" in proc.stdout
