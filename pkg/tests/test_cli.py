import json

import pytest

from compmr.cli import main
from compmr.detector import spec_path

CYCLE = """
name: loop
classes: [c]
vertices:
  A: {inputs: [x, back], outputs: [y], executor: identity}
  B: {inputs: [x], outputs: [y], executor: identity}
inputs: {x: [A.x]}
edges: [A.y -> B.x, B.y -> A.back]
atoms:
  R: {vertex: A, domain: all, verdict: outputs_nonempty}
  S: {vertex: B, domain: all, verdict: outputs_nonempty}
"""

DISJOINT = """
name: disjoint
classes: [a, b]
vertices:
  A: {inputs: [x], outputs: [y], executor: identity}
  B: {inputs: [x], outputs: [y], executor: identity}
inputs: {x: [A.x]}
edges: [A.y -> B.x]
atoms:
  R: {vertex: A, domain: [a], verdict: outputs_nonempty}
  S: {vertex: B, domain: [b], verdict: outputs_nonempty}
policy: {operators: [and, or]}
"""


@pytest.fixture(autouse=True)
def _workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("COMPMR_WORKDIR", str(tmp_path / "work"))


def test_derive_detector(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert main(["derive", "--spec", str(spec_path()), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["candidates"][0]["expr"] == "and(atom(N), hat_or(atom(K), atom(D)))"
    assert doc["candidates"][0]["robust"] is True
    assert "[0] and(atom(N), hat_or(atom(K), atom(D)))" in capsys.readouterr().out


def test_cycle_is_config_error(tmp_path, capsys):
    p = tmp_path / "s.yaml"
    p.write_text(CYCLE)
    assert main(["derive", "--spec", str(p)]) == 2
    assert "cycle detected" in capsys.readouterr().err


def test_empty_domains_exhaust(tmp_path, capsys):
    p = tmp_path / "s.yaml"
    p.write_text(DISJOINT)
    assert main(["derive", "--spec", str(p)]) == 3
    assert "exhausted" in capsys.readouterr().err


def test_missing_spec_file(tmp_path):
    assert main(["derive", "--spec", str(tmp_path / "nope.yaml")]) == 2


def test_bad_yaml_reports_line(tmp_path, capsys):
    p = tmp_path / "s.yaml"
    p.write_text("name: x\nclasses: [c]\nclasses: [d]\n")
    assert main(["derive", "--spec", str(p)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_run_detector(tmp_path):
    out = tmp_path / "rep"
    assert main(["run", "--spec", str(spec_path()), "--out", str(out), "--workdir", str(tmp_path / "w")]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failed"] == 0 and summary["groups"] > 0


def test_run_unknown_composite(tmp_path, capsys):
    code = main(["run", "--spec", str(spec_path()), "--composite", "and(atom(N), atom(Z))",
                 "--workdir", str(tmp_path / "w")])
    assert code == 2
    assert "unknown atoms: Z" in capsys.readouterr().err


def test_run_composite_index_out_of_range(tmp_path):
    assert main(["run", "--spec", str(spec_path()), "--composite", "9", "--workdir", str(tmp_path / "w")]) == 2


@pytest.mark.parametrize("flags", [[], ["--starred"], ["--four-component"],
                                   ["--four-component", "--mode", "per-branch"]])
def test_demo_detector(flags):
    assert main(["demo", "detector"] + flags) == 0


def test_demo_detector_fault_found(tmp_path):
    spec = tmp_path / "s.yaml"
    spec.write_text(spec_path().read_text().replace(
        "{builtin: detector.find, params: {label: dog}}",
        "{builtin: detector.find, params: {label: dog, fault: miss-last}}"))
    assert main(["run", "--spec", str(spec), "--workdir", str(tmp_path / "w")]) == 1


def test_unknown_demo(capsys):
    assert main(["demo", "nonesuch"]) == 2
    assert "unknown demo" in capsys.readouterr().err


def test_demo_refuses_foreign_workdir(tmp_path):
    wd = tmp_path / "mine"
    wd.mkdir()
    (wd / "precious.txt").write_text("keep")
    assert main(["demo", "detector", "--workdir", str(wd)]) == 2
    assert (wd / "precious.txt").exists()


def test_demo_genomics_fault_cli(tmp_path, capsys):
    wd = tmp_path / "g"
    code = main(["demo", "genomics", "--kind", "insertions", "--series-length", "3",
                 "--fault", "drop-edge:strelka2-somatic", "--workdir", str(wd)])
    assert code == 1
    summary = json.loads((wd / "report" / "summary.json").read_text())
    assert "strelka2-somatic" in summary["failed_groups"][0]["suspects"]


def test_demo_bad_fault(tmp_path):
    assert main(["demo", "genomics", "--fault", "meltdown", "--workdir", str(tmp_path / "g")]) == 2
