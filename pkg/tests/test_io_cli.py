import json
import subprocess
import sys

import numpy as np
import pytest

from groupshapley import globalization as gz
from groupshapley.cli import main
from groupshapley.coalition import GroupPartition, UtilityTable
from groupshapley.io import (
    ImportanceTable,
    SchemaError,
    data_path,
    dumps_constraints,
    dumps_utilities,
    read_constraints,
    read_utilities,
    utility_table_from_doc,
    write_utilities,
)
from groupshapley.shapley import cls_shapley

from conftest import random_table

TOY = str(data_path("toy.json"))
EX_U = data_path("globalization", "utilities")
EX_C = data_path("globalization", "constraints")


def parse_csv_table(text):
    rows = [line.split(",") for line in text.splitlines() if line and not line.startswith("#")]
    assert rows[0] == ["group", "value", "share"]
    return {r[0]: (float(r[1]), float(r[2])) for r in rows[1:]}


# file formats


def test_utilities_round_trip(tmp_path, rng):
    for n in (1, 2, 3, 5):
        t = random_table(rng, n)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_utilities(t, p1)
        back = read_utilities(p1)
        assert back == t
        write_utilities(back, p2)
        assert p1.read_bytes() == p2.read_bytes()


def test_utilities_round_trip_with_missing(rng):
    t = random_table(rng, 4).hide([3, 9, 12])
    text = dumps_utilities(t)
    assert utility_table_from_doc(json.loads(text)) == t
    assert dumps_utilities(utility_table_from_doc(json.loads(text))) == text


def test_shipped_files_are_canonical():
    for path in [data_path("toy.json")] + sorted(EX_U.iterdir()):
        assert dumps_utilities(read_utilities(path)) == path.read_text(encoding="utf-8")
    for path in sorted(EX_C.iterdir()):
        cs = read_constraints(path, 3)
        assert dumps_constraints(cs) == path.read_text(encoding="utf-8")


def test_shipped_example_files_match_module():
    for name in gz.AGGREGATES:
        got, ref = read_utilities(EX_U / f"{name}.json"), gz.utility_table(name)
        assert got.partition.groups == ref.partition.groups
        assert dict(got.entries) == dict(ref.entries) and got.grand == ref.grand
        for interp in ("A", "B"):
            assert read_constraints(EX_C / f"{name}.{interp}.json", 3).rows == gz.constraints(name, interp).rows


@pytest.mark.parametrize("doc", [
    {"groups": ["a", "b"], "values": {"0": 1.0}},
    {"groups": ["a", "b"], "values": {"": 1.0}, "grand": 1.0},
    {"groups": ["a", "b"], "values": {"0,1": 1.0}, "grand": 1.0},
    {"groups": ["a", "b"], "values": {"1,0": 1.0}, "grand": 1.0},
    {"groups": ["a", "a"], "values": {}, "grand": 1.0},
    {"groups": ["a", "b"], "values": {"0": "1"}, "grand": 1.0},
    {"groups": ["a", "b"], "values": {"0": True}, "grand": 1.0},
    ["not", "an", "object"],
])
def test_utilities_schema_errors(doc):
    with pytest.raises(SchemaError):
        utility_table_from_doc(doc)


def test_constraint_schema_errors(tmp_path):
    bad = [
        {"rows": []},
        [{"terms": [{"coalition": "0,1,2", "coef": 1}], "rhs": 0}],
        [{"terms": [{"coalition": "0", "coef": "x"}], "rhs": 0}],
        [{"terms": [{"coalition": "0"}], "rhs": 0}],
        [{"terms": []}],
    ]
    for doc in bad:
        p = tmp_path / "c.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            read_constraints(p, 3)


def test_importance_table_invariants(toy_table):
    res = cls_shapley(toy_table)
    rows = parse_csv_table(ImportanceTable.from_result(res).to_csv())
    vals = [rows[g][0] for g in res.partition.groups]
    shares = [rows[g][1] for g in res.partition.groups]
    assert abs(sum(vals) - toy_table.grand) <= 0.5e-6 * len(vals)
    assert abs(sum(shares) - 1.0) <= 0.5e-4 * len(shares)
    assert rows["total"] == (6.0, 1.0)
    md = ImportanceTable.from_result(res).to_markdown()
    assert "method: cls" in md and md.count("\n| ") == 4


def test_importance_table_zero_grand():
    t = UtilityTable(GroupPartition(("a", "b")), {1: 1.0, 2: -1.0}, 0.0)
    text = ImportanceTable.from_result(cls_shapley(t)).to_csv()
    assert "nan" in text


# command line


def test_decompose_toy(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["decompose", "--utilities", TOY, "--out", str(out), "--format", "csv"]) == 0
    rows = parse_csv_table(out.read_text())
    assert len(rows) == 4
    assert sum(rows[g][1] for g in ("M1", "M2", "M3")) == pytest.approx(1.0, abs=1e-3)
    assert main(["decompose", "--utilities", TOY]) == 0
    assert "| M1" in capsys.readouterr().out


def test_decompose_incomplete(capsys):
    assert main(["decompose", "--utilities", str(EX_U / "exit_rate.json")]) == 2
    err = capsys.readouterr().err
    assert "{0,2}" in err and "{1,2}" in err and "bounds" in err


def test_decompose_schema(tmp_path):
    p = tmp_path / "u.json"
    p.write_text(json.dumps({"groups": ["a", "b"], "values": {"0": 1.0, "1": 2.0}}))
    assert main(["decompose", "--utilities", str(p)]) == 64
    p.write_text("{not json")
    assert main(["decompose", "--utilities", str(p)]) == 64
    assert main(["decompose", "--utilities", str(tmp_path / "absent.json")]) == 64


def test_usage_errors():
    assert main([]) == 64
    assert main(["frobnicate"]) == 64
    assert main(["decompose"]) == 64
    assert main(["decompose", "--utilities", TOY, "--format", "xlsx"]) == 64


def test_bounds_revenue(tmp_path):
    out = tmp_path / "b.csv"
    rc = main(["bounds", "--utilities", str(EX_U / "revenue_share_of_exports.json"),
               "--constraints", str(EX_C / "revenue_share_of_exports.A.json"), "--out", str(out), "--format", "csv"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "aggregate,bound,c_f,tau_a,tau_c"
    got = {line.split(",")[1]: [float(x) for x in line.split(",")[2:]] for line in lines[1:]}
    for key, pub in zip(("SLB", "SUB", "SMNS"), gz.REFERENCE["revenue_share_of_exports"]):
        np.testing.assert_allclose(got[key], pub, atol=0.03)


def test_bounds_job_turnover_infeasible(tmp_path, capsys):
    args = ["--utilities", str(EX_U / "job_turnover.json"), "--constraints", str(EX_C / "job_turnover.A.json")]
    assert main(["bounds", *args]) == 3
    assert "infeasible" in capsys.readouterr().out
    assert main(["smns", *args]) == 3


def test_bounds_oracle_collapse(tmp_path, rng):
    truth = random_table(rng, 3)
    u = tmp_path / "u.json"
    write_utilities(truth.hide([5]), u)
    v = truth.entries[5]
    c = tmp_path / "c.json"
    c.write_text(json.dumps([{"terms": [{"coalition": "0,2", "coef": 1}], "rhs": v},
                             {"terms": [{"coalition": "0,2", "coef": -1}], "rhs": -v}]))
    out = tmp_path / "o.csv"
    assert main(["bounds", "--utilities", str(u), "--constraints", str(c), "--out", str(out), "--format", "csv"]) == 0
    rows = [line.split(",")[2:] for line in out.read_text().splitlines()[1:]]
    assert rows[0] == rows[1] == rows[2]


def test_smns_output(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["smns", "--utilities", str(EX_U / "revenue_share_of_exports.json"),
               "--constraints", str(EX_C / "revenue_share_of_exports.A.json"), "--out", str(out), "--format", "csv"])
    assert rc == 0
    rows = parse_csv_table(out.read_text())
    assert [rows[g][0] for g in gz.GROUPS] == pytest.approx([0.175, 0.345, 0.98], abs=1e-3)
    assert "# method: smns" in out.read_text()


def test_globalization_constraints_command(tmp_path):
    out = tmp_path / "c.json"
    u = str(EX_U / "revenue_share_of_exports.json")
    assert main(["globalization-constraints", "--utilities", u, "--gmax", "1.5", "--out", str(out)]) == 0
    assert out.read_text() == (EX_C / "revenue_share_of_exports.B.json").read_text()
    assert main(["globalization-constraints", "--utilities", TOY, "--out", str(out)]) == 64


def test_roy_small_run(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    ta, tb = tmp_path / "a.csv", tmp_path / "b.csv"
    scen = str(data_path("roy_scenario.json"))
    for u, t in ((a, ta), (b, tb)):
        assert main(["roy", "--scenario", scen, "--draws", "20000", "--seed", "4",
                     "--emit-utilities", str(u), "--out", str(t), "--format", "csv"]) == 0
    assert a.read_bytes() == b.read_bytes() and ta.read_bytes() == tb.read_bytes()
    replay = tmp_path / "r.csv"
    assert main(["decompose", "--utilities", str(a), "--out", str(replay), "--format", "csv"]) == 0
    assert replay.read_text() == ta.read_text()


def test_roy_bad_inputs(tmp_path):
    scen = str(data_path("roy_scenario.json"))
    assert main(["roy", "--scenario", scen, "--draws", "0"]) == 64
    doc = json.loads(data_path("roy_scenario.json").read_text())
    doc["groups"]["beta"].append("rho")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    assert main(["roy", "--scenario", str(p), "--draws", "10"]) == 64


ADDITIVE = """
import sys
key = sys.stdin.read().strip()
addends = [{addends}]
print(sum(addends[int(k)] for k in key.split(",")))
"""


def value_cmd(tmp_path, addends, body=ADDITIVE):
    script = tmp_path / "value.py"
    script.write_text(body.format(addends=", ".join(map(repr, addends))))
    return f"{sys.executable} {script}"


def test_sample_additive(tmp_path):
    addends = [3.0, -1.5, 2.0, 0.7, 4.1]
    out = tmp_path / "s.csv"
    rc = main(["sample", "--groups", "5", "--q", "60", "--seed", "1", "--value-cmd", value_cmd(tmp_path, addends),
               "--out", str(out), "--format", "csv"])
    assert rc == 0
    rows = parse_csv_table(out.read_text())
    got = [rows[f"G{j}"][0] for j in range(5)]
    assert np.all(np.abs(np.array(got) - addends) <= 0.05 * np.abs(addends))
    assert "# distinct coalitions evaluated:" in out.read_text()


def test_sample_exhaustive_equals_decompose(tmp_path):
    # external process reading the toy table
    body = """
import json, sys
doc = json.load(open({path!r}))
key = sys.stdin.read().strip()
print(doc["grand"] if key == "0,1,2" else doc["values"][key])
""".replace("{path!r}", repr(TOY))
    script = tmp_path / "toy_value.py"
    script.write_text(body)
    s, d = tmp_path / "s.csv", tmp_path / "d.csv"
    assert main(["sample", "--groups", "3", "--q", "6", "--exhaustive", "--labels", "M1,M2,M3",
                 "--value-cmd", f"{sys.executable} {script}", "--out", str(s), "--format", "csv"]) == 0
    assert main(["decompose", "--utilities", TOY, "--out", str(d), "--format", "csv"]) == 0
    sv, dv = parse_csv_table(s.read_text()), parse_csv_table(d.read_text())
    assert sv == dv


def test_sample_deterministic(tmp_path):
    cmd = value_cmd(tmp_path, [1.0, 2.0, 3.0, 4.0])
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}.csv"
        assert main(["sample", "--groups", "4", "--q", "30", "--seed", "9", "--value-cmd", cmd, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_sample_errors(tmp_path, capsys):
    cmd = value_cmd(tmp_path, [1.0, 2.0, 3.0])
    assert main(["sample", "--groups", "3", "--q", "2", "--value-cmd", cmd]) == 64
    assert main(["sample", "--groups", "3", "--q", "9", "--labels", "a,b", "--value-cmd", cmd]) == 64
    failing = tmp_path / "fail.py"
    failing.write_text("import sys\nkey = sys.stdin.read().strip()\nprint(1.0)\nsys.exit(3 if key == '1' else 0)\n")
    assert main(["sample", "--groups", "3", "--q", "6", "--exhaustive", "--value-cmd", f"{sys.executable} {failing}"]) == 70
    assert "'1'" in capsys.readouterr().err
    noise = tmp_path / "noise.py"
    noise.write_text("print('hello')\n")
    assert main(["sample", "--groups", "3", "--q", "6", "--value-cmd", f"{sys.executable} {noise}"]) == 70
    assert main(["sample", "--groups", "3", "--q", "6", "--value-cmd", str(tmp_path / "missing-binary")]) == 70


def test_example_report_and_export(tmp_path):
    out = tmp_path / "DEV.md"
    assert main(["example-report", "--out", str(out)]) == 0
    assert "job_turnover" in out.read_text()
    assert main(["example-export", "--dir", str(tmp_path / "x")]) == 0
    assert (tmp_path / "x" / "utilities" / "real_income.json").read_text() == (EX_U / "real_income.json").read_text()


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "groupshapley.cli", "decompose", "--utilities",
                           str(EX_U / "exit_rate.json")], capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "groupshapley.cli", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 64


def test_negative_zero_serialized_plainly():
    from groupshapley.io import format_float

    assert format_float(-0.0) == "0"
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(1 / 3)) == 1 / 3
