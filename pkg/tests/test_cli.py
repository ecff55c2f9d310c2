import json

import numpy as np
import pytest

from vecchaos import io
from vecchaos.chaos import random_kernel
from vecchaos.cli import main
from vecchaos.spectral import correlation

MEASURE = str(io.data_path("example_measure.json"))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_measure_roundtrip(tmp_path, example_measure):
    p = tmp_path / "m.json"
    io.save_measure(p, example_measure)
    back = io.load_measure(p)
    assert np.array_equal(back.masses, example_measure.masses)
    assert p.read_text() == io.data_path("example_measure.json").read_text()


def test_kernel_roundtrip(tmp_path, example_measure):
    f = random_kernel(example_measure.system, (1, 2), np.random.default_rng(0), density=0.2)
    p = tmp_path / "k.json"
    io.save_kernel(p, f)
    g = io.load_kernel(p, example_measure.system)
    assert g.colours == f.colours and np.array_equal(g.values, f.values)


def test_missing_cell_rejected(tmp_path):
    data = json.loads(io.data_path("example_measure.json").read_text())
    data["cells"].pop()
    p = tmp_path / "m.json"
    p.write_text(json.dumps(data))
    with pytest.raises(io.VecChaosError):
        io.load_measure(p)


def test_validate_shipped_measure(capsys):
    code, out, _ = run(capsys, "validate", "--measure", MEASURE)
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert len(rep["cells"]) == 16 and all(c["min_eigenvalue"] > 0 for c in rep["cells"])


def test_corrupt_measure_names_invariant(capsys, tmp_path):
    data = json.loads(io.data_path("example_measure.json").read_text())
    cell = next(c for c in data["cells"] if c["k"] == 3)
    cell["mass"][0][1] = [5.0, 0.0]
    cell["mass"][1][0] = [5.0, 0.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    code, out, err = run(capsys, "validate", "--measure", str(bad))
    assert code != 0
    assert json.loads(out)["first_failure"][0] == "psd"
    code, _, err = run(capsys, "sample", "--measure", str(bad), "--seed", "1", "--replicas", "10")
    rec = json.loads(err)
    assert code == 2 and rec["invariant"] == "psd" and rec["k"] == 3


def test_unreadable_inputs(capsys, tmp_path):
    code, _, err = run(capsys, "validate", "--measure", str(tmp_path / "nope.json"))
    assert code == 2 and "cannot read" in json.loads(err)["message"]
    (tmp_path / "x.json").write_text("{not json")
    code, _, err = run(capsys, "validate", "--measure", str(tmp_path / "x.json"))
    assert code == 2


def test_bad_seed_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--measure", MEASURE, "--seed", "-1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["sample", "--measure", MEASURE, "--seed", str(2**64)])


def test_correlation_command(capsys, example_measure):
    code, out, _ = run(capsys, "correlation", "--measure", MEASURE, "--lags", "0,1,2")
    rows = json.loads(out)["rows"]
    want = correlation(example_measure, [[0], [1], [2]])
    assert code == 0
    got = {(r["p"][0], r["j"], r["jp"]): r["value"] for r in rows}
    for i in range(3):
        for j in (1, 2):
            for jp in (1, 2):
                assert got[(i, j, jp)] == pytest.approx(want[i, j - 1, jp - 1], abs=1e-15)


def test_sample_is_byte_deterministic(capsys, tmp_path):
    outs = []
    for i in range(2):
        p = tmp_path / f"s{i}.json"
        code, _, _ = run(capsys, "sample", "--measure", MEASURE, "--seed", "18446744073709551615",
                         "--replicas", "2000", "--lags", "0,1", "--out", str(p))
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_verify_diagram_csv(capsys):
    code, out, _ = run(capsys, "verify-diagram", "--measure", MEASURE, "--n", "2", "--m", "1",
                       "--seed", "3", "--replicas", "3000", "--base-split", "2", "--format", "csv")
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    assert {"level", "mean_square_defect", "max_cell_mass", "ratio"} <= set(header)
    assert len(lines) == 4 and code == 0


def test_verify_ito_order_one(capsys):
    code, out, _ = run(capsys, "verify-ito", "--measure", MEASURE, "--n", "1", "--seed", "2",
                       "--replicas", "200")
    assert code == 0 and json.loads(out)["passed"]


@pytest.mark.parametrize("suite", ["expansion", "recursion", "shift"])
def test_verify_wick(capsys, suite):
    code, out, _ = run(capsys, "verify-wick", "--suite", suite, "--seed", "5", "--instances", "10")
    rep = json.loads(out)
    assert code == 0 and rep["passed"]


def test_chaos_moments(capsys, tmp_path, example_measure):
    f = random_kernel(example_measure.system, (1, 2), np.random.default_rng(1))
    k = tmp_path / "k.json"
    io.save_kernel(k, f)
    code, out, _ = run(capsys, "chaos-moments", "--measure", MEASURE, "--kernel", str(k),
                       "--seed", "4", "--replicas", "20000")
    assert code == 0 and json.loads(out)["passed"]


def test_limit_experiment_small(capsys, tmp_path):
    cfg = json.loads(io.data_path("long_memory.json").read_text())
    cfg.update(schedule=[2, 4], replicas=2000)
    cfg["model"]["cells_per_2pi"] = 4
    c = tmp_path / "c.json"
    c.write_text(json.dumps(cfg))
    outs = []
    for i in range(2):
        p = tmp_path / f"r{i}.json"
        code, _, _ = run(capsys, "limit-experiment", "--config", str(c), "--out", str(p),
                         "--csv", str(tmp_path / f"r{i}.csv"))
        assert code in (0, 1)
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert [r["N"] for r in rep["rows"]] == [2, 4]
    assert (tmp_path / "r0.csv").read_text().startswith("N,")
