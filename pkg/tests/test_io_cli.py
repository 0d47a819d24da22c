import json

import numpy as np
import pytest

from compadre import io
from compadre.cli import main
from compadre.core import FitConfig, fit, predict
from compadre.errors import InputError


def test_parse_config_values():
    text = """
    # comment
    mode = PAdRe
    folds = 4
    tol = 1e-3
    lambda1 = cv
    lambda2 = 0.1, 0.2
    lambda4 = 0.05   # trailing
    select_once = yes
    responses = y1, y2
    """
    opts = io.parse_config(text)
    assert opts["mode"] == "PAdRe" and opts["folds"] == 4 and opts["tol"] == 1e-3
    assert opts["lambda1"] == "cv" and opts["lambda2"] == [0.1, 0.2] and opts["lambda4"] == 0.05
    assert opts["select_once"] is True and opts["responses"] == ["y1", "y2"]
    assert io.fit_config_from(opts).mode == "padre"


@pytest.mark.parametrize("text", ["bogus = 1", "folds = 2\nfolds = 3", "folds = two",
                                  "lambda1 = -1", "no equals sign", "select_once = maybe"])
def test_parse_config_rejects(text):
    with pytest.raises(InputError):
        io.parse_config(text)


def test_knot_count_maps_to_probabilities():
    cfg = io.fit_config_from({"knots": 4})
    np.testing.assert_allclose(cfg.knot_probs, [0.2, 0.4, 0.6, 0.8])
    with pytest.raises(InputError):
        io.fit_config_from({"folds": 1})


def test_csv_round_trip_is_exact(tmp_path, rng):
    data = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-8, 8, size=(7, 3))
    path = tmp_path / "t.csv"
    io.write_csv(path, ["a", "b", "c"], data)
    header, back = io.read_csv(path)
    assert header == ["a", "b", "c"]
    assert back.tobytes() == data.tobytes()


@pytest.mark.parametrize("content", ["", "a,b\n", "a,a\n1,2\n", "a,b\n1,\n", "a,b\n1,x\n",
                                     "a,b\n1,2,3\n", "a,b\n1,nan\n"])
def test_read_csv_rejects(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(InputError):
        io.read_csv(path)


def _toy(seed=0, n=120, p=4, Q=2):
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.uniform(-1, 1, size=(n, p))
    Y = 0.3 * rng.standard_normal((n, Q))
    Y[:, 0] += 2.0 * X[:, 0]
    return X, Y


def test_archive_round_trip_predicts_bitwise(tmp_path):
    X, Y = _toy()
    report = fit(Y, X, FitConfig(max_iters=2))
    io.save_archive(tmp_path / "m.json", report, ["y1", "y2"], ["a", "b", "c", "d"])
    loaded, responses, covariates = io.load_archive(tmp_path / "m.json")
    assert responses == ["y1", "y2"] and covariates == ["a", "b", "c", "d"]
    X_new = np.random.Generator(np.random.Philox(9)).uniform(-1.2, 1.2, size=(30, 4))
    assert predict(loaded, X_new).tobytes() == predict(report, X_new).tobytes()
    np.testing.assert_array_equal(loaded.labels, report.labels)


def test_load_archive_rejects_foreign_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(InputError):
        io.load_archive(path)
    path.write_text("{not json")
    with pytest.raises(InputError):
        io.load_archive(path)


def test_identity_precision_has_no_edges():
    assert io.network_edges(np.eye(3), ["a", "b", "c"]) == []


def test_two_node_edge_sign():
    P = np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert io.network_edges(P, ["a", "b"]) == [("a", "b", 0.5)]
    P[0, 1] = P[1, 0] = 1.0
    assert io.network_edges(P, ["a", "b"])[0][2] == -0.5


def test_three_node_partial_correlations():
    P = np.array([[4.0, 1.0, 0.0], [1.0, 1.0, -0.5], [0.0, -0.5, 1.0]])
    edges = io.network_edges(P, ["x", "y", "z"])
    # oracle: partial correlations from the inverse of the precision's inverse
    S = np.linalg.inv(P)
    K = np.linalg.inv(S)
    d = np.sqrt(np.diag(K))
    expected = [("x", "y", -K[0, 1] / (d[0] * d[1])), ("y", "z", -K[1, 2] / (d[1] * d[2]))]
    assert [e[:2] for e in edges] == [e[:2] for e in expected]
    np.testing.assert_allclose([e[2] for e in edges], [e[2] for e in expected], rtol=1e-12)


def test_network_text_formats():
    P = np.array([[1.0, -0.4, 0.2], [-0.4, 1.0, 0.0], [0.2, 0.0, 1.0]])
    names = ["a", "b", "c"]
    dot = io.network_dot(P, names)
    assert dot == io.network_dot(P, names)
    assert dot.startswith("graph precision {") and "color=red" in dot and "color=blue" in dot
    parsed = json.loads(io.network_json(P, names))
    assert parsed["nodes"] == names
    assert [(e["source"], e["target"], e["sign"]) for e in parsed["edges"]] == [
        ("a", "b", "positive"), ("a", "c", "negative")]


# ---------------------------------------------------------------- CLI

def _write_toy(tmp_path, n=150, seed=1):
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.uniform(-1, 1, size=(n, 3))
    y = 3.0 * X[:, 1] + 0.2 * rng.standard_normal(n)
    path = tmp_path / "toy.csv"
    io.write_csv(path, ["y", "a", "b", "c"], np.column_stack([y, X]))
    return path, X


def test_cli_fit_selects_single_linear_effect(tmp_path, capsys):
    data, _ = _write_toy(tmp_path)
    (tmp_path / "cfg").write_text("responses = y\n")
    assert main(["fit", str(data), "--config", str(tmp_path / "cfg"),
                 "--out", str(tmp_path / "m.json")]) == 0
    report, _, covariates = io.load_archive(tmp_path / "m.json")
    assert covariates == ["a", "b", "c"]
    codes = report.labels[:, 0].tolist()
    assert codes == [0, 1, 0]
    table = capsys.readouterr().out.splitlines()
    assert table[1].split()[1:] == ["N", "L", "N"]


def test_cli_modes_agree_for_one_response(tmp_path):
    data, _ = _write_toy(tmp_path)
    texts = []
    for mode in ("compadre", "padre"):
        cfg = tmp_path / f"{mode}.cfg"
        cfg.write_text(f"responses = y\nmode = {mode}\n")
        out = tmp_path / f"{mode}.json"
        assert main(["fit", str(data), "--config", str(cfg), "--out", str(out)]) == 0
        texts.append(out.read_text())
    assert texts[0] == texts[1]


def test_cli_predict_round_trip(tmp_path):
    data, X = _write_toy(tmp_path)
    (tmp_path / "cfg").write_text("responses = y\n")
    main(["fit", str(data), "--config", str(tmp_path / "cfg"), "--out", str(tmp_path / "m.json")])
    new = tmp_path / "new.csv"
    X_new = np.vstack([X[:5], [[-3.0, 2.5, 10.0]]])
    io.write_csv(new, ["c", "b", "a"], X_new[:, ::-1])
    assert main(["predict", str(tmp_path / "m.json"), str(new), "--out", str(tmp_path / "p.csv")]) == 0
    header, pred = io.read_csv(tmp_path / "p.csv")
    report, _, _ = io.load_archive(tmp_path / "m.json")
    assert header == ["pred_y"]
    np.testing.assert_array_equal(pred, predict(report, X_new))
    assert np.all(np.isfinite(pred))


def test_cli_predict_missing_column(tmp_path):
    data, X = _write_toy(tmp_path)
    (tmp_path / "cfg").write_text("responses = y\n")
    main(["fit", str(data), "--config", str(tmp_path / "cfg"), "--out", str(tmp_path / "m.json")])
    io.write_csv(tmp_path / "new.csv", ["a", "b"], X[:, :2])
    assert main(["predict", str(tmp_path / "m.json"), str(tmp_path / "new.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 2


def test_cli_input_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    (tmp_path / "cfg").write_text("responses = y\n")
    assert main(["fit", str(empty), "--config", str(tmp_path / "cfg"),
                 "--out", str(tmp_path / "m.json")]) == 2
    data, _ = _write_toy(tmp_path)
    (tmp_path / "bad").write_text("responses = y\nfolds = 1\n")
    assert main(["fit", str(data), "--config", str(tmp_path / "bad"),
                 "--out", str(tmp_path / "m.json")]) == 2
    assert main(["fit", str(data), "--out", str(tmp_path / "m.json")]) == 2


def test_cli_export_network(tmp_path):
    rng = np.random.Generator(np.random.Philox(4))
    X = rng.uniform(-1, 1, size=(120, 3))
    E = rng.multivariate_normal(np.zeros(3), [[1, .8, .5], [.8, 1, .8], [.5, .8, 1]], size=120)
    io.write_csv(tmp_path / "d.csv", ["y1", "y2", "y3", "a", "b", "c"], np.column_stack([E, X]))
    (tmp_path / "cfg").write_text("responses = y1, y2, y3\nmax_iters = 2\n")
    main(["fit", str(tmp_path / "d.csv"), "--config", str(tmp_path / "cfg"),
          "--out", str(tmp_path / "m.json")])
    for fmt in ("dot", "json"):
        out = tmp_path / f"net.{fmt}"
        assert main(["export-network", str(tmp_path / "m.json"), "--format", fmt,
                     "--out", str(out)]) == 0
        assert out.read_text()
    parsed = json.loads((tmp_path / "net.json").read_text())
    assert parsed["nodes"] == ["y1", "y2", "y3"] and parsed["edges"]
    assert main(["export-network", str(tmp_path / "m.json"), "--format", "png",
                 "--out", str(tmp_path / "x")]) == 2


def test_cli_simulate_single_replicate(tmp_path):
    args = ["simulate", "--n", "80", "--p", "5", "--q", "5", "--reps", "1", "--seed", "3",
            "--methods", "compadre"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    rows = (tmp_path / "a" / "replicates.csv").read_text().splitlines()
    assert len(rows) == 2
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("replicates.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("extra", [["--rho", "1.0"], ["--delta", "-1"], ["--reps", "0"],
                                   ["--methods", "ridge"], ["--shape", "7"], ["--n", "5"]])
def test_cli_simulate_rejects(tmp_path, extra):
    assert main(["simulate", "--out", str(tmp_path / "o")] + extra) == 2
