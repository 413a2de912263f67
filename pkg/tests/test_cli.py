"""Command-line surface: flags, formats, exit codes, determinism."""

import csv
import io
import json

import pytest

from stochenum.cli import main
from stochenum.estimators import ExplicitDistribution
from stochenum.posets import random_poset, save_poset
from stochenum.verify import check_unbiasedness
from stochenum.tree import fixture_example_tree


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_gen_poset_deterministic(tmp_path, capsys):
    out1 = tmp_path / "a.poset"
    out2 = tmp_path / "b.poset"
    code1, text1, _ = run_cli(capsys, "--seed", "7", "gen-poset", "--n", "12", "--out", str(out1))
    code2, text2, _ = run_cli(capsys, "--seed", "7", "gen-poset", "--n", "12", "--out", str(out2))
    assert code1 == code2 == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert text1.replace("a.poset", "b.poset") == text2
    assert "linear extensions:" in text1


def test_gen_poset_extreme_probabilities(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "gen-poset", "--n", "3", "--p", "0", "--out", str(tmp_path / "anti"))
    assert code == 0 and "linear extensions: 6" in out
    code, out, _ = run_cli(capsys, "gen-poset", "--n", "3", "--p", "1", "--out", str(tmp_path / "chain"))
    assert code == 0 and "linear extensions: 1" in out


def test_exact_fixture_and_methods(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "exact", "--fixture", "poset-fig3", "--method", "both")
    assert code == 0
    assert "dp: 7" in out and "tree: 7" in out

    chain = tmp_path / "chain.poset"
    save_poset(random_poset(10, 1.0, 1), chain)
    code, out, _ = run_cli(capsys, "exact", "--poset", str(chain))
    assert code == 0 and "dp: 1" in out

    anti = tmp_path / "anti.poset"
    save_poset(random_poset(8, 0.0, 1), anti)
    code, out, _ = run_cli(capsys, "exact", "--poset", str(anti), "--method", "both")
    assert code == 0 and "dp: 40320" in out


def test_exact_cap_exit_code(tmp_path, capsys):
    big = tmp_path / "big.poset"
    save_poset(random_poset(30, 0.3, 1), big)
    code, _, err = run_cli(capsys, "exact", "--poset", str(big))
    assert code == 3
    assert "cap" in err


def test_bad_poset_file_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.poset"
    bad.write_text("3\n0 1\n1 0\n")
    code, _, err = run_cli(capsys, "exact", "--poset", str(bad))
    assert code == 2
    assert "line" in err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--fixture", "nope"])
    assert exc.value.code == 2


def test_estimate_fixture_summary(capsys):
    code, out, _ = run_cli(
        capsys, "--seed", "5", "estimate",
        "--fixture", "example", "--budget", "2", "--runs", "4000",
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    row = rows[0]
    assert row["exact"] == "14"
    mean = float(row["mean"])
    stderr = float(row["stderr"])
    assert abs(mean - 14.0) <= 4 * stderr


def test_estimate_formats_encode_same_data(capsys):
    args = ("--seed", "3", "estimate", "--fixture", "example", "--budget", "2", "--runs", "500")
    code, out_csv, _ = run_cli(capsys, "--format", "csv", *args)
    code2, out_json, _ = run_cli(capsys, "--format", "json-lines", *args)
    assert code == code2 == 0
    csv_row = next(csv.DictReader(io.StringIO(out_csv)))
    json_row = json.loads(out_json)
    assert {k: str(v) for k, v in json_row.items()} == csv_row


def test_estimate_budget1_sibling_weight_equals_uniform(tmp_path, capsys):
    poset = tmp_path / "p.poset"
    save_poset(random_poset(9, 0.2, 13), poset)
    base = ("--seed", "21", "estimate", "--poset", str(poset), "--budget", "1", "--runs", "800")
    _, out_uniform, _ = run_cli(capsys, *base, "--importance", "uniform")
    _, out_f1, _ = run_cli(capsys, *base, "--importance", "1")
    row_u = next(csv.DictReader(io.StringIO(out_uniform)))
    row_f = next(csv.DictReader(io.StringIO(out_f1)))
    row_u.pop("importance")
    row_f.pop("importance")
    assert row_u == row_f


def test_estimate_ideal_importance_zero_variance(capsys):
    code, out, _ = run_cli(
        capsys, "estimate", "--fixture", "example", "--budget", "2",
        "--importance", "ideal", "--runs", "200",
    )
    assert code == 0
    row = next(csv.DictReader(io.StringIO(out)))
    assert float(row["rel_variance"]) <= 1e-12


def test_estimate_labeled_fixture(capsys):
    code, out, _ = run_cli(
        capsys, "estimate", "--fixture", "example-importance", "--budget", "2", "--runs", "400",
    )
    assert code == 0
    row = next(csv.DictReader(io.StringIO(out)))
    assert row["exact"] == "14"


def test_estimate_poset_importance_on_plain_tree_rejected(capsys):
    code, _, err = run_cli(
        capsys, "estimate", "--fixture", "example", "--importance", "2", "--runs", "10",
    )
    assert code == 2
    assert "poset" in err


def test_sweep_csv_and_rerun_identical(tmp_path, capsys):
    args = (
        "--seed", "9", "sweep", "--kind", "B", "--n", "5", "--values", "1,2,3",
        "--posets", "6", "--estimates", "12",
    )
    code, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert code == code2 == 0
    assert out1 == out2
    parsed = list(csv.reader(io.StringIO(out1)))
    assert len(parsed) == 1 + 3 * 4


def test_sweep_out_writes_companion(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, text, _ = run_cli(
        capsys, "--seed", "2", "sweep", "--kind", "n", "--values", "4,5", "--budget", "2",
        "--posets", "4", "--estimates", "8", "--out", str(out), "--compare",
    )
    assert code == 0
    assert out.exists() and (tmp_path / "sweep.csv.gnuplot.dat").exists()
    assert "beats uniform" in text
    header = out.read_text().splitlines()[0]
    assert header == "kind,n,B,importance,posets,estimates_per_poset,mean_rel_var,stderr,guard_frac,seconds"


def test_sweep_json_lines(capsys):
    code, out, _ = run_cli(
        capsys, "--format", "json-lines", "--seed", "2", "sweep", "--kind", "n",
        "--values", "4", "--budget", "2", "--posets", "4", "--estimates", "8",
    )
    assert code == 0
    rows = [json.loads(line) for line in out.strip().splitlines()]
    assert len(rows) == 4
    assert {r["importance"] for r in rows} == {"uniform", "f1", "f2", "f3"}


def test_threads_env_fallback(monkeypatch, capsys):
    monkeypatch.setenv("SE_COUNT_THREADS", "2")
    code, out, _ = run_cli(
        capsys, "--seed", "4", "estimate", "--fixture", "example", "--budget", "2", "--runs", "600",
    )
    assert code == 0
    monkeypatch.setenv("SE_COUNT_THREADS", "1")
    code2, out2, _ = run_cli(
        capsys, "--seed", "4", "estimate", "--fixture", "example", "--budget", "2", "--runs", "600",
    )
    assert code2 == 0
    assert out == out2  # worker count never changes results


def test_verify_trivial_and_small(capsys):
    code, out, _ = run_cli(capsys, "verify", "--max-n", "1", "--posets", "2")
    assert code == 0
    assert "all 6 checks passed" in out


def test_verify_bounds_export(tmp_path, capsys):
    out = tmp_path / "bounds.csv"
    code, _, _ = run_cli(
        capsys, "verify", "--max-n", "3", "--posets", "2", "--out", str(out),
    )
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith("instance,budget,importance,variance,cv2")


def test_corrupted_distribution_fails_unbiasedness():
    # a lying candidate table (valid probabilities, wrong shape) must be caught
    t = fixture_example_tree()
    table = {
        ("b", "c"): [(("b", "c"), 1)],
        ("d", "e", "f"): [(("d", "e"), "2/3"), (("d", "f"), "1/6"), (("e", "f"), "1/6")],
        ("g", "h", "i"): [(("g", "h"), "1/3"), (("g", "i"), "1/3"), (("h", "i"), "1/3")],
        ("g", "j"): [(("g", "j"), 1)],
        ("h", "i", "j"): [(("h", "i"), "1/3"), (("h", "j"), "1/3"), (("i", "j"), "1/3")],
        ("k", "l"): [(("k", "l"), 1)],
        ("k", "l", "m"): [(("k", "l"), "1/3"), (("k", "m"), "1/3"), (("l", "m"), "1/3")],
        ("m",): [(("m",), 1)],
        ("k", "l", "n"): [(("k", "l"), "1/3"), (("k", "n"), "1/3"), (("l", "n"), "1/3")],
        ("m", "n"): [(("m", "n"), 1)],
        ("n",): [(("n",), 1)],
    }
    # the lying table reports 1/3 each while the walk would sample 2/3-1/6-1/6;
    # for the enumeration oracle the reported probabilities ARE the model, so
    # corrupt the reported ones against the level-factor formula instead
    class Lying(ExplicitDistribution):
        def probability(self, succ, nodes, budget):
            p = super().probability(succ, nodes, budget)
            return p * 2 if tuple(sorted(nodes)) == ("d", "e") else p

        def support(self, succ, budget):
            for nodes, p in super().support(succ, budget):
                yield nodes, self.probability(succ, nodes, budget)

    res = check_unbiasedness([("fixture", t, [("lying", Lying(table))])], (2,), 200_000)
    assert not res.passed
