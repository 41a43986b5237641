import json

import numpy as np
import pytest

from lattice_calderon import io
from lattice_calderon.cli import main


def run(*args):
    return main([str(a) for a in args])


def test_pipeline(tmp_path, capsys):
    p, d, r, c = (tmp_path / f for f in ("p.json", "d.json", "r.json", "rep.csv"))
    assert run("generate", "--dim", 3, "--n", 2, "--dist", "1,2", "--seed", 7, "-o", p) == 0
    assert len(json.loads(p.read_text())["edges"]) == 36
    assert run("dtn", "-i", p, "-o", d) == 0
    assert run("reconstruct", "-i", d, "-o", r) == 0
    assert run("verify", "-i", p, "--recon", r, "-o", c) == 0
    header = c.read_text().splitlines()[0].split(",")
    assert header == io.ERROR_COLUMNS
    _, g, _ = io.read_problem(p)
    _, rep, _ = io.read_reconstruction(r)
    assert np.abs(rep.estimates - g).max() <= 1e-8


def test_generate_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        run("generate", "--dim", 3, "--n", 2, "--seed", 7, "-o", path)
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_nonpositive_lower_bound(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("generate", "--dim", 3, "--n", 2, "--dist", "0,1", "-o", tmp_path / "x.json")
    assert exc.value.code == 2


def test_generate_rejects_bad_lattice(tmp_path, capsys):
    assert run("generate", "--dim", 1, "--n", 2, "-o", tmp_path / "x.json") == 1


def test_dtn_closed_form(tmp_path):
    from lattice_calderon.lattice import build_lattice

    lat = build_lattice(2, 1)
    p, d = tmp_path / "p.json", tmp_path / "d.json"
    io.write_problem(p, lat, np.ones(lat.n_edges))
    assert run("dtn", "-i", p, "-o", d) == 0
    M = np.array(json.loads(d.read_text())["matrix"])
    assert np.allclose(M, 0.25 - np.eye(4))


def test_reconstruct_records_kernel_dims(tmp_path):
    p, d, r1, r2 = (tmp_path / f for f in ("p.json", "d.json", "r1.json", "r2.json"))
    run("generate", "--dim", 3, "--n", 3, "-o", p)
    run("dtn", "-i", p, "-o", d)
    assert run("reconstruct", "-i", d, "--corners", "origin", "-o", r1) == 0
    assert run("reconstruct", "-i", d, "--tol", "1e-6", "-o", r2) == 0
    for r in (r1, r2):
        for s in json.loads(r.read_text())["slices"]:
            assert {"kernel_dim_numeric", "kernel_dim_expected"} <= set(s)
    assert {tuple(e["corner"]) for e in json.loads(r1.read_text())["edges"]} == {(0, 0, 0)}


def test_verify_lattice_mismatch(tmp_path, capsys):
    p2, p3, d3, r3 = (tmp_path / f for f in ("p2.json", "p3.json", "d3.json", "r3.json"))
    run("generate", "--dim", 3, "--n", 2, "-o", p2)
    run("generate", "--dim", 3, "--n", 3, "-o", p3)
    run("dtn", "-i", p3, "-o", d3)
    run("reconstruct", "-i", d3, "-o", r3)
    code = run("verify", "-i", p2, "--recon", r3, "-o", tmp_path / "x.csv")
    assert code != 0
    assert "lattice mismatch" in capsys.readouterr().err


def test_missing_and_malformed_files(tmp_path, capsys):
    assert run("dtn", "-i", tmp_path / "nope.json", "-o", tmp_path / "d.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("reconstruct", "-i", bad, "-o", tmp_path / "r.json") == 2


def test_selftest(capsys):
    assert run("selftest", "--dim", 3, "--n", 2, "--seed", 0) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_study_small(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = run("study", "--n-list", "2..4", "-o", out)
    assert len(out.read_text().splitlines()) == 4
    assert "monotone trend" in capsys.readouterr().out
    assert code in (0, 1)
