import json

import numpy as np
import pytest

from barcodebias.cli import main
from barcodebias.io import read_library, write_library
from barcodebias.synth import PlantedMotif, SynthSpec, generate_library

from conftest import random_library

FAST = ["--alpha", "1e-3", "--max-tests", "6", "--k-max", "7"]
FAST_LASSO = ["--n-lambda", "15", "--k-folds", "4"]


@pytest.fixture(scope="module")
def planted_tsv(tmp_path_factory):
    spec = SynthSpec(N=400, planted_motifs=(PlantedMotif("GATCCAG", 25.0, 0.3),), noise_sd=6.0,
                     seed=4)
    lib, _ = generate_library(spec)
    path = tmp_path_factory.mktemp("lib") / "planted.tsv"
    path.write_bytes(write_library(lib))
    return path


@pytest.fixture
def lib_tsv(tmp_path):
    path = tmp_path / "lib.tsv"
    path.write_bytes(write_library(random_library(80, 20, seed=1)))
    return path


def test_extract_outputs(lib_tsv, tmp_path):
    out = tmp_path / "x"
    assert main(["extract", "--input", str(lib_tsv), "--out", str(out)]) == 0
    header, *rows = (out / "features.tsv").read_text().splitlines()
    assert len(header.split("\t")) == 230 and len(rows) == 80
    side = json.loads((out / "features.json").read_text())
    assert len(side["columns"]) == 229
    out2 = tmp_path / "xs"
    assert main(["extract", "--input", str(lib_tsv), "--out", str(out2), "--standardize"]) == 0
    vals = np.loadtxt(out2 / "features.tsv", skiprows=1, usecols=range(1, 230), delimiter="\t")
    assert np.allclose(vals.mean(axis=0), 0, atol=1e-9)


def test_missing_input_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.tsv"
    assert main(["extract", "--input", str(missing), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert str(missing) in err and len(err.strip().splitlines()) == 1


def test_fasta_flag_on_tsv_reports_line(lib_tsv, tmp_path, capsys):
    assert main(["extract", "--input", str(lib_tsv), "--format", "fasta",
                 "--out", str(tmp_path / "o")]) == 2
    assert "line 1" in capsys.readouterr().err


@pytest.mark.parametrize("flag", [["--n-perm", "0"], ["--n-bins", "1"], ["--k-min", "9"],
                                  ["--alpha", "1.5"], ["--bogus"]])
def test_usage_errors(lib_tsv, tmp_path, flag):
    with pytest.raises(SystemExit) as info:
        main(["motifs", "--input", str(lib_tsv), "--out", str(tmp_path / "o"), *flag])
    assert info.value.code == 1
    assert not (tmp_path / "o").exists()


def test_motifs_top_row_is_planted(planted_tsv, tmp_path):
    out = tmp_path / "m"
    assert main(["motifs", "--input", str(planted_tsv), "--out", str(out), "--seed", "7", *FAST]) == 0
    rows = (out / "motifs.tsv").read_text().splitlines()
    assert rows[0].startswith("kmer\tk\tsupport\tmi_bits\tp_value")
    top = rows[1].split("\t")[0]
    assert top in "GATCCAG"  # the planted 7-mer or an identical-presence sub-word
    doc = json.loads((out / "motifs.json").read_text())
    assert doc["seed"] == 7 and doc["selected"][0] == top


def test_seeded_reruns_identical(lib_tsv, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["motifs", "--input", str(lib_tsv), "--out", str(out), "--seed", "7",
                     "--n-perm", "200", "--max-tests", "4"]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]


def test_fit_noiseless_recovery(tmp_path):
    lib = random_library(120, 12, seed=2)
    seqs = lib.sequences
    counts = [100 + 10 * s.count("A") - 5 * s.count("GC") for s in seqs]
    path = tmp_path / "lin.tsv"
    path.write_text("".join(f"r{i}\t{s}\t{c}\n" for i, (s, c) in enumerate(zip(seqs, counts))))
    out = tmp_path / "f"
    assert main(["fit", "--input", str(path), "--out", str(out), "--raw-counts",
                 "--lambda-ratio", "1e-4", "--n-lambda", "30", "--k-folds", "4"]) == 0
    doc = json.loads((out / "fit.json").read_text())
    assert doc["response"] == "raw count"
    r = [float(line.split("\t")[2]) for line in (out / "holdout.tsv").read_text().splitlines()[1:]
         if line.split("\t")[2] != "NA"]
    assert max(r) > 1 - 1e-6


def test_fit_null_data(tmp_path):
    lib = random_library(400, 16, seed=3)
    path = tmp_path / "null.tsv"
    path.write_bytes(write_library(lib))
    out = tmp_path / "f"
    assert main(["fit", "--input", str(path), "--out", str(out), *FAST_LASSO]) == 0
    doc = json.loads((out / "fit.json").read_text())
    r = doc["holdout_r_at_lambda_min"]
    assert r is None or abs(r) < 3 / np.sqrt(120)


def test_fit_with_motif_columns(lib_tsv, tmp_path):
    motifs = tmp_path / "motifs.tsv"
    motifs.write_text("kmer\tk\nACG\t3\nTTA\t3\n")
    out = tmp_path / "f"
    assert main(["fit", "--input", str(lib_tsv), "--out", str(out), "--motifs", str(motifs),
                 *FAST_LASSO]) == 0
    coef = (out / "coefficients.tsv").read_text().splitlines()
    assert len(coef) == 2 + 231
    assert json.loads((out / "fit.json").read_text())["n_features"] == 231


def test_pipeline_outputs(planted_tsv, tmp_path):
    out = tmp_path / "p"
    assert main(["pipeline", "--input", str(planted_tsv), "--out", str(out), *FAST, *FAST_LASSO,
                 "--count-threshold", "120"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"pipeline.json", "baseline_path.tsv", "augmented_path.tsv", "baseline_coefficients.tsv",
            "augmented_coefficients.tsv", "holdout_curves.tsv", "motifs.tsv",
            "motif_reads.tsv"} <= names
    doc = json.loads((out / "pipeline.json").read_text())
    assert doc["augmented"]["holdout_r_at_lambda_min"] > doc["baseline"]["holdout_r_at_lambda_min"]
    assert doc["motif_read_summary"][0]["threshold"] == 120
    assert "frac_above_threshold" in (out / "motif_reads.tsv").read_text().splitlines()[0]


def test_pipeline_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as info:
        main(["pipeline", "--help"])
    assert info.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for flag in ("--n-bins", "--k-min", "--k-max", "--n-perm", "--alpha", "--family-alpha",
                 "--jaccard-threshold", "--max-tests", "--max-motifs", "--n-lambda",
                 "--lambda-ratio", "--k-folds", "--split", "--raw-counts", "--tol", "--max-sweeps",
                 "--count-threshold", "--seed", "--threads", "--format"):
        assert flag in text
    assert text.count("(default:") >= 19


def test_synth_command(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"N": 1000, "L": 20, "seed": 1, "planted_motifs": [
        {"kmer": "ACGTAC", "effect": 2.0, "prevalence": 0.5}]}))
    a, b, c = (tmp_path / n for n in "abc")
    assert main(["synth", "--spec", str(spec), "--out", str(a)]) == 0
    assert main(["synth", "--spec", str(spec), "--out", str(b)]) == 0
    assert main(["synth", "--spec", str(spec), "--out", str(c), "--seed", "2"]) == 0
    assert (a / "library.tsv").read_bytes() == (b / "library.tsv").read_bytes()
    assert (a / "library.tsv").read_bytes() != (c / "library.tsv").read_bytes()
    truth = json.loads((a / "truth.json").read_text())
    assert 400 <= sum(truth["planted_motifs"][0]["realized_presence"]) <= 600
    assert read_library(a / "library.tsv").N == 1000


@pytest.mark.parametrize("content", ['{"N": 10, "planted_motifs": [{"kmer": "AC", "effect": 1, '
                                     '"prevalence": 0.5}]}', '[1, 2]', '{"N": ', '{"mystery": 1}'])
def test_synth_rejects_invalid_spec(tmp_path, content):
    spec = tmp_path / "spec.json"
    spec.write_text(content)
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2


def test_config_precedence(lib_tsv, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "n_perm": 150, "max_tests": 3}))
    monkeypatch.setenv("BARCODEBIAS_SEED", "99")
    base = ["motifs", "--input", str(lib_tsv), "--config", str(cfg)]
    assert main([*base, "--out", str(tmp_path / "c")]) == 0
    doc = json.loads((tmp_path / "c" / "motifs.json").read_text())
    assert doc["seed"] == 5 and doc["n_perm"] == 150
    assert main([*base, "--out", str(tmp_path / "f"), "--seed", "8"]) == 0
    assert json.loads((tmp_path / "f" / "motifs.json").read_text())["seed"] == 8
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(SystemExit) as info:
        main(["motifs", "--input", str(lib_tsv), "--out", str(tmp_path / "x"), "--config", str(bad)])
    assert info.value.code == 1


def test_env_seed_default(lib_tsv, tmp_path, monkeypatch):
    monkeypatch.setenv("BARCODEBIAS_SEED", "31")
    assert main(["motifs", "--input", str(lib_tsv), "--out", str(tmp_path / "e"),
                 "--n-perm", "50", "--max-tests", "2"]) == 0
    assert json.loads((tmp_path / "e" / "motifs.json").read_text())["seed"] == 31


def test_nonconvergence_exit_code(lib_tsv, tmp_path):
    assert main(["fit", "--input", str(lib_tsv), "--out", str(tmp_path / "n"), "--max-sweeps", "1",
                 "--tol", "1e-15", *FAST_LASSO]) == 3
