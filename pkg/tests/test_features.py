import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barcodebias.features import (FeatureDescriptor, FeatureMatrix, build_matrix, default_registry,
                                  family_breakdown, feature_sidecar, kmer_frequencies,
                                  longest_homopolymer_runs, longest_tandem_repeat,
                                  melting_temperature, standardize, terminal_trimer_indicators,
                                  write_feature_tsv)
from barcodebias.io import Barcode, BarcodeLibrary

from conftest import random_library

seqs = st.text("ACGT", min_size=3, max_size=30)


def test_kmer_examples():
    assert kmer_frequencies("ACGT", 1) == {"A": 1, "C": 1, "G": 1, "T": 1}
    aa = kmer_frequencies("AAAA", 2)
    assert aa["AA"] == 3 and sum(aa.values()) == 3 and len(aa) == 16
    tri = kmer_frequencies("ACGCA", 3)
    assert {k: v for k, v in tri.items() if v} == {"ACG": 1, "CGC": 1, "GCA": 1}
    assert len(tri) == 64


def test_kmer_too_long():
    with pytest.raises(ValueError):
        kmer_frequencies("AC", 3)


@given(seqs, st.integers(1, 3))
def test_kmer_sum(seq, k):
    assert sum(kmer_frequencies(seq, k).values()) == len(seq) - k + 1


@pytest.mark.parametrize("seq,tm", [("ATAT", 8), ("GCGC", 16), ("ACGT", 12)])
def test_wallace(seq, tm):
    assert melting_temperature(seq) == tm


@given(st.integers(1, 40))
def test_wallace_linear(m):
    assert melting_temperature("ATGC" * m) == 12 * m


def test_melting_empty():
    with pytest.raises(ValueError):
        melting_temperature("")


def test_homopolymer_runs():
    runs = longest_homopolymer_runs("AAACCA")
    assert runs.lengths == {"A": 3, "C": 2, "G": 0, "T": 0}
    flat = longest_homopolymer_runs("ACGT")
    assert set(flat.lengths.values()) == {1} and set(flat.at_least_2.values()) == {0}
    g = longest_homopolymer_runs("GGGGG")
    assert g.lengths["G"] == 5 and g.at_least_2["G"] == 1 and g.at_least_3["G"] == 1


@pytest.mark.parametrize("seq,unit,m", [
    ("ATATAT", "AT", 3), ("ACGT", "CG", 1), ("TATAT", "AT", 2), ("GGGG", "AT", 0),
    ("ATCGATAT", "AT", 2),
])
def test_tandem(seq, unit, m):
    assert longest_tandem_repeat(seq, unit) == m


def test_terminal_trimers():
    first = terminal_trimer_indicators("ACGTTGGT", "first")
    assert first["ACG"] == 1 and sum(first.values()) == 1 and len(first) == 64
    last = terminal_trimer_indicators("ACGTTGGT", "last")
    assert last["GGT"] == 1 and sum(last.values()) == 1
    with pytest.raises(ValueError):
        terminal_trimer_indicators("AC", "first")


def test_registry_composition():
    reg = default_registry()
    assert len(reg) == 229
    assert len({d.name for d in reg}) == 229
    assert family_breakdown(reg) == {
        "kmer1": 4, "kmer2": 16, "kmer3": 64, "melting": 1, "homorun": 4, "homorun2": 4,
        "homorun3": 4, "tandem": 2, "first3": 65, "last3": 65,
    }


def _oracle_row(seq):
    """Feature row from the single-sequence functions, keyed by name."""
    row = {}
    for k in (1, 2, 3):
        row.update({f"freq_{m}": v for m, v in kmer_frequencies(seq, k).items()})
    row["tm_wallace"] = melting_temperature(seq)
    runs = longest_homopolymer_runs(seq)
    for b in "ACGT":
        row[f"run_{b}"] = runs.lengths[b]
        row[f"run2_{b}"] = runs.at_least_2[b]
        row[f"run3_{b}"] = runs.at_least_3[b]
    for u in ("AT", "CG"):
        row[f"tandem_{u}"] = longest_tandem_repeat(seq, u)
    for end, tri in (("first", seq[:3]), ("last", seq[-3:])):
        onehot = terminal_trimer_indicators(seq, end)
        row.update({f"{end}3_{m}": v for m, v in onehot.items()})
        row[f"{end}3_gc"] = sum(c in "GC" for c in tri)
    return row


@settings(max_examples=50, deadline=None)
@given(st.lists(seqs.filter(lambda s: len(s) >= 3), min_size=1, max_size=5).filter(
    lambda xs: len({len(x) for x in xs}) == 1))
def test_matrix_matches_single_sequence_functions(sequences):
    lib = BarcodeLibrary(tuple(Barcode(f"r{i}", s, 1.0) for i, s in enumerate(sequences)))
    fm = build_matrix(lib)
    for i, seq in enumerate(sequences):
        expected = _oracle_row(seq)
        assert [expected[n] for n in fm.names] == fm.values[i].tolist()


def test_default_matrix_shape_and_single_row():
    lib = random_library(30, 20)
    fm = build_matrix(lib)
    assert fm.shape == (30, 229)
    one = build_matrix(lib.subset([0]))
    assert one.shape == (1, 229) and np.isfinite(one.values).all()


def test_row_permutation_and_purity():
    lib = random_library(25, 20, seed=5)
    perm = np.random.default_rng(1).permutation(25)
    a = build_matrix(lib)
    b = build_matrix(lib.subset(perm))
    assert np.array_equal(a.values[perm], b.values)
    assert build_matrix(lib).values.tobytes() == a.values.tobytes()


def test_inapplicable_descriptor():
    lib = BarcodeLibrary((Barcode("a", "AC", 1.0),))
    with pytest.raises(ValueError, match="length"):
        build_matrix(lib)


def _single_column(values):
    return FeatureMatrix(np.asarray(values, float)[:, None], [FeatureDescriptor("x", "kmer1", "")])


def test_standardize_examples():
    z = standardize(_single_column([1, 2, 3]))
    # sigma = sqrt(2/3): (x - 2) / sigma
    np.testing.assert_allclose(z.values[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    const = standardize(_single_column([5, 5, 5]))
    assert const.constant_mask.tolist() == [True]
    assert const.values.tolist() == [[0.0], [0.0], [0.0]]
    unit = np.array([-1.224744871391589, 0.0, 1.224744871391589])
    again = standardize(_single_column(unit))
    np.testing.assert_allclose(again.values[:, 0], unit, atol=1e-12)
    with pytest.raises(ValueError):
        standardize(z)


def test_standardized_moments():
    fm = standardize(build_matrix(random_library(200, 20, seed=2)))
    means = fm.values.mean(axis=0)
    var = fm.values.var(axis=0)
    assert np.all(np.abs(means) < 1e-10)
    live = ~fm.constant_mask
    assert np.all(np.abs(var[live] - 1) < 1e-8)
    assert np.all(fm.values[:, ~live] == 0)


def test_export_tsv_and_sidecar():
    lib = random_library(4, 20)
    fm = build_matrix(lib)
    buf = io.StringIO()
    write_feature_tsv(fm, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split("\t")[1:] == fm.names
    assert [ln.split("\t")[0] for ln in lines[1:]] == lib.ids
    side = json.loads(json.dumps(feature_sidecar(standardize(fm))))
    assert side["n_columns"] == 229 and side["family_breakdown"]["kmer3"] == 64
    assert len(side["columns"]) == 229 and side["standardized"] is True
