"""Barcode sequence features and the design matrix built from them.

The default registry has 229 columns:

    kmer1      4   overlapping single-base counts            freq_A ...
    kmer2     16   overlapping dinucleotide counts           freq_AC ...
    kmer3     64   overlapping trinucleotide counts          freq_ACG ...
    melting    1   Wallace rule 2(A+T) + 4(G+C)              tm_wallace
    homorun    4   longest homopolymer run per base          run_A ...
    homorun2   4   1 if longest run >= 2                     run2_A ...
    homorun3   4   1 if longest run >= 3                     run3_A ...
    tandem     2   most consecutive AT / CG copies           tandem_AT, tandem_CG
    first3    65   one-hot leading trimer + its G/C count    first3_ACG ..., first3_gc
    last3     65   one-hot trailing trimer + its G/C count   last3_GGT ..., last3_gc

Motif indicator columns (family ``motif_indicator``) are appended later by
the motif module.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from itertools import product
from typing import IO, NamedTuple, Sequence

import numpy as np

from .io import ALPHABET, BarcodeLibrary

FAMILIES = (
    "kmer1", "kmer2", "kmer3", "melting", "homorun", "homorun2", "homorun3",
    "tandem", "first3", "last3", "motif_indicator",
)
TANDEM_UNITS = ("AT", "CG")
_MIN_LENGTH = {"kmer1": 1, "kmer2": 2, "kmer3": 3, "first3": 3, "last3": 3}


def all_kmers(k: int) -> list[str]:
    """All 4**k k-mers in lexicographic order (which is also code order)."""
    return ["".join(p) for p in product(ALPHABET, repeat=k)]


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    family: str
    definition: str

    def min_length(self) -> int:
        if self.family == "motif_indicator":
            return len(self.name.split("_", 1)[1])
        return _MIN_LENGTH.get(self.family, 1)


def default_registry() -> list[FeatureDescriptor]:
    reg = []
    for k in (1, 2, 3):
        for kmer in all_kmers(k):
            reg.append(FeatureDescriptor(
                f"freq_{kmer}", f"kmer{k}", f"overlapping occurrences of {kmer}"))
    reg.append(FeatureDescriptor("tm_wallace", "melting", "2*(#A+#T) + 4*(#G+#C) degC"))
    for base in ALPHABET:
        reg.append(FeatureDescriptor(f"run_{base}", "homorun", f"longest run of {base}"))
    for base in ALPHABET:
        reg.append(FeatureDescriptor(f"run2_{base}", "homorun2", f"1 if longest run of {base} >= 2"))
    for base in ALPHABET:
        reg.append(FeatureDescriptor(f"run3_{base}", "homorun3", f"1 if longest run of {base} >= 3"))
    for unit in TANDEM_UNITS:
        reg.append(FeatureDescriptor(
            f"tandem_{unit}", "tandem", f"max consecutive copies of {unit}"))
    for end, where in (("first3", "leading"), ("last3", "trailing")):
        for kmer in all_kmers(3):
            reg.append(FeatureDescriptor(f"{end}_{kmer}", end, f"1 if {where} trimer is {kmer}"))
        reg.append(FeatureDescriptor(f"{end}_gc", end, f"number of G/C in {where} trimer"))
    return reg


def family_breakdown(columns: Sequence[FeatureDescriptor]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for d in columns:
        counts[d.family] = counts.get(d.family, 0) + 1
    return counts


# --- single-sequence features -------------------------------------------------

def _check_seq(sequence: str):
    if not sequence:
        raise ValueError("empty sequence")


def kmer_frequencies(sequence: str, k: int) -> dict[str, int]:
    """Overlapping k-mer counts over all 4**k keys."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(sequence):
        raise ValueError(f"k={k} exceeds sequence length {len(sequence)}")
    counts = dict.fromkeys(all_kmers(k), 0)
    for i in range(len(sequence) - k + 1):
        counts[sequence[i:i + k]] += 1
    return counts


def melting_temperature(sequence: str) -> float:
    _check_seq(sequence)
    at = sequence.count("A") + sequence.count("T")
    gc = sequence.count("G") + sequence.count("C")
    return float(2 * at + 4 * gc)


class HomopolymerRuns(NamedTuple):
    lengths: dict[str, int]
    at_least_2: dict[str, int]
    at_least_3: dict[str, int]


def longest_homopolymer_runs(sequence: str) -> HomopolymerRuns:
    _check_seq(sequence)
    best = dict.fromkeys(ALPHABET, 0)
    run = 0
    prev = None
    for ch in sequence:
        run = run + 1 if ch == prev else 1
        prev = ch
        if run > best[ch]:
            best[ch] = run
    return HomopolymerRuns(
        best,
        {b: int(v >= 2) for b, v in best.items()},
        {b: int(v >= 3) for b, v in best.items()},
    )


def longest_tandem_repeat(sequence: str, unit: str) -> int:
    """Largest m such that ``unit * m`` occurs in ``sequence``."""
    _check_seq(sequence)
    m = 0
    while unit * (m + 1) in sequence:
        m += 1
    return m


def terminal_trimer_indicators(sequence: str, end: str) -> dict[str, int]:
    if len(sequence) < 3:
        raise ValueError("terminal trimers need a sequence of length >= 3")
    if end == "first":
        tri = sequence[:3]
    elif end == "last":
        tri = sequence[-3:]
    else:
        raise ValueError(f"end must be 'first' or 'last', not {end!r}")
    out = dict.fromkeys(all_kmers(3), 0)
    out[tri] = 1
    return out


# --- matrix -------------------------------------------------------------------

@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: list[FeatureDescriptor]
    column_means: np.ndarray = field(default=None)  # type: ignore[assignment]
    column_stddevs: np.ndarray = field(default=None)  # type: ignore[assignment]
    standardized: bool = False
    row_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError("values must be N x p with one descriptor per column")
        if not np.isfinite(self.values).all():
            raise ValueError("feature matrix contains NaN or infinite values")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names")
        if self.column_means is None or self.column_stddevs is None:
            if len(self.values):
                means, stds = _column_scale(self.values)
            else:
                means = stds = np.zeros(len(names))
            if self.column_means is None:
                self.column_means = means
            if self.column_stddevs is None:
                self.column_stddevs = stds

    @property
    def shape(self):
        return self.values.shape

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def constant_mask(self) -> np.ndarray:
        return self.column_stddevs == 0


def _column_scale(values: np.ndarray):
    means = values.mean(axis=0)
    stds = values.std(axis=0)
    # treat round-off spread around a repeated value as constant
    stds = np.where(stds <= 1e-12 * np.maximum(1.0, np.abs(means)), 0.0, stds)
    return means, stds


def standardize_columns(values: np.ndarray):
    """Center and scale to unit population variance.

    Returns ``(z, means, stddevs)``; constant columns get stddev 0 and become
    all-zero columns.
    """
    values = np.asarray(values, dtype=np.float64)
    means, stds = _column_scale(values)
    return apply_scaling(values, means, stds), means, stds


def apply_scaling(values: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    safe = np.where(stds > 0, stds, 1.0)
    z = (values - means) / safe
    z[:, stds == 0] = 0.0
    return z


def standardize(matrix: FeatureMatrix) -> FeatureMatrix:
    if matrix.standardized:
        raise ValueError("matrix is already standardized")
    z, means, stds = standardize_columns(matrix.values)
    return replace(matrix, values=z, column_means=means, column_stddevs=stds, standardized=True)


def _run_lengths(enc: np.ndarray) -> np.ndarray:
    """N x 4 longest homopolymer run per base."""
    n, length = enc.shape
    best = np.zeros((n, 4), dtype=np.int64)
    run = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for pos in range(length):
        if pos == 0:
            run[:] = 1
        else:
            run = np.where(enc[:, pos] == enc[:, pos - 1], run + 1, 1)
        cur = best[rows, enc[:, pos]]
        best[rows, enc[:, pos]] = np.maximum(cur, run)
    return best


def _tandem_counts(enc: np.ndarray, unit: str) -> np.ndarray:
    n, length = enc.shape
    u0, u1 = ALPHABET.index(unit[0]), ALPHABET.index(unit[1])
    copies = np.zeros((n, length + 2), dtype=np.int64)
    for pos in range(length - 2, -1, -1):
        hit = (enc[:, pos] == u0) & (enc[:, pos + 1] == u1)
        copies[:, pos] = np.where(hit, copies[:, pos + 2] + 1, 0)
    return copies.max(axis=1)


def _kmer_count_matrix(enc: np.ndarray, k: int) -> np.ndarray:
    n, length = enc.shape
    windows = length - k + 1
    codes = np.zeros((n, windows), dtype=np.int64)
    for shift in range(k):
        codes = (codes << 2) | enc[:, shift:shift + windows]
    size = 4 ** k
    flat = codes + (np.arange(n, dtype=np.int64) * size)[:, None]
    return np.bincount(flat.ravel(), minlength=n * size).reshape(n, size)


def _trimer_onehot(enc: np.ndarray, start: int) -> np.ndarray:
    codes = enc[:, start] * 16 + enc[:, start + 1] * 4 + enc[:, start + 2]
    out = np.zeros((enc.shape[0], 64), dtype=np.int64)
    out[np.arange(enc.shape[0]), codes] = 1
    return out


def _family_block(family: str, enc: np.ndarray) -> tuple[list[str], np.ndarray]:
    length = enc.shape[1]
    if family in ("kmer1", "kmer2", "kmer3"):
        k = int(family[-1])
        return [f"freq_{m}" for m in all_kmers(k)], _kmer_count_matrix(enc, k)
    if family == "melting":
        gc = ((enc == 1) | (enc == 2)).sum(axis=1)
        return ["tm_wallace"], (2 * (length - gc) + 4 * gc)[:, None]
    if family in ("homorun", "homorun2", "homorun3"):
        runs = _run_lengths(enc)
        if family == "homorun":
            return [f"run_{b}" for b in ALPHABET], runs
        t = int(family[-1])
        return [f"run{t}_{b}" for b in ALPHABET], (runs >= t).astype(np.int64)
    if family == "tandem":
        cols = np.column_stack([_tandem_counts(enc, u) for u in TANDEM_UNITS])
        return [f"tandem_{u}" for u in TANDEM_UNITS], cols
    if family in ("first3", "last3"):
        start = 0 if family == "first3" else length - 3
        onehot = _trimer_onehot(enc, start)
        tri = enc[:, start:start + 3]
        gc = ((tri == 1) | (tri == 2)).sum(axis=1)
        names = [f"{family}_{m}" for m in all_kmers(3)] + [f"{family}_gc"]
        return names, np.column_stack([onehot, gc])
    raise ValueError(f"family {family!r} cannot be computed from sequence alone")


def build_matrix(lib: BarcodeLibrary, registry: Sequence[FeatureDescriptor] | None = None) -> FeatureMatrix:
    """Raw (unstandardized) N x p feature matrix in registry order."""
    if registry is None:
        registry = default_registry()
    registry = list(registry)
    length = lib.L or 0
    for d in registry:
        if lib.N and d.min_length() > length:
            raise ValueError(f"feature {d.name!r} needs sequences of length >= {d.min_length()}")
    enc = lib.encoded().astype(np.int64)
    values = np.zeros((lib.N, len(registry)), dtype=np.float64)
    blocks: dict[str, dict[str, np.ndarray]] = {}
    for j, d in enumerate(registry):
        if d.family == "motif_indicator":
            from .motifs import presence_profile
            values[:, j] = presence_profile(lib, d.name.split("_", 1)[1])
            continue
        if d.family not in blocks:
            names, block = _family_block(d.family, enc) if lib.N else ([], None)
            blocks[d.family] = {nm: block[:, i] for i, nm in enumerate(names)}
        if lib.N:
            try:
                values[:, j] = blocks[d.family][d.name]
            except KeyError:
                raise ValueError(f"unknown feature {d.name!r} in family {d.family!r}") from None
    return FeatureMatrix(values, registry, row_ids=lib.ids)


def append_columns(matrix: FeatureMatrix, values: np.ndarray,
                   descriptors: Sequence[FeatureDescriptor]) -> FeatureMatrix:
    if matrix.standardized:
        raise ValueError("append to the raw matrix, then standardize")
    values = np.asarray(values, dtype=np.float64).reshape(matrix.shape[0], len(descriptors))
    return FeatureMatrix(
        np.hstack([matrix.values, values]),
        list(matrix.columns) + list(descriptors),
        row_ids=list(matrix.row_ids),
    )


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def write_feature_tsv(matrix: FeatureMatrix, fh: IO[str]):
    fh.write("id\t" + "\t".join(matrix.names) + "\n")
    ids = matrix.row_ids or [str(i) for i in range(matrix.shape[0])]
    for rid, row in zip(ids, matrix.values):
        fh.write(rid + "\t" + "\t".join(_fmt(v) for v in row) + "\n")


def feature_sidecar(matrix: FeatureMatrix) -> dict:
    return {
        "n_rows": int(matrix.shape[0]),
        "n_columns": int(matrix.shape[1]),
        "standardized": bool(matrix.standardized),
        "family_breakdown": family_breakdown(matrix.columns),
        "columns": [
            {
                "name": d.name,
                "family": d.family,
                "definition": d.definition,
                "mean": float(m),
                "stddev": float(s),
                "constant": bool(s == 0),
            }
            for d, m, s in zip(matrix.columns, matrix.column_means, matrix.column_stddevs)
        ],
    }


def write_feature_sidecar(matrix: FeatureMatrix, fh: IO[str]):
    json.dump(feature_sidecar(matrix), fh, indent=2)
    fh.write("\n")
