"""Exact k-mer motifs scored by mutual information with binned read counts."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from . import kernels
from .features import FeatureDescriptor, FeatureMatrix, append_columns, build_matrix
from .io import ALPHABET, BarcodeLibrary

K_MIN, K_MAX = 3, 8
# permuted MI within this many bits of the observed value counts as a tie
MI_TIE_EPS = 1e-12


@dataclass(frozen=True)
class ExpressionBins:
    assignment: np.ndarray
    edges: np.ndarray
    n_bins: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_bins)


def bin_expression(counts, n_bins: int = 5) -> ExpressionBins:
    """Equal-frequency bins; equal values are ordered by input position."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.shape[0]
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if n < n_bins:
        raise ValueError(f"cannot form {n_bins} bins from {n} values")
    if not np.isfinite(counts).all():
        raise ValueError("counts must be finite")
    if np.all(counts == counts[0]):
        raise ValueError("all read counts are identical; cannot form expression bins")
    order = np.argsort(counts, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    assignment = ranks * n_bins // n
    starts = np.searchsorted(assignment[order], np.arange(n_bins))
    edges = np.empty(n_bins + 1)
    edges[:-1] = counts[order][starts]
    edges[-1] = counts[order][-1]
    return ExpressionBins(assignment, edges, n_bins)


@dataclass(frozen=True)
class JointTable:
    """2 x N_e counts; row 0 = motif present, row 1 = absent."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_vectors(cls, presence, bins: ExpressionBins | np.ndarray, n_bins: int | None = None):
        if isinstance(bins, ExpressionBins):
            n_bins, assignment = bins.n_bins, bins.assignment
        else:
            assignment = np.asarray(bins, dtype=np.int64)
            n_bins = n_bins or int(assignment.max()) + 1
        presence = np.asarray(presence, dtype=bool)
        present = np.bincount(assignment[presence], minlength=n_bins)
        absent = np.bincount(assignment[~presence], minlength=n_bins)
        return cls(np.vstack([present, absent]).astype(np.int64))


def mutual_information(table: JointTable) -> float:
    """Plug-in mutual information in bits."""
    counts = np.asarray(table.counts, dtype=np.int64)
    total = int(counts.sum())
    if total <= 0:
        raise ValueError("empty joint table")
    sizes = counts.sum(axis=0)
    return float(kernels.mi_bits(np.ascontiguousarray(counts[:1]), sizes, total)[0])


def entropy_bits(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def hypergeometric_moments(table: JointTable):
    """Mean and stddev of the present count per bin under random placement."""
    counts = np.asarray(table.counts, dtype=np.float64)
    n = counts.sum()
    n1 = counts[0].sum()
    nj = counts.sum(axis=0)
    mean = nj * n1 / n
    if n > 1:
        var = nj * (n1 / n) * (1 - n1 / n) * (n - nj) / (n - 1)
    else:
        var = np.zeros_like(nj)
    return mean, np.sqrt(np.maximum(var, 0.0))


def bin_zscores(table: JointTable) -> np.ndarray:
    """Hypergeometric z-score of the present count in each bin.

    Positive means over-represented. Bins with zero variance get 0; see
    ``degenerate_bins``.
    """
    if table.total <= 0:
        raise ValueError("empty joint table")
    mean, sd = hypergeometric_moments(table)
    present = np.asarray(table.counts[0], dtype=np.float64)
    safe = np.where(sd > 0, sd, 1.0)
    return np.where(sd > 0, (present - mean) / safe, 0.0)


def degenerate_bins(table: JointTable) -> np.ndarray:
    return hypergeometric_moments(table)[1] == 0


def _kmer_code(kmer: str) -> int:
    code = 0
    for ch in kmer:
        code = code * 4 + ALPHABET.index(ch)
    return code


def _code_kmer(code: int, k: int) -> str:
    chars = []
    for _ in range(k):
        chars.append(ALPHABET[code & 3])
        code >>= 2
    return "".join(reversed(chars))


def _check_kmer(kmer: str, length: int | None = None):
    if not (K_MIN <= len(kmer) <= K_MAX):
        raise ValueError(f"motif length must be in {K_MIN}..{K_MAX}, got {len(kmer)}")
    if set(kmer) - set(ALPHABET):
        raise ValueError(f"motif {kmer!r} has characters outside ACGT")
    if length is not None and len(kmer) > length:
        raise ValueError(f"motif {kmer!r} longer than barcodes (L={length})")


def presence_profile(lib: BarcodeLibrary, kmer: str) -> np.ndarray:
    """Boolean vector: does each barcode contain ``kmer``?"""
    kmer = kmer.upper()
    _check_kmer(kmer, lib.L)
    return np.fromiter((kmer in s for s in lib.sequences), dtype=bool, count=lib.N)


@dataclass
class MotifResult:
    kmer: str
    presence: np.ndarray = field(repr=False)
    mi_bits: float
    bin_zscores: np.ndarray = field(repr=False)
    p_value: float | None = None
    n_perm: int = 0

    @property
    def support(self) -> int:
        return int(self.presence.sum())

    @property
    def k(self) -> int:
        return len(self.kmer)


def _rank_key(m: MotifResult):
    return (-m.mi_bits, m.kmer)


def scan_kmers(lib: BarcodeLibrary, bins: ExpressionBins, k_min: int = K_MIN,
               k_max: int = K_MAX) -> list[MotifResult]:
    """Score every k-mer present in some but not all barcodes, best first."""
    if not (K_MIN <= k_min <= k_max <= K_MAX):
        raise ValueError(f"k range must lie within {K_MIN}..{K_MAX}")
    n = lib.N
    if bins.assignment.shape[0] != n:
        raise ValueError("bins do not match library size")
    enc = lib.encoded()
    sizes = bins.sizes.astype(np.int64)
    nb = bins.n_bins
    results = []
    for k in range(k_min, min(k_max, lib.L or 0) + 1):
        offsets, seqs = kernels.kmer_incidence(enc, k)
        support = np.diff(offsets)
        n_codes = support.shape[0]
        entry_code = np.repeat(np.arange(n_codes, dtype=np.int64), support)
        present = np.bincount(entry_code * nb + bins.assignment[seqs],
                              minlength=n_codes * nb).reshape(n_codes, nb)
        codes = np.flatnonzero((support > 0) & (support < n))
        if codes.size == 0:
            continue
        present = np.ascontiguousarray(present[codes])
        mi = kernels.mi_bits(present, sizes, n)
        # vectorized hypergeometric z-scores
        n1 = support[codes].astype(np.float64)[:, None]
        mean = sizes[None, :] * n1 / n
        var = sizes[None, :] * (n1 / n) * (1 - n1 / n) * (n - sizes[None, :]) / (n - 1)
        sd = np.sqrt(np.maximum(var, 0.0))
        z = np.where(sd > 0, (present - mean) / np.where(sd > 0, sd, 1.0), 0.0)
        for row, code in enumerate(codes):
            presence = np.zeros(n, dtype=bool)
            presence[seqs[offsets[code]:offsets[code + 1]]] = True
            results.append(MotifResult(_code_kmer(int(code), k), presence, float(mi[row]), z[row]))
    results.sort(key=_rank_key)
    return results


def _kmer_seed(seed: int, kmer: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(len(kmer), _kmer_code(kmer)))


PERM_CHUNK = 1 << 16


def permutation_pvalue_presence(presence, bins: ExpressionBins, n_perm: int, seed,
                                stop_above: float | None = None,
                                method: str = "tables") -> tuple[float, int]:
    """Add-one permutation p-value for a fixed presence vector.

    ``method="tables"`` draws the permuted joint table directly from its
    multivariate hypergeometric law, which is exactly the distribution the
    table has under a uniform shuffle of the bin labels; ``"shuffle"``
    permutes the labels literally. ``seed`` is an int or a SeedSequence;
    each chunk of permutations gets its own child stream.

    With ``stop_above``, sampling halts once the p-value is certain to exceed
    it, and the p-value over the permutations drawn so far is returned.
    Returns ``(p_value, permutations_used)``.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    presence = np.asarray(presence, dtype=bool)
    sizes = bins.sizes.astype(np.int64)
    n = presence.shape[0]
    support = int(presence.sum())
    observed = mutual_information(JointTable.from_vectors(presence, bins))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed) & (2**64 - 1))
    n_chunks = -(-n_perm // PERM_CHUNK)
    exceed = 0
    done = 0
    for child in ss.spawn(n_chunks):
        rng = np.random.default_rng(child)
        size = min(PERM_CHUNK, n_perm - done)
        if method == "tables":
            tables = rng.multivariate_hypergeometric(sizes, support, size=size, method="marginals")
        elif method == "shuffle":
            tables = np.empty((size, bins.n_bins), dtype=np.int64)
            for i in range(size):
                perm = rng.permutation(bins.assignment)
                tables[i] = np.bincount(perm[presence], minlength=bins.n_bins)
        else:
            raise ValueError(f"unknown method {method!r}")
        mi = kernels.mi_bits(np.ascontiguousarray(tables, dtype=np.int64), sizes, n)
        exceed += int(np.count_nonzero(mi >= observed - MI_TIE_EPS))
        done += size
        if stop_above is not None and (1 + exceed) / (1 + n_perm) > stop_above:
            break
    return (1 + exceed) / (1 + done), done


def permutation_pvalue(lib: BarcodeLibrary, kmer: str, bins: ExpressionBins, n_perm: int,
                       seed: int) -> float:
    """Permutation p-value of ``kmer``'s MI; the stream depends on (seed, kmer)."""
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    presence = presence_profile(lib, kmer)
    p, _ = permutation_pvalue_presence(presence, bins, n_perm, _kmer_seed(seed, kmer.upper()))
    return p


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0


def redundancy_filter(ranked: Sequence[MotifResult], threshold: float = 0.8) -> list[MotifResult]:
    """Greedy: keep a motif unless it overlaps a kept one with Jaccard >= threshold."""
    kept: list[MotifResult] = []
    for m in ranked:
        if all(jaccard(m.presence, k.presence) < threshold for k in kept):
            kept.append(m)
    return kept


def bonferroni_alpha(n_candidates: int, family_alpha: float = 0.01) -> float:
    return family_alpha / max(n_candidates, 1)


def auto_n_perm(alpha: float) -> int:
    """Smallest permutation count whose best attainable p-value is <= alpha."""
    return max(1, math.ceil(1.0 / alpha))


@dataclass
class MotifSelection:
    candidates: list[MotifResult]
    selected: list[MotifResult]
    tested: list[MotifResult]
    alpha: float
    n_perm: int


def select_motifs(lib: BarcodeLibrary, bins: ExpressionBins, *, k_min: int = K_MIN,
                  k_max: int = K_MAX, alpha: float | None = None, family_alpha: float = 0.01,
                  n_perm: int | None = None, jaccard_threshold: float = 0.8,
                  max_tests: int = 50, max_motifs: int | None = None, seed: int = 0,
                  threads: int = 1) -> MotifSelection:
    """Scan, test and de-duplicate motifs.

    Walks the MI ranking, skipping candidates redundant with an accepted
    motif, and accepts those whose permutation p-value is <= ``alpha``
    (default: ``family_alpha`` Bonferroni-split over all candidates). At most
    ``max_tests`` p-values are computed. The outcome does not depend on
    ``threads``.
    """
    candidates = scan_kmers(lib, bins, k_min, k_max)
    if alpha is None:
        alpha = bonferroni_alpha(len(candidates), family_alpha)
    if n_perm is None:
        n_perm = auto_n_perm(alpha)
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")

    def test(m: MotifResult) -> MotifResult:
        p, used = permutation_pvalue_presence(m.presence, bins, n_perm, _kmer_seed(seed, m.kmer),
                                              stop_above=alpha)
        return replace(m, p_value=p, n_perm=used)

    selected: list[MotifResult] = []
    tested: list[MotifResult] = []
    idx = 0
    batch = max(1, threads)
    with ThreadPoolExecutor(max_workers=batch) as pool:
        while idx < len(candidates) and len(tested) < max_tests:
            if max_motifs is not None and len(selected) >= max_motifs:
                break
            wave = []
            while idx < len(candidates) and len(wave) < min(batch, max_tests - len(tested)):
                m = candidates[idx]
                idx += 1
                if all(jaccard(m.presence, s.presence) < jaccard_threshold for s in selected):
                    wave.append(m)
            # decisions are replayed in rank order, so parallel waves match a serial walk
            for m in pool.map(test, wave):
                if len(tested) >= max_tests or (max_motifs is not None and len(selected) >= max_motifs):
                    break
                if any(jaccard(m.presence, s.presence) >= jaccard_threshold for s in selected):
                    continue
                tested.append(m)
                if m.p_value <= alpha:
                    selected.append(m)
    return MotifSelection(candidates, selected, tested, alpha, n_perm)


def motif_indicator_features(lib: BarcodeLibrary, motifs: Sequence[MotifResult | str],
                             matrix: FeatureMatrix | None = None) -> FeatureMatrix:
    """Append one 0/1 presence column per motif (family ``motif_indicator``)."""
    if not motifs:
        raise ValueError("no motifs given")
    kmers = [m if isinstance(m, str) else m.kmer for m in motifs]
    cols = []
    for kmer in kmers:
        pres = presence_profile(lib, kmer)
        if pres.all():
            raise ValueError(f"motif {kmer!r} is present in every barcode")
        cols.append(pres)
    descriptors = [FeatureDescriptor(f"motif_{k}", "motif_indicator", f"1 if barcode contains {k}")
                   for k in kmers]
    if matrix is None:
        matrix = build_matrix(lib, [])
    return append_columns(matrix, np.column_stack(cols).astype(np.float64), descriptors)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return repr(float(x))


def write_motif_report(motifs: Sequence[MotifResult], fh: IO[str], n_bins: int):
    header = ["kmer", "k", "support", "mi_bits", "p_value"] + [f"z_bin_{j}" for j in range(n_bins)]
    fh.write("\t".join(header) + "\n")
    for m in motifs:
        row = [m.kmer, str(m.k), str(m.support), _fmt(m.mi_bits), _fmt(m.p_value)]
        row += [_fmt(z) for z in m.bin_zscores]
        fh.write("\t".join(row) + "\n")
