"""Synthetic barcode libraries with planted motif effects and known truth."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np

from .features import build_matrix, default_registry
from .io import ALPHABET, Barcode, BarcodeLibrary
from .motifs import K_MAX, K_MIN, presence_profile

MAX_SPLICE_RETRIES = 100


@dataclass(frozen=True)
class PlantedMotif:
    kmer: str
    effect: float
    prevalence: float


@dataclass(frozen=True)
class SynthSpec:
    N: int = 1000
    L: int = 20
    planted_motifs: tuple[PlantedMotif, ...] = ()
    base_coefficients: dict[str, float] = field(default_factory=dict)
    noise_sd: float = 1.0
    intercept: float = 100.0
    link: str = "identity"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "planted_motifs", tuple(
            m if isinstance(m, PlantedMotif) else PlantedMotif(**m) for m in self.planted_motifs))
        self.validate()

    def validate(self):
        if self.N < 1 or self.L < 1:
            raise ValueError("N and L must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.link not in ("identity", "exp"):
            raise ValueError(f"link must be 'identity' or 'exp', not {self.link!r}")
        for m in self.planted_motifs:
            if not K_MIN <= len(m.kmer) <= K_MAX:
                raise ValueError(f"planted motif {m.kmer!r} must have length {K_MIN}..{K_MAX}")
            if len(m.kmer) > self.L:
                raise ValueError(f"planted motif {m.kmer!r} is longer than L={self.L}")
            if set(m.kmer) - set(ALPHABET):
                raise ValueError(f"planted motif {m.kmer!r} has characters outside ACGT")
            if not 0 < m.prevalence < 1:
                raise ValueError(f"prevalence of {m.kmer!r} must lie in (0, 1)")
        known = {d.name for d in default_registry()}
        unknown = set(self.base_coefficients) - known
        if unknown:
            raise ValueError(f"unknown feature(s) in base_coefficients: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["planted_motifs"] = tuple(PlantedMotif(**m) for m in d.get("planted_motifs", ()))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown spec field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class GroundTruth:
    spec: SynthSpec
    planted_sets: dict[str, np.ndarray]
    realized_presence: dict[str, np.ndarray]
    linear_predictor: np.ndarray

    def to_json(self, ids) -> dict:
        spec = asdict(self.spec)
        return {
            "seed": self.spec.seed,
            "noise_sd": self.spec.noise_sd,
            "link": self.spec.link,
            "intercept": self.spec.intercept,
            "true_coefficients": dict(sorted(self.spec.base_coefficients.items())),
            "planted_motifs": [
                {
                    "kmer": m.kmer,
                    "effect": m.effect,
                    "prevalence": m.prevalence,
                    "planted_ids": [ids[i] for i in np.flatnonzero(self.planted_sets[m.kmer])],
                    "realized_presence": self.realized_presence[m.kmer].astype(int).tolist(),
                }
                for m in self.spec.planted_motifs
            ],
            "spec": spec,
        }


def generate_library(spec: SynthSpec) -> tuple[BarcodeLibrary, GroundTruth]:
    """Uniform random barcodes, planted motifs, and counts from a known model."""
    rng = np.random.default_rng(int(spec.seed) & (2**64 - 1))
    enc = rng.integers(0, 4, size=(spec.N, spec.L), dtype=np.uint8)
    occupied = np.zeros((spec.N, spec.L), dtype=bool)
    planted_sets = {}
    for m in spec.planted_motifs:
        k = len(m.kmer)
        code = np.array([ALPHABET.index(c) for c in m.kmer], dtype=np.uint8)
        size = int(round(m.prevalence * spec.N))
        chosen = np.sort(rng.choice(spec.N, size=size, replace=False))
        for i in chosen:
            for _ in range(MAX_SPLICE_RETRIES):
                pos = int(rng.integers(0, spec.L - k + 1))
                if not occupied[i, pos:pos + k].any():
                    break
            else:
                raise ValueError(
                    f"could not place {m.kmer!r} in record {i} without overlapping another "
                    f"planted motif after {MAX_SPLICE_RETRIES} draws")
            enc[i, pos:pos + k] = code
            occupied[i, pos:pos + k] = True
        mask = np.zeros(spec.N, dtype=bool)
        mask[chosen] = True
        planted_sets[m.kmer] = mask

    alphabet = np.frombuffer(ALPHABET.encode(), dtype=np.uint8)
    seqs = [alphabet[row].tobytes().decode() for row in enc]
    width = len(str(spec.N - 1))
    ids = [f"syn{i:0{width}d}" for i in range(spec.N)]
    skeleton = BarcodeLibrary(tuple(Barcode(i, s, 0.0) for i, s in zip(ids, seqs)))

    eta = np.full(spec.N, float(spec.intercept))
    if spec.base_coefficients:
        names = sorted(spec.base_coefficients)
        registry = [d for d in default_registry() if d.name in names]
        fm = build_matrix(skeleton, registry)
        coefs = np.array([spec.base_coefficients[d.name] for d in registry])
        eta += fm.values @ coefs
    realized = {}
    for m in spec.planted_motifs:
        realized[m.kmer] = presence_profile(skeleton, m.kmer)
        eta += m.effect * realized[m.kmer]
    eta += rng.normal(0.0, spec.noise_sd, size=spec.N) if spec.noise_sd > 0 else 0.0
    counts = np.exp(eta) if spec.link == "exp" else eta
    counts = np.maximum(counts, 0.0)
    if not np.isfinite(counts).all():
        raise ValueError("generated counts overflowed; reduce the exp-link scale")
    lib = BarcodeLibrary(tuple(Barcode(i, s, float(c)) for i, s, c in zip(ids, seqs, counts)))
    return lib, GroundTruth(spec, planted_sets, realized, eta)


def load_spec(fh: IO[str]) -> SynthSpec:
    return SynthSpec.from_dict(json.load(fh))
