"""Reading and writing barcode libraries (id, sequence, read count)."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import numpy as np

ALPHABET = "ACGT"
_ENCODE = np.full(256, 255, dtype=np.uint8)
for _i, _b in enumerate(ALPHABET):
    _ENCODE[ord(_b)] = _i
    _ENCODE[ord(_b.lower())] = _i


class LibraryError(ValueError):
    """Raised for malformed or inconsistent barcode input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Barcode:
    id: str
    sequence: str
    read_count: float


@dataclass(frozen=True)
class BarcodeLibrary:
    """Validated collection of barcodes sharing one sequence length."""

    records: tuple[Barcode, ...] = ()
    _encoded: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        seen = set()
        length = None
        for r in records:
            _check_record(r)
            if r.id in seen:
                raise LibraryError(f"duplicate id {r.id!r}")
            seen.add(r.id)
            if length is None:
                length = len(r.sequence)
            elif len(r.sequence) != length:
                raise LibraryError(
                    f"inconsistent sequence length for {r.id!r}: {len(r.sequence)} != {length}"
                )

    @property
    def N(self) -> int:
        return len(self.records)

    @property
    def L(self) -> int | None:
        return len(self.records[0].sequence) if self.records else None

    def __len__(self):
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def sequences(self) -> list[str]:
        return [r.sequence for r in self.records]

    @property
    def counts(self) -> np.ndarray:
        return np.array([r.read_count for r in self.records], dtype=np.float64)

    def encoded(self) -> np.ndarray:
        """N x L uint8 matrix with A, C, G, T mapped to 0..3 (cached)."""
        if self._encoded is None:
            if not self.records:
                enc = np.zeros((0, 0), dtype=np.uint8)
            else:
                raw = np.frombuffer("".join(self.sequences).encode("ascii"), dtype=np.uint8)
                enc = _ENCODE[raw].reshape(self.N, self.L)
            enc.setflags(write=False)
            object.__setattr__(self, "_encoded", enc)
        return self._encoded

    def subset(self, indices: Iterable[int]) -> "BarcodeLibrary":
        return BarcodeLibrary(tuple(self.records[i] for i in indices))


def _check_record(r: Barcode, line: int | None = None):
    if not r.id:
        raise LibraryError("empty id", line)
    if any(ch.isspace() for ch in r.id):
        raise LibraryError(f"id {r.id!r} contains whitespace", line)
    if not r.sequence:
        raise LibraryError(f"empty sequence for {r.id!r}", line)
    bad = set(r.sequence) - set(ALPHABET)
    if bad:
        raise LibraryError(f"non-ACGT character {sorted(bad)[0]!r} in {r.id!r}", line)
    if not (math.isfinite(r.read_count) and r.read_count >= 0):
        raise LibraryError(f"read count must be finite and >= 0, got {r.read_count!r}", line)


def _parse_count(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise LibraryError(f"non-numeric read count {text!r}", line) from None
    if not math.isfinite(value) or value < 0:
        raise LibraryError(f"read count must be finite and >= 0, got {text!r}", line)
    return value


def _make(rid: str, seq: str, count: float, line: int) -> Barcode:
    rec = Barcode(rid, seq.upper(), count)
    _check_record(rec, line)
    return rec


def _assemble(records: list[tuple[Barcode, int]]) -> BarcodeLibrary:
    # re-check the cross-record invariants here so errors carry line numbers
    seen = set()
    length = None
    for rec, line in records:
        if rec.id in seen:
            raise LibraryError(f"duplicate id {rec.id!r}", line)
        seen.add(rec.id)
        if length is None:
            length = len(rec.sequence)
        elif len(rec.sequence) != length:
            raise LibraryError(
                f"inconsistent sequence length {len(rec.sequence)} (expected {length})", line
            )
    return BarcodeLibrary(tuple(r for r, _ in records))


def _lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        yield number, raw.rstrip("\r")


def _parse_tsv(text: str) -> BarcodeLibrary:
    out = []
    for number, line in _lines(text):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise LibraryError(f"expected 3 tab-separated fields, got {len(fields)}", number)
        rid, seq, count = (f.strip() for f in fields)
        out.append((_make(rid, seq, _parse_count(count, number), number), number))
    return _assemble(out)


def _parse_fasta(text: str) -> BarcodeLibrary:
    out = []
    header = None  # (id, count, line)
    chunks: list[str] = []

    def flush():
        if header is None:
            return
        rid, count, line = header
        out.append((_make(rid, "".join(chunks), count, line), line))

    for number, line in _lines(text):
        if not line.strip():
            continue
        if line.startswith(">"):
            flush()
            parts = line[1:].split()
            if not parts:
                raise LibraryError("header without id", number)
            count = None
            for token in parts[1:]:
                if token.startswith("count="):
                    count = _parse_count(token[len("count="):], number)
            if count is None:
                raise LibraryError("header missing count=<number>", number)
            header = (parts[0], count, number)
            chunks = []
        elif line.startswith(";"):
            continue
        else:
            if header is None:
                raise LibraryError("sequence line before first header", number)
            chunks.append(line.strip())
    flush()
    return _assemble(out)


_PARSERS = {"tsv": _parse_tsv, "fasta": _parse_fasta, "fasta-with-counts": _parse_fasta}


def parse_library(data: bytes | str | IO, format: str = "tsv") -> BarcodeLibrary:
    """Parse a barcode library from bytes, text or a file object."""
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LibraryError(f"input is not UTF-8: {exc}") from None
    try:
        parser = _PARSERS[format]
    except KeyError:
        raise ValueError(f"unknown format {format!r}; choose from {sorted(_PARSERS)}") from None
    return parser(data)


def read_library(path: str | Path, format: str = "tsv") -> BarcodeLibrary:
    with open(path, "rb") as fh:
        return parse_library(fh, format)


def format_count(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_library(lib: BarcodeLibrary, format: str = "tsv") -> bytes:
    """Serialize to TSV; ``parse_library`` of the result reproduces ``lib``."""
    if format != "tsv":
        raise ValueError(f"unsupported output format {format!r}")
    buf = io.StringIO()
    for r in lib.records:
        buf.write(f"{r.id}\t{r.sequence}\t{format_count(r.read_count)}\n")
    return buf.getvalue().encode("utf-8")
