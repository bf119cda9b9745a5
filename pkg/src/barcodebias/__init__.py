"""Barcode sequence features, mutual-information motifs and lasso models of read-count bias."""
from .io import Barcode, BarcodeLibrary, LibraryError, parse_library, read_library, write_library
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Barcode",
    "BarcodeLibrary",
    "LibraryError",
    "parse_library",
    "read_library",
    "write_library",
]
