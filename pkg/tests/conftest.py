import numpy as np
import pytest

from barcodebias.io import Barcode, BarcodeLibrary
from barcodebias.kernels import available_backends


@pytest.fixture(params=sorted(available_backends()))
def backend(request):
    return available_backends()[request.param]


def random_library(n, length, seed=0, counts=None):
    rng = np.random.default_rng(seed)
    seqs = ["".join(rng.choice(list("ACGT"), size=length)) for _ in range(n)]
    if counts is None:
        counts = rng.integers(0, 1000, size=n).astype(float)
    return BarcodeLibrary(tuple(Barcode(f"s{i}", s, float(c)) for i, (s, c) in enumerate(zip(seqs, counts))))


@pytest.fixture
def small_lib():
    return random_library(60, 20, seed=3)


# acceptance results, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
