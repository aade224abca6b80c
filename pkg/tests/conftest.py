import os
from pathlib import Path

import numpy as np
import pytest
import torch

from q8ssp.data import ProteinRecord
from q8ssp.featurize import prepare
from q8ssp.synthetic import synthetic_records

torch.set_num_threads(max(1, min(4, os.cpu_count() or 1)))

REAL_CB6133 = os.environ.get("Q8SSP_CB6133FILTERED")
REAL_CB513 = os.environ.get("Q8SSP_CB513")


def real_path(value):
    return Path(value) if value and Path(value).exists() else None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_records():
    return synthetic_records(6, seed=7, min_len=20, max_len=90)


@pytest.fixture(scope="session")
def small_ds(small_records):
    return prepare(small_records, "fixture")


def make_record(seq, labels=None, rid="rec#0", profile=None):
    labels = labels if labels is not None else "L" * len(seq)
    return ProteinRecord.from_sequence(rid, seq, labels, profile)


# criterion -> [(part, status, detail)], printed as one line per criterion
ACCEPTANCE: dict[int, list[tuple[str, str, str]]] = {}


@pytest.fixture
def acceptance():
    def record(criterion: int, part: str, status: str, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((part, status, detail))

    return record


def _overall(parts):
    statuses = {s for _, s, _ in parts}
    if "FAIL" in statuses:
        return "FAIL"
    if statuses == {"SKIP"}:
        return "SKIP"
    if "SKIP" in statuses:
        return "INCOMPLETE"
    return "PASS"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        detail = "; ".join(f"{p}: {s}" + (f" ({d})" if d else "") for p, s, d in parts)
        terminalreporter.write_line(f"criterion {n}: {_overall(parts)} - {detail}")
