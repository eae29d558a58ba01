from __future__ import annotations

import sys

import numpy as np
import pytest

from smob.fhe import Context, keygen, make_params


@pytest.fixture(scope="session")
def desk_contexts():
    return {s: Context(make_params(s, "desk")) for s in ("bfv", "bgv", "ckks")}


@pytest.fixture(scope="session")
def desk_keys(desk_contexts):
    return {s: keygen(ctx, np.random.default_rng(100 + i))
            for i, (s, ctx) in enumerate(desk_contexts.items())}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
