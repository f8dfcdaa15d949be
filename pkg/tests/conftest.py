import pytest

from semid import _vmcore_py, vm
from semid.corpus import fixtures_path, load_corpus

try:
    from semid import _vmcore
except ImportError:
    _vmcore = None

KERNELS = {"python": _vmcore_py, "native": _vmcore}


@pytest.fixture(params=["native", "python"])
def kernel(request, monkeypatch):
    """Run the test once per VM backend."""
    mod = KERNELS[request.param]
    if mod is None:
        pytest.skip("compiled kernel not built")
    monkeypatch.setattr(vm, "_kernel", mod)
    return request.param


@pytest.fixture(scope="session")
def corpus():
    return load_corpus(fixtures_path())


@pytest.fixture(scope="session")
def by_key(corpus):
    return {(r.name, r.variant): r for r in corpus}


def accepting(image, start=0, tries=200):
    """First IOVec generated from seeds start, start+1, ... that reaches RET."""
    from semid.taint import GiveUp, generate_accepting_run
    for seed in range(start, start + tries):
        v = generate_accepting_run(image, seed)
        if not isinstance(v, GiveUp):
            return v
    raise AssertionError(f"no accepting run for {image.name}")


# (criterion number, passed, detail) recorded by tests/test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
