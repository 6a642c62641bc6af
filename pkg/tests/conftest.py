import pytest

from mv3c import _kernels_py
from mv3c.engine import TransactionManager
from mv3c.store import Column, Database, Table

try:
    from mv3c import _kernels
except ImportError:  # pragma: no cover - extension not built
    _kernels = None

KERNELS = [pytest.param(_kernels_py, id="pure")]
if _kernels is not None:
    KERNELS.append(pytest.param(_kernels, id="compiled"))


@pytest.fixture(params=KERNELS)
def kernels(request):
    return request.param


def noop(tx, *rows):
    pass


def kv_db(rows=((1, 10, "a"), (2, 20, "b"), (3, 30, "c"))):
    t = Table("KV", [Column("k"), Column("v"), Column("tag", "str")], ["k"])
    t.load(rows)
    return Database([t])


@pytest.fixture
def kv():
    return TransactionManager(kv_db())


# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
