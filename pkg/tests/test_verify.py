import json
import os
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mv3c import _kernels_py, kernels
from mv3c.engine import CommitRecord, TransactionManager
from mv3c.store import TXN_ID_BASE, Kind, StoreError, Version, VersionChain, splice_on_commit
from mv3c.verify import (
    Divergence,
    EquivalenceChecker,
    first_state_divergence,
    repair_with_equivalence_check,
    verify_serializability,
)
from mv3c.workloads.banking import make_banking_db, transfer_money
from mv3c.workloads.scheduler import run_windowed
from mv3c.workloads.synthetic import make_synthetic_db, synthetic_stream
from tests.conftest import kv_db

try:
    from mv3c import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def test_state_divergence_names_table_key_column():
    a, b = kv_db(), kv_db()
    b["KV"].rows[2].base = (2, 20, "zz")
    d = first_state_divergence(a, b)
    assert (d.what, d.table, d.key, d.column, d.expected, d.actual) == ("state", "KV", 2, "tag", "b", "zz")
    assert "KV[2].tag" in str(d)


def test_missing_row_divergence():
    a, b = kv_db(), kv_db(((1, 10, "a"), (2, 20, "b")))
    d = first_state_divergence(a, b)
    assert (d.table, d.key, d.column, d.actual) == ("KV", 3, "<row>", None)
    assert first_state_divergence(a, kv_db()) is None


def _two_transfers(make):
    m = TransactionManager(make())
    t = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    m.execute(t)
    m.run_to_completion(transfer_money, {"fm_acc": 3, "to_acc": 4, "amount": 50.0})
    return m, t


def test_oracle_flags_lost_update():
    make = lambda: make_banking_db(4)
    m, t = _two_transfers(make)
    # commit with a stale fee: skip validation entirely
    ts = m.ts.next()
    splice_on_commit(m.db, t, ts)
    m.active.pop(t.txn_id)
    m.history.append(CommitRecord(ts, t.program, t.inputs, t.outputs, t.tag))
    d = verify_serializability(make, m)
    assert d is not None and d.table == "Account" and d.key == 0 and d.column == "bal"


def test_oracle_flags_output_mismatch():
    make = lambda: make_banking_db(4)
    m = TransactionManager(make())
    m.run_to_completion(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    m.history[0].outputs.append("bogus")
    d = verify_serializability(make, m)
    assert d.what == "output" and d.commit_ts == m.history[0].commit_ts


def test_equivalence_check_passes_on_repair():
    m, t = _two_transfers(lambda: make_banking_db(4))
    assert not m.try_commit(t).committed
    res = repair_with_equivalence_check(m, t)
    assert res.ok, res.detail
    assert m.try_commit(t).committed


def test_equivalence_check_catches_broken_repair(monkeypatch):
    from mv3c import engine

    m, t = _two_transfers(lambda: make_banking_db(4))
    m.try_commit(t)
    # a repair that forgets to re-run anything
    monkeypatch.setattr(engine, "repair_frontier", lambda l2: [])
    res = repair_with_equivalence_check(m, t)
    assert not res.ok and "differ" in res.detail


# --- mutation: skipping descendant invalidation must be caught ----------------------


def _faulty_run(seed):
    make = lambda: make_synthetic_db(seed=seed)
    m = TransactionManager(make(), fault_skip_descendants=True)
    try:
        run_windowed(m, synthetic_stream(40, seed=seed), 8)
    except StoreError as exc:
        return f"engine error {type(exc).__name__}"
    return verify_serializability(make, m)


def test_mutation_detected_deterministic():
    d = _faulty_run(25)
    assert isinstance(d, Divergence) and d.table == "Item"
    make = lambda: make_synthetic_db(seed=25)
    m = TransactionManager(make())
    run_windowed(m, synthetic_stream(40, seed=25), 8)
    assert verify_serializability(make, m) is None


def test_mutation_detected_across_seeds():
    caught = [s for s in range(60) if _faulty_run(s) is not None]
    assert len(caught) >= 2


def test_equivalence_checker_counts():
    chk = EquivalenceChecker()
    m = TransactionManager(make_synthetic_db(seed=1))
    run_windowed(m, synthetic_stream(40, seed=1), 8, repair_hook=chk)
    assert chk.checked > 0 and chk.failures == []


# --- kernel parity -------------------------------------------------------------------

TXN = TXN_ID_BASE + 7
_owner = st.one_of(st.integers(1, 9), st.sampled_from([TXN, TXN + 1]))
_value = st.one_of(st.none(), st.tuples(st.integers(0, 3), st.integers(0, 9), st.integers(0, 9)))
_version = st.tuples(_owner, _value, st.integers(0, 7))


def _build(base, spec):
    chain = VersionChain(base)
    uncommitted = [s for s in spec if s[0] >= TXN_ID_BASE]
    committed = sorted((s for s in spec if s[0] < TXN_ID_BASE), key=lambda s: -s[0])
    for owner, value, mask in uncommitted + committed:
        kind = Kind.DELETE if value is None else Kind.UPDATE
        chain.versions.append(Version(owner, "KV", 1, value, mask, kind, chain))
    return chain


@pytest.mark.skipif(_kernels is None, reason="extension not built")
@settings(max_examples=300, deadline=None)
@given(base=_value, spec=st.lists(_version, max_size=5), start=st.integers(1, 10),
       reader=st.sampled_from([TXN, TXN + 2]))
def test_visible_value_parity(base, spec, start, reader):
    chain = _build(base, spec)
    assert _kernels.visible_value(chain, start, reader) == _kernels_py.visible_value(chain, start, reader)


_bound = st.one_of(st.none(), st.integers(0, 9))


@pytest.mark.skipif(_kernels is None, reason="extension not built")
@settings(max_examples=200, deadline=None)
@given(rows=st.dictionaries(st.integers(0, 20), st.tuples(_value, st.lists(_version, max_size=3)), max_size=8),
       cons=st.lists(st.tuples(st.integers(0, 2), _bound, _bound), max_size=2), start=st.integers(1, 10))
def test_scan_parity(rows, cons, start):
    chains = {k: _build(b, spec) for k, (b, spec) in rows.items()}
    cons = tuple(tuple(c) for c in cons)
    assert _kernels.scan_chains(chains, cons, start, TXN) == _kernels_py.scan_chains(chains, cons, start, TXN)
    for chain in chains.values():
        row = _kernels_py.visible_value(chain, start, TXN)
        if row is not None:
            assert _kernels.row_matches(row, cons) == _kernels_py.row_matches(row, cons)


def test_kernel_selection_flag():
    assert kernels.COMPILED is (_kernels is not None)


def test_pure_and_compiled_runs_agree():
    """A full run commits the same log whichever kernel module is loaded."""
    code = ("from mv3c.cli import main; "
            "main(['run','--benchmark','trading','--scale','0.001','--txns','200','--output','json'])")
    digests = []
    for extra in ({}, {"MV3C_PURE_PYTHON": "1"}):
        proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                              env={**os.environ, **extra}, check=True)
        digests.append(json.loads(proc.stdout)["commit_log_digest"])
    assert digests[0] == digests[1]
