import copy
import random

import pytest

from mv3c.engine import (
    Mode,
    RepairLimitExceeded,
    Status,
    TransactionManager,
    UserAbort,
    WriteWritePolicy,
    repair_frontier,
    validate,
)
from mv3c.predicates import PointKey
from mv3c.store import Policy, Sequence, WriteWriteAbort
from mv3c.workloads.banking import FEE_ACC_ID, make_banking_db, transfer_money
from mv3c.workloads.synthetic import make_synthetic_db, synthetic_stream
from mv3c.workloads.trading import make_trading_db, price_update
from tests.conftest import kv_db, noop


def _bal(m, acc):
    return dict(m.db.dump()["Account"])[acc][1]


def test_serial_commit_is_start_plus_one():
    m = TransactionManager(make_banking_db(4))
    t = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    m.execute(t)
    r = m.try_commit(t)
    assert r.committed and r.ts == t.start_ts + 1 and t.status is Status.COMMITTED


def test_validate_without_concurrent_commits():
    m = TransactionManager(make_banking_db(4))
    t = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    m.execute(t)
    l1, l2 = validate(t.graph, t.start_ts, m.ts.next(), m)
    assert l2 == [] and l1 == t.graph.nodes


def test_fee_conflict_walkthrough():
    """Two transfers meeting only on the fee account, timestamps as in the narrative."""
    m = TransactionManager(make_banking_db(4, fee_balance=5.0))
    m.ts = Sequence(4)
    tz = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 400.0})
    ty = m.begin(transfer_money, {"fm_acc": 3, "to_acc": 4, "amount": 50.0})
    m.execute(tz)
    m.execute(ty)
    fee_chain = m.db["Account"].rows[FEE_ACC_ID]
    assert [v.owner for v in fee_chain.versions] == [ty.txn_id, tz.txn_id]

    assert m.try_commit(ty).ts == 6
    p1, p2, p3 = tz.graph.nodes
    res = m.try_commit(tz)
    assert not res.committed and res.ts == 7 and tz.start_ts == 7
    l1, l2 = tz.pending
    assert l1 == [p1, p2] and l2 == [p3]

    before = tz.counters.closures_run
    m.resume(tz)
    assert tz.counters.closures_run - before == 1
    (v,) = p3.versions
    assert v.value == (FEE_ACC_ID, 10.0)
    assert m.try_commit(tz).committed
    assert _bal(m, FEE_ACC_ID) == 10.0


def test_parent_conflict_invalidates_children():
    m = TransactionManager(make_banking_db(4))
    t = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    m.execute(t)
    w = m.begin(noop)
    w.update("Account", 1, bal=5000.0)
    m.try_commit(w)
    cand = m.ts.next()
    l1, l2 = validate(t.graph, t.start_ts, cand, m)
    assert l1 == [] and l2 == t.graph.nodes
    assert repair_frontier(l2) == [t.graph.roots[0]]
    _assert_split_sound(t, l1, l2, cand)


def _assert_split_sound(txn, l1, l2, cand):
    """Re-evaluation oracle: an L1 node's criterion gives the same rows at cand."""
    l2_ids = {id(n) for n in l2}
    for n in l1:
        crit = n.criterion
        table = txn.db.tables[crit.table]
        fresh, _ = crit.evaluate(table, cand, txn.txn_id)
        assert sorted(fresh) == n.result
        p = n.parent
        while p is not None:
            assert id(p) not in l2_ids
            p = p.parent
    order = {id(n): i for i, n in enumerate(l1 + l2)}
    for n in txn.graph.nodes:
        if n.parent is not None:
            assert order[id(n.parent)] < order[id(n)]


def test_status_transitions_and_repair_leaves_graph():
    m = TransactionManager(make_banking_db(4))
    tz = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    ty = m.begin(transfer_money, {"fm_acc": 3, "to_acc": 4, "amount": 50.0})
    m.execute(tz)
    m.execute(ty)
    assert tz.status is Status.EXECUTING
    m.try_commit(ty)
    m.try_commit(tz)
    assert tz.status is Status.REPAIRING
    m.repair(tz)
    assert tz.status is Status.REPAIRING and tz.pending is None
    m.try_commit(tz)
    assert tz.status is Status.COMMITTED and tz.commit_ts > tz.start_ts


def test_user_abort_leaves_no_versions():
    m = TransactionManager(make_banking_db(balances={1: 10.0, 2: 10.0}))
    before = m.db.dump()
    t = m.begin(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 50.0})
    with pytest.raises(UserAbort):
        m.execute(t)
    assert t.status is Status.ABORTED and t.undo == [] and m.db.dump() == before
    assert t.txn_id not in m.active


def test_abort_after_writes_restores_dump():
    m = TransactionManager(kv_db())
    before = m.db.dump()
    t = m.begin(noop)
    t.update("KV", 1, v=0)
    t.insert("KV", (5, 5, "e"))
    t.delete("KV", 2)
    m.abort(t)
    assert m.db.dump() == before


def test_read_only_commits_at_start_ts():
    m = TransactionManager(kv_db())
    t = m.begin(noop)
    t.read(PointKey("KV", 1), noop)
    w = m.begin(noop)
    w.update("KV", 1, v=0)
    m.try_commit(w)
    r = m.try_commit(t)
    assert r.committed and r.ts == t.start_ts
    assert m.history[-1].commit_ts == t.start_ts


def test_run_to_completion_modes_agree_without_conflicts():
    dumps = []
    for mode in Mode:
        m = TransactionManager(make_banking_db(4), mode=mode)
        out = m.run_to_completion(transfer_money, {"fm_acc": 1, "to_acc": 2, "amount": 200.0})
        assert out.committed and out.attempts == 1 and out.counters.closures_run == 3
        dumps.append(m.db.dump())
    assert dumps[0] == dumps[1]
    assert dict(dumps[0]["Account"])[FEE_ACC_ID][1] == 2.0


def test_blind_price_updates():
    for mode, expected_aborts in ((Mode.MV3C, 0), (Mode.ABORT_RESTART, 1)):
        m = TransactionManager(make_trading_db(10, 10), mode=mode)
        a = m.begin(price_update, {"s_id": 3, "price": 10.0})
        b = m.begin(price_update, {"s_id": 3, "price": 20.0})
        aborts = 0
        for t in (a, b):
            try:
                m.execute(t)
            except WriteWriteAbort:
                aborts += 1
        assert aborts == expected_aborts
        for t in (a, b):
            if t.status is not Status.ABORTED:
                assert m.try_commit(t).committed


def test_policy_resolution_order():
    p = WriteWritePolicy(Policy.ALLOW_BLIND, {"Account": Policy.ABORT_RESTART})
    assert p.resolve("Other") is Policy.ALLOW_BLIND
    assert p.resolve("Account") is Policy.ABORT_RESTART
    assert p.resolve("Account", Policy.ALLOW_BLIND) is Policy.ALLOW_BLIND


def test_per_operation_override_aborts():
    m = TransactionManager(kv_db())
    a, b = m.begin(noop), m.begin(noop)
    a.update("KV", 1, v=1)
    with pytest.raises(WriteWriteAbort):
        b.update("KV", 1, v=2, policy=Policy.ABORT_RESTART)
    b.update("KV", 1, v=2)


def _reader(tx):
    tx.read(PointKey("KV", 1), lambda tx, rows: tx.update("KV", 2, v=rows[0][1]), result_columns=("v",))


def _bump(m, v):
    w = m.begin(noop)
    w.update("KV", 1, v=v)
    assert m.try_commit(w).committed


def test_repair_limit_degrades_then_fails():
    m = TransactionManager(kv_db(), max_repair_attempts=1)
    t = m.begin(_reader)
    m.execute(t)
    _bump(m, 100)
    assert not m.try_commit(t).committed and not t.degraded
    m.resume(t)
    _bump(m, 101)
    assert not m.try_commit(t).committed and t.degraded and t.undo == []
    m.resume(t)
    assert t.restarts == 1
    _bump(m, 102)
    with pytest.raises(RepairLimitExceeded):
        m.try_commit(t)
    assert t.status is Status.ABORTED


@pytest.mark.parametrize("reuse", [True, False])
def test_new_start_ts_choice(reuse):
    m = TransactionManager(kv_db(), reuse_candidate_ts=reuse)
    t = m.begin(_reader)
    m.execute(t)
    _bump(m, 5)
    cand = m.ts.last + 1
    m.try_commit(t)
    assert (t.start_ts == cand) is reuse and t.start_ts >= cand


def test_sequences_never_repeat():
    m = TransactionManager(make_synthetic_db())
    seen_ts, seen_ids = [], []
    for req in synthetic_stream(30, seed=3):
        t = m.begin(req.program, req.inputs)
        seen_ids.append(t.txn_id)
        seen_ts.append(t.start_ts)
        try:
            m.execute(t)
        except UserAbort:
            continue
        seen_ts.append(m.try_commit(t).ts)
    starts = seen_ts
    assert seen_ids == sorted(set(seen_ids))
    assert all(a <= b for a, b in zip(starts, starts[1:]))


def _reads(txn):
    def node(p):
        return (p.criterion, tuple(p.result), tuple(p.outputs), tuple(node(c) for c in p.children))

    return tuple(node(r) for r in txn.graph.roots)


@pytest.mark.parametrize("seed", range(6))
def test_commit_reads_match_fresh_run_at_commit_ts(seed):
    """A committed transaction read what a fresh run at its commit timestamp reads."""
    rng = random.Random(seed)
    m = TransactionManager(make_synthetic_db(seed=seed), attribute_level=False)
    pending = []
    checked = 0
    for req in synthetic_stream(60, seed=seed):
        t = m.begin(req.program, req.inputs)
        try:
            m.execute(t)
        except UserAbort:
            continue
        pending.append(t)
        while pending and (len(pending) > 6 or rng.random() < 0.3):
            t = pending.pop(0)
            clone_m, clone_t = copy.deepcopy((m, t))
            res = m.try_commit(t)
            if not res.committed:
                try:
                    m.resume(t)
                except UserAbort:
                    continue
                pending.append(t)
                continue
            if t.read_only:
                continue
            clone_m.abort(clone_t)
            fresh = clone_m.begin(t.program, t.inputs, start_ts=res.ts)
            clone_m.execute(fresh)
            assert _reads(fresh) == _reads(t)
            checked += 1
    assert checked > 0
