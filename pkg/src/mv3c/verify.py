"""Verification oracles.

* commit-order serializability: replay committed programs serially in
  commit-timestamp order on a fresh database and compare outputs and state;
* repair/restart equivalence: clone a transaction that failed validation,
  restart the clone and repair the original at the same new start timestamp,
  then compare predicate graphs, undo buffers and post-commit states.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

from mv3c.engine import Mode, Status, TransactionManager, UserAbort
from mv3c.store import Database, WriteWriteAbort


@dataclass
class Divergence:
    what: str  # "output" | "state" | "replay-abort"
    table: str | None = None
    key: object = None
    column: str | None = None
    commit_ts: int | None = None
    expected: object = None
    actual: object = None

    def __str__(self) -> str:
        if self.what == "state":
            return (f"state differs at {self.table}[{self.key!r}].{self.column}: "
                    f"serial={self.expected!r} run={self.actual!r}")
        return f"{self.what} differs at commit_ts={self.commit_ts}: serial={self.expected!r} run={self.actual!r}"


def first_state_divergence(expected: Database, actual: Database) -> Divergence | None:
    """First differing (table, key, column) between two committed states."""
    exp, act = expected.dump(), actual.dump()
    for name in sorted(set(exp) | set(act)):
        table = (expected.tables.get(name) or actual.tables.get(name))
        erows = dict(exp.get(name, ()))
        arows = dict(act.get(name, ()))
        for key in sorted(set(erows) | set(arows), key=repr):
            e, a = erows.get(key), arows.get(key)
            if e == a:
                continue
            if e is None or a is None:
                return Divergence("state", name, key, "<row>", expected=e, actual=a)
            for col, x, y in zip(table.columns, e, a):
                if x != y:
                    return Divergence("state", name, key, col.name, expected=x, actual=y)
    return None


def verify_serializability(make_db: Callable[[], Database], manager: TransactionManager) -> Divergence | None:
    """Replay ``manager.history`` serially on ``make_db()``; None means equivalent."""
    serial = TransactionManager(make_db(), mode=Mode.ABORT_RESTART)
    for rec in sorted(manager.history, key=lambda r: r.commit_ts):
        txn = serial.begin(rec.program, rec.inputs)
        try:
            serial.execute(txn)
        except (UserAbort, WriteWriteAbort) as exc:
            return Divergence("replay-abort", commit_ts=rec.commit_ts, expected=repr(exc), actual=rec.outputs)
        if not serial.try_commit(txn).committed:  # pragma: no cover - serial runs cannot conflict
            return Divergence("replay-abort", commit_ts=rec.commit_ts, expected="validation failure")
        if txn.outputs != rec.outputs:
            return Divergence("output", commit_ts=rec.commit_ts, expected=txn.outputs, actual=rec.outputs)
    return first_state_divergence(serial.db, manager.db)


def _version_sig(db: Database, v) -> tuple:
    # Only the written columns: unwritten ones are re-based at commit time.
    cols = db.tables[v.table].columns
    written = None
    if v.value is not None:
        written = tuple((c.name, x) for i, (c, x) in enumerate(zip(cols, v.value)) if v.modified >> i & 1)
    return (v.table, v.key, v.kind.value, v.modified, written)


def _project(result: list, mask: int) -> tuple:
    return tuple((k, tuple(x for i, x in enumerate(v) if mask >> i & 1)) for k, v in result)


def graph_signature(txn, attribute_level: bool = False) -> tuple:
    """Structure, result-sets, versions and outputs of the predicate forest.

    With ``attribute_level`` the result-sets are compared on monitored
    columns only: a valid predicate legitimately keeps stale values in
    columns its closure never reads.
    """
    db = txn.db

    def node(p) -> tuple:
        return (
            repr(p.criterion),
            _project(p.result, p.monitored) if attribute_level else tuple(p.result),
            tuple(_version_sig(db, v) for v in p.versions),
            tuple(p.outputs),
            tuple(node(c) for c in p.children),
        )

    g = txn.graph
    return (
        tuple(_version_sig(db, v) for v in g.top_versions),
        tuple(g.top_outputs),
        tuple(node(r) for r in g.roots),
    )


def undo_signature(txn) -> list:
    return sorted((_version_sig(txn.db, v) for v in txn.undo), key=repr)


@dataclass
class EquivalenceResult:
    ok: bool
    detail: str = ""


def _attempt(fn, *args):
    try:
        fn(*args)
        return None
    except (UserAbort, WriteWriteAbort) as exc:
        return type(exc).__name__


def repair_with_equivalence_check(manager: TransactionManager, txn) -> EquivalenceResult:
    """Repair ``txn`` in place and compare against a restart of a clone.

    Exceptions from the repair (user abort, write-write abort) propagate
    after the comparison, exactly as ``manager.repair`` would raise them.
    """
    assert txn.status is Status.REPAIRING and txn.pending is not None
    m2, t2 = copy.deepcopy((manager, txn))
    restart_err = _attempt(m2.restart, t2)
    try:
        manager.repair(txn)
        repair_err = None
    except (UserAbort, WriteWriteAbort) as exc:
        repair_err = exc

    if restart_err != (type(repair_err).__name__ if repair_err else None):
        result = EquivalenceResult(False, f"restart raised {restart_err}, repair raised {repair_err!r}")
    elif repair_err is not None:
        result = EquivalenceResult(True, "both aborted")
    else:
        result = _compare_repaired(manager, txn, m2, t2)
    if repair_err is not None:
        repair_err.equivalence = result
        raise repair_err
    return result


def _compare_repaired(m1, t1, m2, t2) -> EquivalenceResult:
    attr = m1.attribute_level
    if graph_signature(t1, attr) != graph_signature(t2, attr):
        return EquivalenceResult(False, "predicate graphs differ")
    if undo_signature(t1) != undo_signature(t2):
        return EquivalenceResult(False, "undo buffers differ")
    a_m, a_t = copy.deepcopy((m1, t1))
    b_m, b_t = m2, t2
    ra, rb = a_m.try_commit(a_t), b_m.try_commit(b_t)
    if ra != rb:
        return EquivalenceResult(False, f"commit results differ: {ra} vs {rb}")
    div = first_state_divergence(b_m.db, a_m.db)
    if div is not None:
        return EquivalenceResult(False, f"post-commit {div}")
    return EquivalenceResult(True)


@dataclass
class EquivalenceChecker:
    """Scheduler ``repair_hook`` that checks every MV3C repair it performs."""

    checked: int = 0
    failures: list = field(default_factory=list)

    def __call__(self, manager, txn) -> None:
        try:
            result = repair_with_equivalence_check(manager, txn)
        except (UserAbort, WriteWriteAbort) as exc:
            result = exc.equivalence
            self._record(txn, result)
            raise
        self._record(txn, result)

    def _record(self, txn, result: EquivalenceResult) -> None:
        self.checked += 1
        if not result.ok:
            self.failures.append((txn.tag, result.detail))
