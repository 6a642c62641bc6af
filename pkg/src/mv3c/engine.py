"""Transaction lifecycle: begin, execute, validate, commit, repair, abort.

The engine is single threaded.  ``TransactionManager.try_commit`` is the
critical section: it draws a timestamp, validates, and either commits or
hands the transaction a new start timestamp, with no interleaving point
inside.  Everything else may be interleaved at program-piece granularity by
a scheduler.

Transaction programs are plain functions ``program(tx, **inputs)``.  They
read only through :meth:`Transaction.read`, which binds a closure
``closure(tx, rows)`` to the predicate.  Closures must be deterministic and
may only capture immutable values (inputs, ancestor rows, values computed by
ancestor closures).  For repair to be equivalent to a restart, a closure may
read rows the transaction wrote only if an ancestor closure wrote them
before creating it; rows written by one subtree must not be read or written
by another.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

from mv3c.fixing import FixInapplicable, classify, fix_result_set
from mv3c.predicates import (
    PredicateGraph,
    Scan,
    evaluate,
    execute_predicate,
    match,
    prune_subtree,
    run_closure,
)
from mv3c.store import (
    TXN_ID_BASE,
    Database,
    Kind,
    Policy,
    Sequence,
    UnknownKey,
    WriteWriteAbort,
    garbage_collect,
    persist_write,
    read_row,
    rollback,
    splice_on_commit,
)


class Mode(enum.Enum):
    MV3C = "mv3c"
    ABORT_RESTART = "abort-restart"


class Status(enum.Enum):
    EXECUTING = "executing"
    VALIDATING = "validating"
    REPAIRING = "repairing"
    COMMITTED = "committed"
    ABORTED = "aborted"


class UserAbort(Exception):
    """Raised by a program to roll itself back."""


class RepairLimitExceeded(Exception):
    pass


@dataclass
class Counters:
    predicates_evaluated: int = 0
    closures_run: int = 0
    versions_created: int = 0
    rows_scanned: int = 0

    def add(self, other: "Counters") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class WriteWritePolicy:
    """System default, overridden per table, overridden per operation."""

    def __init__(self, default: Policy = Policy.ALLOW_BLIND, per_table: dict | None = None):
        self.default = default
        self.per_table = dict(per_table or {})

    def resolve(self, table: str, override: Policy | None = None) -> Policy:
        if override is not None:
            return override
        return self.per_table.get(table, self.default)


@dataclass
class CommitEntry:
    commit_ts: int
    versions: list
    txn_id: int


@dataclass
class CommitRecord:
    """One committed transaction, as needed to replay it serially."""

    commit_ts: int
    program: object
    inputs: dict
    outputs: list
    tag: object = None


@dataclass(frozen=True)
class CommitResult:
    committed: bool
    ts: int


@dataclass
class Outcome:
    committed: bool
    commit_ts: int | None
    attempts: int
    repairs: int
    ww_aborts: int
    outputs: list
    counters: Counters = field(default_factory=Counters)


class Transaction:
    def __init__(self, manager, program, inputs, start_ts, txn_id, mode, tag=None):
        self.manager = manager
        self.db: Database = manager.db
        self.program = program
        self.inputs = dict(inputs or {})
        self.start_ts = start_ts
        self.txn_id = txn_id
        self.mode = mode
        self.tag = tag
        self.undo: list = []
        self.graph = PredicateGraph()
        self.status = Status.EXECUTING
        self.commit_ts = None
        self.repair_count = 0
        self.restarts = 0
        self.ww_aborts = 0
        self.degraded = False
        # (L1, L2) from the last failed validation, awaiting repair
        self.pending = None
        self.counters = Counters()
        self.stack: list = []
        self._next_pred = 0
        # counts persisted versions; predicates remember it as their horizon
        self.write_seq = 0

    def next_predicate_id(self) -> int:
        self._next_pred += 1
        return self._next_pred

    # program API

    def read(self, criterion, closure, *, cache=False, result_columns=None):
        """Evaluate ``criterion`` and run ``closure(tx, rows)`` on the result."""
        parent = self.stack[-1] if self.stack else None
        cache = cache and self.manager.result_set_fixing
        return execute_predicate(
            self, parent, criterion, closure, cache=cache, result_columns=result_columns
        )

    def update(self, table: str, key, *, policy: Policy | None = None, **changes):
        t = self.db.tables[table]
        current = read_row(t, key, self.start_ts, self.txn_id)
        if current is None:
            raise UnknownKey(f"{table}[{key!r}]")
        row = list(current)
        for name, value in changes.items():
            row[t.index[name]] = value
        return self._persist(t, key, t.check_row(tuple(row)), t.mask(changes), Kind.UPDATE, policy)

    def insert(self, table: str, row: tuple, *, policy: Policy | None = None):
        t = self.db.tables[table]
        row = t.check_row(tuple(row))
        return self._persist(t, t.key_of(row), row, t.all_mask, Kind.INSERT, policy)

    def delete(self, table: str, key, *, policy: Policy | None = None):
        t = self.db.tables[table]
        return self._persist(t, key, None, t.all_mask, Kind.DELETE, policy)

    def emit(self, value) -> None:
        """Record a program output (replayed and compared by the oracles)."""
        (self.stack[-1].outputs if self.stack else self.graph.top_outputs).append(value)

    def abort(self, reason: str = "") -> None:
        raise UserAbort(reason)

    def _persist(self, table, key, value, mask, kind, override):
        if self.mode is Mode.ABORT_RESTART:
            policy = Policy.ABORT_RESTART
        else:
            policy = self.manager.policy.resolve(table.name, override)
        v = persist_write(self, table, key, value, mask, kind, policy)
        self.write_seq += 1
        v.seq = self.write_seq
        self.counters.versions_created += 1
        (self.stack[-1].versions if self.stack else self.graph.top_versions).append(v)
        return v

    @property
    def outputs(self) -> list:
        out = list(self.graph.top_outputs)
        for n in self.graph.preorder():
            out.extend(n.outputs)
        return out

    @property
    def read_only(self) -> bool:
        return not self.undo

    def __repr__(self) -> str:
        return f"<Transaction I{self.txn_id - TXN_ID_BASE} S={self.start_ts} {self.status.value}>"


def concurrent_versions(manager, start_ts: int, candidate_ts: int) -> list:
    """Committed versions of transactions that committed in (start_ts, candidate_ts)."""
    entries = manager.recently_committed
    i = len(entries)
    while i > 0 and entries[i - 1].commit_ts > start_ts:
        i -= 1
    out = []
    for e in entries[i:]:
        if e.commit_ts < candidate_ts:
            out.extend(e.versions)
    return out


def validate(graph: PredicateGraph, start_ts: int, candidate_ts: int, manager,
             attribute_level: bool = False, *, txn_id=None, stop_at_first: bool = False,
             skip_descendants: bool = False):
    """Split the graph into valid nodes (L1) and invalid nodes plus descendants (L2).

    Nodes are visited in creation order.  Unless ``stop_at_first`` is set the
    traversal continues past the first invalid node.  Cache-enabled scans
    collect every matching version into their fix log.  ``txn_id`` (the
    validating transaction) lets scans see rows it wrote as it reads them.
    """
    versions = concurrent_versions(manager, start_ts, candidate_ts)
    by_key: dict = {}
    by_table: dict = {}
    for v in versions:
        by_key.setdefault((v.table, v.key), []).append(v)
        by_table.setdefault(v.table, []).append(v)

    l1, l2 = [], []
    for node in graph.nodes:
        node.invalid = False
        node.fix_log = None
    for node in graph.nodes:
        if not skip_descendants and node.parent is not None and node.parent.invalid:
            node.invalid = True
            l2.append(node)
            continue
        crit = node.criterion
        if isinstance(crit, Scan):
            candidates = by_table.get(crit.table, ())
        else:
            candidates = by_key.get((crit.table, crit.key), ())
        invalid = False
        if node.cache and isinstance(crit, Scan):
            log = []
            for v in candidates:
                if match(node, v, attribute_level, txn_id):
                    invalid = True
                tag = classify(crit, v, txn_id, node.horizon)
                if tag is not None:
                    log.append((v, tag))
            if invalid:
                node.fix_log = log
        else:
            for v in candidates:
                if match(node, v, attribute_level, txn_id):
                    invalid = True
                    break
        if invalid:
            node.invalid = True
            l2.append(node)
            if stop_at_first:
                break
        else:
            l1.append(node)
    return l1, l2


def repair_frontier(l2: list) -> list:
    """Nodes of L2 without an incoming edge from another L2 node."""
    inside = {id(n) for n in l2}
    return [n for n in l2 if n.parent is None or id(n.parent) not in inside]


class TransactionManager:
    def __init__(self, db: Database, *, mode: Mode = Mode.MV3C, policy: WriteWritePolicy | None = None,
                 attribute_level: bool = False, result_set_fixing: bool = True,
                 max_repair_attempts: int = 64, reuse_candidate_ts: bool = True,
                 fault_skip_descendants: bool = False):
        self.db = db
        self.mode = mode
        self.policy = policy or WriteWritePolicy()
        self.attribute_level = attribute_level
        # honour per-predicate cache flags; off forces fresh re-evaluation
        self.result_set_fixing = result_set_fixing
        self.max_repair_attempts = max_repair_attempts
        self.reuse_candidate_ts = reuse_candidate_ts
        # fault injection for oracle mutation tests
        self.fault_skip_descendants = fault_skip_descendants
        self.ts = Sequence(1)
        self.ids = Sequence(TXN_ID_BASE)
        self.recently_committed: list[CommitEntry] = []
        self.active: dict[int, Transaction] = {}
        self.history: list[CommitRecord] = []
        self.counters = Counters()
        self.gc_reclaimed = 0

    # lifecycle

    def begin(self, program, inputs=None, *, mode: Mode | None = None, tag=None,
              start_ts: int | None = None) -> Transaction:
        """Start a transaction.  ``start_ts`` is for oracles replaying at a fixed stamp."""
        ts = self.ts.next() if start_ts is None else start_ts
        txn = Transaction(self, program, inputs, ts, self.ids.next(), mode or self.mode, tag)
        self.active[txn.txn_id] = txn
        return txn

    def execute(self, txn: Transaction) -> None:
        """Run the program body.

        Raises UserAbort (transaction aborted) or WriteWriteAbort
        (transaction rolled back; ``rebegin`` makes it runnable again).
        """
        assert txn.status is Status.EXECUTING and not txn.undo and not txn.graph.nodes
        try:
            txn.program(txn, **txn.inputs)
        except UserAbort:
            self.abort(txn)
            raise
        except WriteWriteAbort:
            txn.ww_aborts += 1
            self.abort(txn)
            raise

    def rebegin(self, txn: Transaction) -> None:
        """Give a prematurely aborted transaction a fresh start timestamp."""
        assert txn.status is Status.ABORTED and not txn.undo
        self._reset(txn)
        txn.start_ts = self.ts.next()
        txn.status = Status.EXECUTING
        self.active[txn.txn_id] = txn

    def try_commit(self, txn: Transaction) -> CommitResult:
        assert txn.status in (Status.EXECUTING, Status.REPAIRING) and txn.pending is None
        txn.status = Status.VALIDATING
        if txn.read_only:
            self._finish_commit(txn, txn.start_ts)
            return CommitResult(True, txn.start_ts)
        candidate = self.ts.next()
        l1, l2 = validate(
            txn.graph, txn.start_ts, candidate, self, self.attribute_level,
            txn_id=txn.txn_id,
            stop_at_first=txn.mode is Mode.ABORT_RESTART,
            skip_descendants=self.fault_skip_descendants,
        )
        if not l2:
            splice_on_commit(self.db, txn, candidate)
            self.recently_committed.append(CommitEntry(candidate, list(txn.undo), txn.txn_id))
            self._finish_commit(txn, candidate)
            return CommitResult(True, candidate)

        txn.repair_count += 1
        if txn.repair_count > self.max_repair_attempts:
            if txn.degraded:
                self.abort(txn)
                raise RepairLimitExceeded(txn)
            txn.degraded = True
        txn.start_ts = candidate if self.reuse_candidate_ts else self.ts.next()
        txn.status = Status.REPAIRING
        txn.pending = (l1, l2)
        if txn.mode is Mode.ABORT_RESTART or txn.degraded:
            rollback(self.db, txn)
        return CommitResult(False, txn.start_ts)

    def resume(self, txn: Transaction) -> None:
        """Repair (MV3C) or re-execute from scratch (baseline) after a failed validation."""
        if txn.mode is Mode.ABORT_RESTART or txn.degraded:
            self.restart(txn)
        else:
            self.repair(txn)

    def repair(self, txn: Transaction) -> None:
        assert txn.status is Status.REPAIRING and txn.pending is not None
        _, l2 = txn.pending
        txn.pending = None
        try:
            for f in repair_frontier(l2):
                rows = None
                if f.fix_log is not None:
                    prune_subtree(txn, f)
                    try:
                        rows = fix_result_set(txn, f)
                        txn.counters.predicates_evaluated += 1
                    except FixInapplicable:
                        rows = None
                else:
                    prune_subtree(txn, f)
                f.fix_log = None
                f.invalid = False
                f.horizon = txn.write_seq
                f.result = rows if rows is not None else evaluate(txn, f.criterion)
                run_closure(txn, f)
        except UserAbort:
            self.abort(txn)
            raise
        except WriteWriteAbort:
            txn.ww_aborts += 1
            self.abort(txn)
            raise

    def restart(self, txn: Transaction) -> None:
        """Discard all work and run the whole program again at the current start_ts."""
        assert txn.status is Status.REPAIRING
        txn.pending = None
        rollback(self.db, txn)
        self._reset(txn)
        txn.restarts += 1
        txn.status = Status.EXECUTING
        self.execute(txn)

    def abort(self, txn: Transaction) -> None:
        assert txn.status is not Status.COMMITTED
        rollback(self.db, txn)
        txn.pending = None
        txn.status = Status.ABORTED
        self.active.pop(txn.txn_id, None)

    def finish(self, txn: Transaction) -> None:
        """Fold a finished transaction's counters into the manager totals."""
        self.counters.add(txn.counters)

    def collect_garbage(self) -> int:
        n = garbage_collect(self)
        self.gc_reclaimed += n
        return n

    def _reset(self, txn: Transaction) -> None:
        txn.graph = PredicateGraph()
        txn.stack.clear()
        txn.undo.clear()

    def _finish_commit(self, txn: Transaction, commit_ts: int) -> None:
        txn.commit_ts = commit_ts
        txn.status = Status.COMMITTED
        self.active.pop(txn.txn_id, None)
        self.history.append(CommitRecord(commit_ts, txn.program, txn.inputs, txn.outputs, txn.tag))

    # convenience

    def run_to_completion(self, program, inputs=None, mode: Mode | None = None) -> Outcome:
        """Run one transaction alone until it commits or aborts."""
        txn = self.begin(program, inputs, mode=mode)
        attempts = 1
        try:
            while True:
                try:
                    if txn.pending is not None:
                        self.resume(txn)
                    elif txn.status is Status.ABORTED:
                        self.rebegin(txn)
                        attempts += 1
                        self.execute(txn)
                    else:
                        self.execute(txn)
                except WriteWriteAbort:
                    continue
                if self.try_commit(txn).committed:
                    return self._outcome(txn, attempts, True)
                attempts += 1
        except (UserAbort, RepairLimitExceeded):
            return self._outcome(txn, attempts, False)

    def _outcome(self, txn: Transaction, attempts: int, committed: bool) -> Outcome:
        self.finish(txn)
        return Outcome(
            committed=committed,
            commit_ts=txn.commit_ts,
            attempts=attempts,
            repairs=txn.repair_count,
            ww_aborts=txn.ww_aborts,
            outputs=txn.outputs if committed else [],
            counters=txn.counters,
        )
