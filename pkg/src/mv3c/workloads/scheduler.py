"""Window-based interleaving of transaction programs.

Each window takes up to N transactions (carried-over ones first, then new
ones from the stream), starts them all, executes them all, and finally
validates and commits them one after the other.  Transactions that fail
during execution or validation move to the next window: validation failures
keep their new start timestamp and, under MV3C, their predicate graph for
repair.  A window of size 1 is a serial execution.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from mv3c.engine import Mode, RepairLimitExceeded, Status, Transaction, TransactionManager, UserAbort
from mv3c.store import WriteWriteAbort


@dataclass
class TxnRequest:
    seq: int
    name: str
    program: Callable
    inputs: dict


@dataclass
class TxnOutcome:
    seq: int
    name: str
    status: str  # committed | aborted | in-flight
    commit_ts: int | None = None
    attempts: int = 1
    repairs: int = 0
    ww_aborts: int = 0
    outputs: list = field(default_factory=list)


@dataclass
class RunResult:
    mode: Mode
    window: int
    outcomes: list[TxnOutcome]
    windows_run: int
    validation_failures: int
    ww_aborts: int
    repairs: int
    restarts: int

    @property
    def committed(self) -> int:
        return sum(o.status == "committed" for o in self.outcomes)

    @property
    def aborted(self) -> int:
        return sum(o.status == "aborted" for o in self.outcomes)

    @property
    def in_flight(self) -> int:
        return sum(o.status == "in-flight" for o in self.outcomes)


class _Slot:
    __slots__ = ("req", "txn", "attempts")

    def __init__(self, req: TxnRequest) -> None:
        self.req = req
        self.txn: Transaction | None = None
        self.attempts = 0


def run_windowed(manager: TransactionManager, requests: Iterable[TxnRequest], window: int,
                 mode: Mode | None = None, *, repair_hook: Callable | None = None,
                 gc: bool = True) -> RunResult:
    """Run ``requests`` through windows of ``window`` concurrent transactions.

    ``repair_hook(manager, txn)``, when given, replaces ``manager.resume`` for
    pending MV3C repairs (used by the repair/restart equivalence oracle).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    mode = mode or manager.mode
    stream = iter(requests)
    carry: deque[_Slot] = deque()
    outcomes: dict[int, TxnOutcome] = {}
    windows_run = validation_failures = ww_aborts = repairs = restarts = 0

    def finish(slot: _Slot, status: str) -> None:
        txn = slot.txn
        manager.finish(txn)
        outcomes[slot.req.seq] = TxnOutcome(
            seq=slot.req.seq,
            name=slot.req.name,
            status=status,
            commit_ts=txn.commit_ts,
            attempts=slot.attempts,
            repairs=txn.repair_count,
            ww_aborts=txn.ww_aborts,
            outputs=txn.outputs if status == "committed" else [],
        )

    exhausted = False
    while True:
        batch: list[_Slot] = []
        while carry and len(batch) < window:
            batch.append(carry.popleft())
        while not exhausted and len(batch) < window:
            req = next(stream, None)
            if req is None:
                exhausted = True
                break
            batch.append(_Slot(req))
        if not batch:
            break
        windows_run += 1

        # start
        for slot in batch:
            if slot.txn is None:
                slot.txn = manager.begin(slot.req.program, slot.req.inputs, mode=mode, tag=slot.req.seq)
                slot.attempts = 1
            elif slot.txn.status is Status.ABORTED:
                manager.rebegin(slot.txn)
                slot.attempts += 1

        # execute
        ready = []
        for slot in batch:
            txn = slot.txn
            try:
                if txn.pending is not None:
                    if txn.mode is Mode.MV3C and not txn.degraded:
                        repairs += 1
                        if repair_hook is not None:
                            repair_hook(manager, txn)
                        else:
                            manager.repair(txn)
                    else:
                        restarts += 1
                        manager.resume(txn)
                else:
                    manager.execute(txn)
            except UserAbort:
                finish(slot, "aborted")
                continue
            except WriteWriteAbort:
                ww_aborts += 1
                carry.append(slot)
                continue
            ready.append(slot)

        # validate and commit, one by one
        for slot in ready:
            try:
                result = manager.try_commit(slot.txn)
            except RepairLimitExceeded:
                finish(slot, "aborted")
                continue
            if result.committed:
                finish(slot, "committed")
            else:
                validation_failures += 1
                slot.attempts += 1
                carry.append(slot)

        if gc:
            manager.collect_garbage()

    return RunResult(
        mode=mode,
        window=window,
        outcomes=[outcomes[k] for k in sorted(outcomes)],
        windows_run=windows_run,
        validation_failures=validation_failures,
        ww_aborts=ww_aborts,
        repairs=repairs,
        restarts=restarts,
    )
