"""Banking workload: one Account table and a central fee account.

TransferMoney is split into three predicates: the sender lookup (P1) whose
closure holds the guard and the sender update, and two children for the
receiver (P2) and the fee account (P3).  Concurrent transfers conflict only
on P3.
"""

from __future__ import annotations

import random

from mv3c.predicates import PointKey, Scan
from mv3c.store import Column, Database, Table
from mv3c.workloads.scheduler import TxnRequest

FEE_ACC_ID = 0
ID, BAL = 0, 1
BONUS_THRESHOLD = 500.0


def account_table() -> Table:
    return Table("Account", [Column("id", "int64"), Column("bal", "float64")], ["id"])


def make_banking_db(n_accounts: int = 100_000, initial_balance: float = 1000.0,
                    balances: dict | None = None, fee_balance: float = 0.0) -> Database:
    """Accounts 1..n_accounts plus the fee account.

    ``balances`` maps account id to balance and, when given, replaces the
    uniform ``initial_balance`` layout.
    """
    table = account_table()
    if balances is None:
        balances = {i: initial_balance for i in range(1, n_accounts + 1)}
    rows = [(FEE_ACC_ID, float(fee_balance))]
    rows.extend((i, float(b)) for i, b in balances.items() if i != FEE_ACC_ID)
    table.load(rows)
    return Database([table])


def transfer_fee(amount: float) -> float:
    return 1.0 if amount < 100 else amount * 0.01


def transfer_money(tx, fm_acc: int, to_acc: int, amount: float) -> None:
    fee = transfer_fee(amount)

    def on_sender(tx, rows):
        if not rows:
            tx.abort("no such account")
        fm_bal = rows[0][BAL]
        if not fm_bal > amount + fee:
            tx.abort("insufficient funds")
        tx.update("Account", fm_acc, bal=fm_bal - (amount + fee))

        def on_receiver(tx, rows):
            tx.update("Account", to_acc, bal=rows[0][BAL] + amount)

        def on_fee(tx, rows):
            tx.update("Account", FEE_ACC_ID, bal=rows[0][BAL] + fee)

        tx.read(PointKey("Account", to_acc), on_receiver, result_columns=("bal",))
        tx.read(PointKey("Account", FEE_ACC_ID), on_fee, result_columns=("bal",))

    tx.read(PointKey("Account", fm_acc), on_sender, result_columns=("bal",))


def no_fee_transfer_money(tx, fm_acc: int, to_acc: int, amount: float) -> None:
    def on_sender(tx, rows):
        if not rows:
            tx.abort("no such account")
        fm_bal = rows[0][BAL]
        if not fm_bal > amount:
            tx.abort("insufficient funds")
        tx.update("Account", fm_acc, bal=fm_bal - amount)

        def on_receiver(tx, rows):
            tx.update("Account", to_acc, bal=rows[0][BAL] + amount)

        tx.read(PointKey("Account", to_acc), on_receiver, result_columns=("bal",))

    tx.read(PointKey("Account", fm_acc), on_sender, result_columns=("bal",))


def sum_all(tx) -> None:
    def on_accounts(tx, rows):
        tx.emit(sum(r[BAL] for r in rows))

    tx.read(Scan("Account"), on_accounts, result_columns=("bal",))


def bonus(tx, threshold: float = BONUS_THRESHOLD, cache: bool = True) -> None:
    """Add 1 to every account holding at least ``threshold``."""

    def on_rich(tx, rows):
        for r in rows:
            tx.update("Account", r[ID], bal=r[BAL] + 1.0)
        tx.emit(len(rows))

    tx.read(Scan("Account", bal=(threshold, None)), on_rich, cache=cache, result_columns=("bal",))


PROGRAMS = {
    "TransferMoney": transfer_money,
    "NoFeeTransferMoney": no_fee_transfer_money,
    "SumAll": sum_all,
    "Bonus": bonus,
}


def banking_stream(n_txns: int, seed: int = 0, conflict_pct: float = 100.0,
                   n_accounts: int = 100_000, max_amount: float = 200.0) -> list[TxnRequest]:
    """TransferMoney / NoFeeTransferMoney mix with exactly ``conflict_pct`` percent fee transfers."""
    rng = random.Random(seed)
    n_fee = round(n_txns * conflict_pct / 100.0)
    kinds = ["TransferMoney"] * n_fee + ["NoFeeTransferMoney"] * (n_txns - n_fee)
    rng.shuffle(kinds)
    out = []
    for seq, name in enumerate(kinds):
        fm = rng.randint(1, n_accounts)
        to = rng.randint(1, n_accounts - 1)
        if to >= fm:
            to += 1
        amount = round(rng.uniform(1.0, max_amount), 2)
        out.append(TxnRequest(seq, name, PROGRAMS[name], {"fm_acc": fm, "to_acc": to, "amount": amount}))
    return out
