"""Trading workload: TradeOrder and blind-write PriceUpdate.

Order payloads are encrypted with a per-customer key.  The "cipher" is a
SHAKE-128 keystream XOR: deterministic and cheap, standing in for real
decryption work that a repair avoids repeating.
"""

from __future__ import annotations

import hashlib
import json
import random

from mv3c.predicates import PointKey
from mv3c.store import Column, Database, Table
from mv3c.workloads.scheduler import TxnRequest
from mv3c.workloads.zipf import ZipfGenerator

S_ID, SYMBOL, S_PRICE = 0, 1, 2
C_ID, CIPHER_KEY = 0, 1


def trading_tables() -> list[Table]:
    return [
        Table("Security", [Column("s_id"), Column("symbol", "str", 8), Column("s_price", "float64")], ["s_id"]),
        Table("Customer", [Column("c_id"), Column("cipher_key")], ["c_id"]),
        Table("Trade", [Column("t_id"), Column("t_encrypted_data", "str")], ["t_id"]),
        Table(
            "TradeLine",
            [Column("t_id"), Column("tl_id"), Column("tl_encrypted_data", "str")],
            ["t_id", "tl_id"],
        ),
    ]


def make_trading_db(n_securities: int = 100_000, n_customers: int = 100_000, seed: int = 0) -> Database:
    rng = random.Random(seed)
    security, customer, trade, trade_line = trading_tables()
    security.load(
        (s, f"S{s:07d}", round(rng.uniform(1.0, 500.0), 2)) for s in range(1, n_securities + 1)
    )
    customer.load((c, customer_key(seed, c)) for c in range(1, n_customers + 1))
    return Database([security, customer, trade, trade_line])


def customer_key(seed: int, c_id: int) -> int:
    digest = hashlib.blake2b(f"{seed}:{c_id}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def _keystream(key: int, n: int) -> bytes:
    return hashlib.shake_128(key.to_bytes(8, "little")).digest(n)


def encrypt(key: int, plaintext: bytes) -> str:
    ks = _keystream(key, len(plaintext))
    return bytes(a ^ b for a, b in zip(plaintext, ks)).hex()


def decrypt(key: int, ciphertext: str) -> bytes:
    data = bytes.fromhex(ciphertext)
    ks = _keystream(key, len(data))
    return bytes(a ^ b for a, b in zip(data, ks))


def make_order_payload(cipher_key: int, t_id: int, ts: int, items: list) -> str:
    """``items`` is a list of (s_id, is_buy)."""
    body = json.dumps({"t_id": t_id, "ts": ts, "items": [[s, bool(b)] for s, b in items]})
    return encrypt(cipher_key, body.encode())


def trade_order(tx, c_id: int, payload: str) -> None:
    def on_customer(tx, rows):
        key = rows[0][CIPHER_KEY]
        order = json.loads(decrypt(key, payload))
        t_id = order["t_id"]
        tx.insert("Trade", (t_id, encrypt(key, str(order["ts"]).encode())))
        for tl_id, (s_id, buy) in enumerate(order["items"]):

            def on_security(tx, rows, tl_id=tl_id, s_id=s_id, buy=buy):
                price = rows[0][S_PRICE]
                traded = -price if buy else price
                tx.insert("TradeLine", (t_id, tl_id, encrypt(key, f"{s_id}:{traded!r}".encode())))
                tx.emit(traded)

            tx.read(PointKey("Security", s_id), on_security, result_columns=("s_price",))

    tx.read(PointKey("Customer", c_id), on_customer, result_columns=("cipher_key",))


def price_update(tx, s_id: int, price: float) -> None:
    tx.update("Security", s_id, s_price=price)


def rename_security(tx, s_id: int, symbol: str) -> None:
    """Touches only ``symbol``, which no trade order monitors; not in the default mix."""
    tx.update("Security", s_id, symbol=symbol)


PROGRAMS = {"TradeOrder": trade_order, "PriceUpdate": price_update}


def trading_stream(n_txns: int, seed: int = 0, alpha: float = 1.2, n_securities: int = 100_000,
                   n_customers: int = 100_000, price_update_pct: float = 50.0,
                   lines: int = 5) -> list[TxnRequest]:
    """Order/price-update mix; security ids in both follow Zipf(alpha).

    Payloads are encrypted with the keys of ``make_trading_db(..., seed=seed)``.
    """
    rng = random.Random(seed ^ 0x5EED)
    zipf = ZipfGenerator(n_securities, alpha, seed)
    n_updates = round(n_txns * price_update_pct / 100.0)
    kinds = ["PriceUpdate"] * n_updates + ["TradeOrder"] * (n_txns - n_updates)
    rng.shuffle(kinds)
    out = []
    t_id = 0
    for seq, name in enumerate(kinds):
        if name == "PriceUpdate":
            inputs = {"s_id": zipf.sample(), "price": round(rng.uniform(1.0, 500.0), 2)}
        else:
            t_id += 1
            c_id = rng.randint(1, n_customers)
            items = [(int(s), rng.random() < 0.5) for s in zipf.sample(lines)]
            inputs = {"c_id": c_id, "payload": make_order_payload(customer_key(seed, c_id), t_id, seq, items)}
        out.append(TxnRequest(seq, name, PROGRAMS[name], inputs))
    return out
