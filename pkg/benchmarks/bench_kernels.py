"""Compiled vs pure-Python kernels: visibility, row matching, table scan.

    python benchmarks/bench_kernels.py --rows 100000 --repeat 5

Also times one windowed banking run end to end under each kernel set by
re-running itself with MV3C_PURE_PYTHON set.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

from mv3c import _kernels_py
from mv3c.engine import TransactionManager
from mv3c.workloads.banking import make_banking_db, transfer_money

try:
    from mv3c import _kernels
except ImportError:  # extension not built
    _kernels = None


def build_table(rows: int):
    """Banking table with a few committed and uncommitted versions per hot row."""
    db = make_banking_db(rows)
    m = TransactionManager(db)
    for i in range(1, min(rows, 2000), 2):
        out = m.run_to_completion(transfer_money, {"fm_acc": i, "to_acc": i + 1, "amount": 5.0})
        assert out.committed
    # leave some uncommitted versions in front
    reader = m.begin(transfer_money, {"fm_acc": 3, "to_acc": 4, "amount": 1.0})
    m.execute(reader)
    return db.tables["Account"], reader


def bench(mod, table, reader, repeat: int) -> dict:
    chains = list(table.rows.values())
    cons = ((1, 990.0, None),)
    start, tid = reader.start_ts, reader.txn_id
    rows = [mod.visible_value(c, start, tid) for c in chains]

    def vis():
        f = mod.visible_value
        for c in chains:
            f(c, start, tid)

    def match():
        f = mod.row_matches
        for r in rows:
            f(r, cons)

    def scan():
        mod.scan_chains(table.rows, cons, start, tid)

    return {
        name: min(timeit.repeat(fn, number=1, repeat=repeat))
        for name, fn in (("visible_value", vis), ("row_matches", match), ("scan_chains", scan))
    }


def end_to_end(pure: bool, txns: int) -> float:
    env = dict(os.environ)
    env.pop("MV3C_PURE_PYTHON", None)
    if pure:
        env["MV3C_PURE_PYTHON"] = "1"
    cmd = [sys.executable, "-m", "mv3c", "run", "--benchmark", "banking", "--window", "16",
           "--txns", str(txns), "--scale", "0.01", "--output", "json"]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out)["wall_time_s"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--txns", type=int, default=5000, help="end-to-end run size; 0 skips it")
    args = ap.parse_args(argv)

    table, reader = build_table(args.rows)
    pure = bench(_kernels_py, table, reader, args.repeat)
    comp = bench(_kernels, table, reader, args.repeat) if _kernels is not None else None
    print(f"{'kernel':<16}{'pure (s)':>12}{'compiled (s)':>14}{'speedup':>9}")
    for name, t in pure.items():
        if comp is None:
            print(f"{name:<16}{t:>12.4f}{'n/a':>14}{'':>9}")
        else:
            print(f"{name:<16}{t:>12.4f}{comp[name]:>14.4f}{t / comp[name]:>8.1f}x")
    if args.txns:
        tp, tc = end_to_end(True, args.txns), end_to_end(False, args.txns)
        print(f"{'banking run':<16}{tp:>12.4f}{tc:>14.4f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
