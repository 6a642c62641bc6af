"""Benchmark command line: ``mv3c run --benchmark banking --window 16 ...``.

Exit status is 0 when the run and every requested verifier pass, 1 when a
verifier fails and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field

from mv3c.config import VERIFY_CHOICES, ConfigError, RunConfig, coerce, load_config, parse_verify
from mv3c.engine import Mode, TransactionManager, WriteWritePolicy
from mv3c.store import Policy
from mv3c.verify import EquivalenceChecker, verify_serializability
from mv3c.workloads.banking import banking_stream, make_banking_db
from mv3c.workloads.scheduler import run_windowed
from mv3c.workloads.trading import make_trading_db, trading_stream

REPORT_FIELDS = (
    "benchmark", "mode", "window", "seed", "scale", "attempted", "committed", "aborted",
    "in_flight", "repairs", "restarts", "validation_failures", "ww_aborts",
    "predicates_evaluated", "closures_run", "versions_created", "rows_scanned",
    "wall_time_s", "commit_log_digest", "verify_ok",
)


@dataclass
class RunReport:
    benchmark: str
    mode: str
    window: int
    seed: int
    scale: float
    attempted: int
    committed: int
    aborted: int
    in_flight: int
    repairs: int
    restarts: int
    validation_failures: int
    ww_aborts: int
    counters: dict
    wall_time_s: float
    commit_log_digest: str
    verify: dict = field(default_factory=dict)

    @property
    def verify_ok(self) -> bool:
        return all(v["ok"] for v in self.verify.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verify_ok"] = self.verify_ok
        return d

    def flat(self) -> dict:
        d = self.to_dict()
        d.update(d.pop("counters"))
        d.pop("verify")
        return {k: d[k] for k in REPORT_FIELDS}


def commit_log_digest(history) -> str:
    """sha256 over the committed order: timestamp, request tag and outputs."""
    h = hashlib.sha256()
    for rec in sorted(history, key=lambda r: r.commit_ts):
        h.update(repr((rec.commit_ts, rec.tag, rec.outputs)).encode())
    return h.hexdigest()


def build_workload(cfg: RunConfig):
    """Return ``(make_db, requests)`` for the configured benchmark."""
    n = cfg.rows
    if cfg.benchmark == "banking":
        def make_db():
            return make_banking_db(n, cfg.initial_balance)

        requests = banking_stream(cfg.txns, cfg.seed, cfg.conflict_pct, n, cfg.max_amount)
    else:
        def make_db():
            return make_trading_db(n, n, cfg.seed)

        requests = trading_stream(cfg.txns, cfg.seed, cfg.zipf_alpha, n, n, cfg.price_update_pct, cfg.lines)
    return make_db, requests


def run(cfg: RunConfig) -> RunReport:
    make_db, requests = build_workload(cfg)
    manager = TransactionManager(
        make_db(),
        mode=Mode(cfg.mode),
        policy=WriteWritePolicy(Policy(cfg.ww_policy)),
        attribute_level=cfg.attr_validation,
        result_set_fixing=cfg.resultset_fix,
    )
    checker = EquivalenceChecker() if "repair-equivalence" in cfg.verify else None
    t0 = time.perf_counter()
    result = run_windowed(manager, requests, cfg.window, repair_hook=checker)
    wall = time.perf_counter() - t0

    verify = {}
    if "serializability" in cfg.verify:
        div = verify_serializability(make_db, manager)
        verify["serializability"] = {"ok": div is None, "detail": "" if div is None else str(div)}
    if checker is not None:
        detail = "; ".join(f"txn {tag}: {msg}" for tag, msg in checker.failures[:5])
        verify["repair-equivalence"] = {
            "ok": not checker.failures,
            "checked": checker.checked,
            "detail": detail,
        }

    return RunReport(
        benchmark=cfg.benchmark,
        mode=cfg.mode,
        window=cfg.window,
        seed=cfg.seed,
        scale=cfg.scale,
        attempted=len(requests),
        committed=result.committed,
        aborted=result.aborted,
        in_flight=result.in_flight,
        repairs=result.repairs,
        restarts=result.restarts,
        validation_failures=result.validation_failures,
        ww_aborts=result.ww_aborts,
        counters=manager.counters.as_dict(),
        wall_time_s=round(wall, 6),
        commit_log_digest=commit_log_digest(manager.history),
        verify=verify,
    )


def format_report(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerow(report.flat())
        return buf.getvalue().rstrip("\n")
    rows = list(report.flat().items())
    for name, res in report.verify.items():
        rows.append(("verify " + name, "pass" if res["ok"] else f"FAIL {res['detail']}"))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


# flag name -> RunConfig field, for flags whose values need coercion
_FLAG_FIELDS = {
    "benchmark": "benchmark", "mode": "mode", "window": "window", "txns": "txns",
    "seed": "seed", "zipf_alpha": "zipf_alpha", "conflict_pct": "conflict_pct",
    "ww_policy": "ww_policy", "attr_validation": "attr_validation",
    "resultset_fix": "resultset_fix", "scale": "scale",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mv3c", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one workload configuration")
    r.add_argument("--benchmark", choices=("banking", "trading"))
    r.add_argument("--mode", choices=("mv3c", "abort-restart"))
    r.add_argument("--window", type=int, metavar="N")
    r.add_argument("--txns", type=int, metavar="N")
    r.add_argument("--seed", type=int, metavar="U64")
    r.add_argument("--zipf-alpha", type=float, metavar="F")
    r.add_argument("--conflict-pct", type=float, metavar="F", help="percentage of fee-paying transfers")
    r.add_argument("--ww-policy", choices=("allow", "abort"))
    r.add_argument("--attr-validation", choices=("on", "off"))
    r.add_argument("--resultset-fix", choices=("on", "off"))
    r.add_argument("--scale", type=float, metavar="F", help="table-size multiplier on 100,000 rows")
    r.add_argument("--verify", action="append", metavar="{" + ",".join(VERIFY_CHOICES) + "}",
                   help="comma-separated; may be repeated")
    r.add_argument("--output", choices=("text", "json", "csv"), default="text")
    r.add_argument("--report", metavar="PATH", help="write the report here instead of stdout")
    r.add_argument("--config", metavar="PATH", help="INI config file; flags override it")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(cfg, name, coerce(name, value))
    if args.verify is not None:
        cfg.verify = parse_verify(args.verify)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"mv3c: config error: {exc}", file=sys.stderr)
        return 2
    report = run(cfg)
    text = format_report(report, args.output)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if not report.verify_ok:
        for name, res in report.verify.items():
            if not res["ok"]:
                print(f"mv3c: {name} check failed: {res['detail']}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
