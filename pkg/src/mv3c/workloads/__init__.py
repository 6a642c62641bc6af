"""Workload programs, input generators and the window scheduler."""

from mv3c.workloads.scheduler import RunResult, TxnOutcome, TxnRequest, run_windowed
from mv3c.workloads.zipf import ZipfGenerator

__all__ = ["RunResult", "TxnOutcome", "TxnRequest", "ZipfGenerator", "run_windowed"]
