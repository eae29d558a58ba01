"""Timing harness, cost model and report emission."""
from smob.bench.cost import PAPER_RATE_MICROCENTS, CostEstimate, estimate_cost
from smob.bench.harness import (
    DEFAULT_REPETITIONS,
    OPERATIONS,
    PAPER_OP_REF_MS,
    PAPER_TX_REF_MS,
    Measurement,
    PartyAggregate,
    SizeReport,
    TransactionBench,
    bench_from_outcome,
    measure_sizes,
    run_transaction_bench,
    time_operation,
)
from smob.bench.report import (
    FORMATS,
    REPORT_SCHEMA,
    BenchReport,
    emit_report,
    environment_record,
    pin_to_one_cpu,
    plot_tables,
    validate_report,
)

__all__ = [
    "BenchReport", "CostEstimate", "DEFAULT_REPETITIONS", "FORMATS", "Measurement",
    "OPERATIONS", "PAPER_OP_REF_MS", "PAPER_RATE_MICROCENTS", "PAPER_TX_REF_MS",
    "PartyAggregate", "REPORT_SCHEMA", "SizeReport", "TransactionBench", "bench_from_outcome", "emit_report",
    "environment_record", "estimate_cost", "measure_sizes", "pin_to_one_cpu", "plot_tables",
    "run_transaction_bench", "time_operation", "validate_report",
]
