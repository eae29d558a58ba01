"""Benchmark report assembly, schema validation and emission (json, csv, plotdata)."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from smob.bench.cost import estimate_cost
from smob.bench.harness import (
    OPERATIONS,
    PAPER_MEMORY_REF,
    Measurement,
    SizeReport,
    TransactionBench,
)
from smob.privacy import ALLOW_MATRIX, DataCategory, PartyRole

SCHEMES = ("bfv", "bgv", "ckks")
FORMATS = ("json", "csv", "plotdata")

_NUM = {"type": "number"}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["environment", "params", "operations", "transactions", "sizes",
                 "memory_approx", "cost", "audit"],
    "properties": {
        "environment": {"type": "object"},
        "params": {"type": "object"},
        "operations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["op", "scheme", "preset", "reps", "mean_ns", "median_ns",
                             "stddev_ns"],
                "properties": {
                    "op": {"enum": list(OPERATIONS)},
                    "scheme": {"enum": list(SCHEMES)},
                    "preset": {"type": "string"},
                    "reps": {"type": "integer", "minimum": 1},
                    "mean_ns": _NUM, "median_ns": _NUM, "stddev_ns": _NUM,
                    "paper_ref_ms": _NUM,
                },
            },
        },
        "transactions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind", "scheme", "parties", "total_ns", "verified"],
                "properties": {
                    "kind": {"enum": ["t1", "t2", "t3"]},
                    "scheme": {"enum": list(SCHEMES)},
                    "parties": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["role", "phase_ns"],
                            "properties": {
                                "role": {"type": "string"},
                                "phase_ns": {"type": "object",
                                             "additionalProperties": _NUM},
                            },
                        },
                    },
                    "total_ns": _NUM,
                    "verified": {"type": "boolean"},
                },
            },
        },
        "sizes": {"type": "object", "additionalProperties": {"type": "integer"}},
        "memory_approx": {"type": "object"},
        "cost": {"type": "object", "required": ["measured_microcents", "paper_rate_microcents"]},
        "audit": {"type": "object", "required": ["messages", "violations", "warnings"],
                  "properties": {"messages": {"type": "integer"},
                                 "violations": {"type": "integer"},
                                 "warnings": {"type": "integer"}}},
        "flags": {"type": "object"},
    },
}


def validate_report(data: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``data`` breaks the report schema."""
    jsonschema.validate(data, REPORT_SCHEMA)


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def environment_record(pinned: str = "") -> dict:
    return {
        "cpu_model": _cpu_model(),
        "cpu_count": os.cpu_count(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "clock": "thread CPU time (time.thread_time_ns)",
        "pinning": pinned or "not pinned",
    }


def pin_to_one_cpu() -> str:
    """Restrict the process to a single CPU where the OS allows it."""
    if not hasattr(os, "sched_setaffinity"):
        return "pinning unsupported on this platform"
    cpus = sorted(os.sched_getaffinity(0))
    try:
        os.sched_setaffinity(0, {cpus[0]})
    except OSError as exc:
        return f"pinning failed: {exc}"
    return f"process pinned to cpu {cpus[0]}"


@dataclass
class BenchReport:
    environment: dict
    params: dict = field(default_factory=dict)
    operations: list[Measurement] = field(default_factory=list)
    transactions: list[TransactionBench] = field(default_factory=list)
    sizes: list[SizeReport] = field(default_factory=list)
    cost_inputs: dict = field(default_factory=lambda: {"cores": 1})

    def measurement(self, op: str, scheme: str) -> Measurement | None:
        for m in self.operations:
            if m.op == op and m.scheme == scheme:
                return m
        return None

    # ---- derived blocks

    def cost_block(self) -> dict:
        cores = self.cost_inputs.get("cores", 1)
        base = estimate_cost(1.0, 1)
        block = {
            "formula_rate_microcents_per_core_second": base.formula_rate_microcents,
            "paper_rate_microcents_per_core_second": base.paper_rate_microcents_per_core_second,
            "discrepancy": base.discrepancy,
            "cores": cores,
            "measured_microcents": {},
            "paper_rate_microcents": {},
        }
        for tx in self.transactions:
            est = estimate_cost(tx.total_ns / 1e9, cores)
            key = f"{tx.kind}/{tx.scheme}"
            block["measured_microcents"][key] = est.measured_microcents
            block["paper_rate_microcents"][key] = est.paper_rate_microcents
        return block

    def audit_block(self) -> dict:
        messages = sum(tx.audit.messages for tx in self.transactions)
        violations = sum(tx.audit.violations for tx in self.transactions)
        warnings = sum(len(tx.audit.warnings) for tx in self.transactions)
        return {"messages": messages, "violations": violations, "warnings": warnings}

    def memory_block(self) -> dict:
        out = {"method": "serialized object sizes plus tracemalloc high-water mark; "
                         "not whole-process RSS"}
        for s in self.sizes:
            out[f"{s.scheme}/{s.preset}"] = {
                "serialized_total_bytes": s.serialized_total_bytes,
                "allocator_peak_bytes": s.allocator_peak_bytes,
                "paper_ref": PAPER_MEMORY_REF[s.scheme],
            }
        if self.sizes:
            out["paper_ref_plain"] = PAPER_MEMORY_REF["plain"]
        return out

    def flags(self) -> dict:
        """Qualitative comparisons with the published observations; never pass/fail."""
        flags: dict = {}
        for scheme in SCHEMES:
            ranked = [(m.mean_ns, m.op) for m in self.operations
                      if m.scheme == scheme and m.op != "context_creation"]
            if len(ranked) == len(OPERATIONS) - 1:
                top = [op for _, op in sorted(ranked, reverse=True)[:2]]
                flags[f"{scheme}.encrypt_relinearize_top2"] = set(top) == {"encrypt",
                                                                         "relinearize"}
                flags[f"{scheme}.top2_operations"] = top
            ctx_m = self.measurement("context_creation", scheme)
            if ctx_m is not None:
                flags[f"{scheme}.context_creation_within_5s"] = ctx_m.mean_ns <= 5e9
        for tx in self.transactions:
            if tx.kind in ("t1", "t2"):
                flags[f"{tx.kind}/{tx.scheme}.customer_share_below_rest"] = (
                    tx.share(PartyRole.CUSTOMER) < 0.5)
        totals = {tx.scheme: tx.total_ns for tx in self.transactions if tx.kind == "t1"}
        if len(totals) == 3:
            flags["t1.ckks_lowest_total"] = min(totals, key=totals.get) == "ckks"
        return flags

    def to_dict(self) -> dict:
        sizes = {}
        for s in self.sizes:
            for name, nbytes in s.objects.items():
                sizes[f"{s.scheme}/{s.preset}/{name}"] = nbytes
        return {
            "environment": self.environment,
            "params": self.params,
            "operations": [m.to_dict() for m in self.operations],
            "transactions": [tx.to_dict() for tx in self.transactions],
            "sizes": sizes,
            "memory_approx": self.memory_block(),
            "cost": self.cost_block(),
            "audit": self.audit_block(),
            "flags": self.flags(),
        }


# --------------------------------------------------------------------------
# emission


def render_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _flatten(prefix: str, value, rows: list) -> None:
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, "" if value is None else value))


def render_csv(data: dict) -> str:
    rows: list = []
    _flatten("", data, rows)
    return _csv_text(("key", "value"), rows)


def _ms(ns) -> str:
    return "" if ns is None else f"{ns / 1e6:.6f}"


def plot_tables(data: dict) -> dict[str, str]:
    """Per-figure numeric tables; file name -> CSV text."""
    ops = {(o["op"], o["scheme"]): o for o in data["operations"]}
    tables = {}
    tables["fig4_context_creation.csv"] = _csv_text(
        ("scheme", "mean_ms", "median_ms", "stddev_ms", "paper_ref_ms"),
        [(s, _ms(o["mean_ns"]), _ms(o["median_ns"]), _ms(o["stddev_ns"]),
          o.get("paper_ref_ms", ""))
         for s in SCHEMES if (o := ops.get(("context_creation", s)))])
    tables["fig5_operations.csv"] = _csv_text(
        ("operation", *SCHEMES),
        [(op, *(_ms(ops[(op, s)]["mean_ns"]) if (op, s) in ops else "" for s in SCHEMES))
         for op in OPERATIONS])
    for fig, kind in (("fig6", "t1"), ("fig7", "t2"), ("fig8", "t3")):
        rows = []
        for tx in data["transactions"]:
            if tx["kind"] != kind:
                continue
            for p in tx["parties"]:
                rows.append((tx["scheme"], p.get("id", ""), p["role"],
                             *(_ms(p["phase_ns"].get(ph, 0)) for ph in _PHASES),
                             _ms(sum(p["phase_ns"].values()))))
            rows.append((tx["scheme"], "total", "", *([""] * len(_PHASES)), _ms(tx["total_ns"])))
        tables[f"{fig}_{kind}_parties.csv"] = _csv_text(
            ("scheme", "party", "role", *_PHASES, "total_ms"), rows)
    mem_rows = [(key.split("/")[0], key.split("/", 1)[1], nbytes)
                for key, nbytes in sorted(data["sizes"].items())]
    for key, block in sorted(data["memory_approx"].items()):
        if isinstance(block, dict):
            mem_rows.append((key.split("/")[0], key.split("/", 1)[1] + "/allocator_peak",
                             block["allocator_peak_bytes"]))
    tables["table2_memory.csv"] = _csv_text(("scheme", "object", "bytes"), mem_rows)
    tables["table1_allow_matrix.csv"] = _csv_text(
        ("role", *(c.name.lower() for c in DataCategory)),
        [(r.label, *(int(c in ALLOW_MATRIX[r]) for c in DataCategory)) for r in PartyRole])
    return tables


_PHASES = ("keygen", "evalkey", "encrypt", "calculate", "relinearize", "decrypt")


def emit_report(report: BenchReport | dict, fmt: str, out) -> list[Path]:
    """Write ``report`` as ``fmt``; ``plotdata`` treats ``out`` as a directory.

    Output is a pure function of the report, so emitting twice gives
    byte-identical files. Unwritable paths raise ``OSError``.
    """
    data = report.to_dict() if isinstance(report, BenchReport) else report
    out = Path(out)
    if fmt == "json":
        validate_report(data)
        out.write_text(render_json(data))
        return [out]
    if fmt == "csv":
        out.write_text(render_csv(data))
        return [out]
    if fmt == "plotdata":
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in sorted(plot_tables(data).items()):
            path = out / name
            path.write_text(text)
            written.append(path)
        return written
    raise ValueError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")
