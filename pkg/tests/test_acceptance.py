"""Acceptance criteria 1 to 8.

Each criterion records one PASS/FAIL line; ``conftest.py`` prints them in the
terminal summary. Paper-preset benchmark repetitions default to 2 and can be
raised with ``SMOB_BENCH_REPS``.
"""
from __future__ import annotations

import itertools
import os
import time

import numpy as np
import pytest

from oracles import negacyclic_schoolbook
from smob.bench import (
    OPERATIONS,
    PAPER_TX_REF_MS,
    BenchReport,
    environment_record,
    estimate_cost,
    run_transaction_bench,
    time_operation,
    validate_report,
)
from smob.fhe import (
    Context,
    Scheme,
    add,
    ckks_decode,
    ckks_encode,
    decode_integers,
    decrypt,
    encode_integers,
    encrypt,
    keygen,
    make_params,
    multiply,
    noise_budget,
    relinearize,
    rescale,
    sub,
)
from smob.ring import find_primes, make_rng, ring_mul, sample_uniform
from smob.transactions import (
    KINDS,
    Parties,
    WorkloadSpec,
    run_transaction,
    totals_match,
    verify_outcome,
)
from smob.transport import (
    deserialize_ciphertext,
    deserialize_public_key,
    deserialize_relin_key,
    make_network,
    serialize_ciphertext,
    serialize_public_key,
    serialize_relin_key,
)

SCHEMES = ("bfv", "bgv", "ckks")
BENCH_REPS = int(os.environ.get("SMOB_BENCH_REPS", "2"))

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)


def _enc(ctx, pk, values, rng):
    if ctx.scheme is Scheme.CKKS:
        return encrypt(pk, ckks_encode(values, ctx.params.scale, ctx), ctx, rng)
    return encrypt(pk, encode_integers(values, ctx), ctx, rng)


def _dec(ctx, sk, ct, count):
    pt = decrypt(sk, ct, ctx)
    if ctx.scheme is Scheme.CKKS:
        return ckks_decode(pt, ctx)[:count].real
    return decode_integers(pt, ctx)[:count]


def test_criterion_1_ring_oracle():
    start = time.perf_counter()
    mismatches = 0
    for n in (8, 16, 64, 256):
        rng = make_rng(7 + n)
        moduli = tuple(find_primes(54, n, 1))
        q = moduli[0]
        for _ in range(1000):
            a, b = sample_uniform(moduli, n, rng), sample_uniform(moduli, n, rng)
            if not np.array_equal(ring_mul(a, b).data[0], negacyclic_schoolbook(a.data[0],
                                                                               b.data[0], q)):
                mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60
    record(1, ok, f"4000 products, {mismatches} mismatches, {elapsed:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def paper_contexts():
    return {s: Context(make_params(s, "paper")) for s in SCHEMES}


@pytest.mark.slow
def test_criterion_2_round_trips(desk_contexts, paper_contexts):
    rng = np.random.default_rng(2)
    failures = []
    ckks_err = 0.0
    for preset, contexts in (("desk", desk_contexts), ("paper", paper_contexts)):
        for s in SCHEMES:
            ctx = contexts[s]
            sk, pk, _ = keygen(ctx, np.random.default_rng(3))
            for _ in range(100):
                if s == "ckks":
                    v = rng.uniform(-1000, 1000, 64)
                    err = float(np.max(np.abs(_dec(ctx, sk, _enc(ctx, pk, v, rng), 64) - v)))
                    if preset == "desk":
                        ckks_err = max(ckks_err, err)
                    if err > 1e-4:
                        failures.append(f"{preset}/{s} err {err:.2e}")
                else:
                    v = rng.integers(0, ctx.params.plain_modulus, 64)
                    if not np.array_equal(_dec(ctx, sk, _enc(ctx, pk, v, rng), 64), v):
                        failures.append(f"{preset}/{s}")
    ok = not failures
    record(2, ok, f"600 round trips, desk CKKS max error {ckks_err:.1e}"
           + (f"; failed: {failures[:3]}" if failures else ""))
    assert ok, failures


def test_criterion_3_homomorphism(desk_contexts):
    rng = np.random.default_rng(3)
    problems = []
    budgets = {}
    for i, s in enumerate(SCHEMES):
        ctx = desk_contexts[s]
        sk, pk, rk = keygen(ctx, np.random.default_rng(30 + i))
        if s == "ckks":
            a, b = rng.uniform(-100, 100, 1000), rng.uniform(-100, 100, 1000)
            ca, cb = _enc(ctx, pk, a, rng), _enc(ctx, pk, b, rng)
            prod = rescale(relinearize(rk, multiply(ca, cb, ctx), ctx), ctx)
            err = max(np.max(np.abs(_dec(ctx, sk, add(ca, cb), 1000) - (a + b))),
                      np.max(np.abs(_dec(ctx, sk, prod, 1000) - a * b)))
            if err > 1e-3:
                problems.append(f"ckks error {err:.2e}")
            continue
        t = ctx.params.plain_modulus
        a, b = rng.integers(0, t, 1000), rng.integers(0, t, 1000)
        ca, cb = _enc(ctx, pk, a, rng), _enc(ctx, pk, b, rng)
        prod = relinearize(rk, multiply(ca, cb, ctx), ctx)
        if not np.array_equal(_dec(ctx, sk, add(ca, cb), 1000), (a + b) % t):
            problems.append(f"{s} add")
        if not np.array_equal(_dec(ctx, sk, prod, 1000), a * b % t):
            problems.append(f"{s} multiply")
        # canonical workload: (350 + 280) * 2 - 100
        total = add(_enc(ctx, pk, [350], rng), _enc(ctx, pk, [280], rng))
        total = relinearize(rk, multiply(total, _enc(ctx, pk, [2], rng), ctx), ctx)
        total = sub(total, _enc(ctx, pk, [100], rng))
        budgets[s] = noise_budget(sk, total, ctx)
        if budgets[s] <= 0 or _dec(ctx, sk, total, 1)[0] != 1160:
            problems.append(f"{s} canonical workload")
    ok = not problems
    record(3, ok, f"1000 pairs per scheme; workload budgets {budgets} bits"
           + (f"; {problems}" if problems else ""))
    assert ok, problems


@pytest.fixture(scope="module")
def matrix(desk_contexts):
    """Every transaction kind, scheme and provider count, with elapsed time."""
    start = time.perf_counter()
    outcomes = {}
    for s, p in itertools.product(SCHEMES, (1, 2, 4, 8)):
        w = WorkloadSpec.random(s, p, seed=(p, len(s)))
        with Parties.create(desk_contexts[s], p, seed=p) as parties:
            for kind in KINDS:
                outcomes[kind, s, p] = (w, run_transaction(kind, parties, w))
    return outcomes, time.perf_counter() - start


def test_criterion_4_transactions(matrix):
    outcomes, elapsed = matrix
    problems = []
    for (kind, s, p), (w, out) in outcomes.items():
        if not verify_outcome(out, w).ok:
            problems.append(f"{kind}/{s}/P={p} verify")
    for s, p in itertools.product(SCHEMES, (1, 2, 4, 8)):
        totals = [outcomes[k, s, p][1].total for k in KINDS]
        for a, b in itertools.combinations(totals, 2):
            if not totals_match(a, b, Scheme.parse(s), rtol=2e-3):
                problems.append(f"{s}/P={p} disagree {totals}")
    ok = not problems and elapsed < 300
    record(4, ok, f"{len(outcomes)} transactions verified in {elapsed:.1f} s"
           + (f"; {problems[:3]}" if problems else ""))
    assert ok, problems


FAULT_CASES = [
    (kind, "plain_price_to_platform", "allow-matrix") for kind in KINDS
] + [
    (kind, "secret_key_on_wire", "allow-matrix") for kind in KINDS
] + [
    (kind, "customer_key_to_platform", "customer-key-at-platform") for kind in ("t1", "t2")
]


def test_criterion_5_privacy_audit(matrix, desk_contexts):
    outcomes, _ = matrix
    violations = sum(out.audit.violations for _, out in outcomes.values())
    messages = sum(out.audit.messages for _, out in outcomes.values())
    wrong = []
    w = WorkloadSpec([350, 280], 2, 100, "bgv")
    for kind, fault, rule in FAULT_CASES:
        with Parties.create(desk_contexts["bgv"], 2) as parties:
            out = run_transaction(kind, parties, w, faults=[fault])
        if out.audit.violation_rules() != [rule]:
            wrong.append(f"{kind}/{fault}: {out.audit.violation_rules()}")
    ok = violations == 0 and not wrong
    record(5, ok, f"{violations} violations over {messages} messages; "
           f"{len(FAULT_CASES) - len(wrong)}/{len(FAULT_CASES)} fault cases exact")
    assert ok, wrong


def test_criterion_6_serialization_and_transport(desk_contexts):
    rng = np.random.default_rng(6)
    problems = []
    size = None
    for i, s in enumerate(SCHEMES):
        ctx = desk_contexts[s]
        sk, pk, rk = keygen(ctx, np.random.default_rng(60 + i))
        for _ in range(20):
            ct = _enc(ctx, pk, rng.integers(0, 100, 16), rng)
            blob = serialize_ciphertext(ct)
            if deserialize_ciphertext(blob, ctx) != ct:
                problems.append(f"{s} ciphertext")
            if s == "bfv":
                size = len(blob)
        if serialize_public_key(deserialize_public_key(serialize_public_key(pk), ctx)) \
                != serialize_public_key(pk):
            problems.append(f"{s} public key")
        if serialize_relin_key(deserialize_relin_key(serialize_relin_key(rk), ctx)) \
                != serialize_relin_key(rk):
            problems.append(f"{s} relin key")
    if size != 131086:
        problems.append(f"ciphertext size {size}")
    for s, kind in itertools.product(SCHEMES, KINDS):
        w = WorkloadSpec.random(s, 2, seed=66)
        with Parties.create(desk_contexts[s], 2, seed=5) as parties:
            local = run_transaction(kind, parties, w)
        with Parties.create(desk_contexts[s], 2, network=make_network("tcp"), seed=5) as parties:
            remote = run_transaction(kind, parties, w)
        if remote.total != local.total or \
                [m.payload for m in remote.trace] != [m.payload for m in local.trace]:
            problems.append(f"tcp/{s}/{kind}")
    ok = not problems
    record(6, ok, f"bit-exact blobs, fresh ciphertext {size} bytes, tcp == inproc for 9 runs"
           if ok else str(problems))
    assert ok, problems


@pytest.fixture(scope="module")
def paper_report(paper_contexts):
    ops = [time_operation(op, s, repetitions=BENCH_REPS,
                          ctx=None if op == "context_creation" else paper_contexts[s],
                          preset="paper")
           for s in SCHEMES for op in OPERATIONS]
    txs = [run_transaction_bench(k, s, repetitions=BENCH_REPS, ctx=paper_contexts[s])
           for k in KINDS for s in SCHEMES]
    report = BenchReport(environment_record(), {"preset": "paper", "reps": BENCH_REPS},
                         ops, txs)
    return report.to_dict()


@pytest.mark.slow
def test_criterion_7_benchmark_grid(paper_report):
    data = paper_report
    validate_report(data)
    grid = {(o["op"], o["scheme"]) for o in data["operations"]}
    complete = grid == {(op, s) for op in OPERATIONS for s in SCHEMES}
    txs = {(t["kind"], t["scheme"]): t for t in data["transactions"]}
    emitted = all(txs["t1", s]["paper_ref_ms"] == PAPER_TX_REF_MS[s] for s in SCHEMES)
    verified = all(t["verified"] for t in txs.values())
    flags = data["flags"]
    top2 = {s: flags[f"{s}.top2_operations"] for s in SCHEMES}
    flags_ok = all(flags[f"{s}.encrypt_relinearize_top2"] for s in SCHEMES)
    t1_ms = ", ".join(f"{s} {txs['t1', s]['total_ns'] / 1e6:.0f} ms "
                      f"(ref {PAPER_TX_REF_MS[s]:.0f})" for s in SCHEMES)
    record(7, complete and emitted and verified and flags_ok,
           f"grid {len(grid)}/21 at n=16384, reps {BENCH_REPS}; T1 totals {t1_ms}; "
           f"top-2 operations {top2}")
    assert complete and emitted and verified


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="encryption is not among the two most expensive "
                                       "operations in this implementation; see README")
def test_criterion_7_encrypt_relinearize_flag(paper_report):
    flags = paper_report["flags"]
    assert all(flags[f"{s}.encrypt_relinearize_top2"] for s in SCHEMES)


def test_criterion_8_cost_model():
    est = estimate_cost(0.104)
    ok = est.paper_rate_microcents < 3 and est.discrepancy and \
        abs(est.formula_rate_microcents - 1736.1) < 0.1
    record(8, ok, f"0.104 s -> {est.paper_rate_microcents:.3f} microcents at the quoted rate; "
           f"formula rate {est.formula_rate_microcents:.1f} per core-second, "
           f"discrepancy={est.discrepancy}")
    assert ok
