from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import pytest

import smob.transactions as tx
from smob.errors import AlignmentError, OrchestrationError
from smob.fhe import Context, EncryptionParameters, Scheme, make_params
from smob.privacy import pseudonym_warnings
from smob.ring import ModulusChain, find_primes
from smob.transactions import (
    KINDS,
    Parties,
    WorkloadSpec,
    oracle_total,
    run_transaction,
    totals_match,
    verify_outcome,
)
from smob.transport import make_network


def run(ctx, w, kind, seed=0, **kw):
    with Parties.create(ctx, w.providers, seed=seed) as parties:
        return run_transaction(kind, parties, w, **kw)


def test_oracle_examples():
    assert oracle_total(WorkloadSpec([350, 280])) == 630
    assert oracle_total(WorkloadSpec([350, 280], 2, 100)) == 1160
    ckks = WorkloadSpec([3.50, 2.80], 0.9, 0.5, "ckks")
    assert abs(oracle_total(ckks) - 5.17) < 1e-12
    assert oracle_total(WorkloadSpec([10], 1, 20), plain_modulus=65537) == 65537 - 10


def test_workload_validation():
    with pytest.raises(ValueError):
        WorkloadSpec([])
    with pytest.raises(ValueError):
        WorkloadSpec([1, 2], supplier=2)
    w = WorkloadSpec.random("bgv", 4, seed=3)
    assert w.providers == 4 and all(100 <= p < 1000 for p in w.prices)
    assert WorkloadSpec.random("bgv", 4, seed=3).prices == w.prices


@pytest.mark.parametrize("kind", KINDS)
def test_bfv_reference_example(kind, desk_contexts):
    w = WorkloadSpec([350, 280], 2, 100, "bfv")
    out = run(desk_contexts["bfv"], w, kind)
    assert out.total == 1160
    assert verify_outcome(out, w).ok


@pytest.mark.parametrize("scheme", ["bfv", "bgv", "ckks"])
def test_single_provider_identity(scheme, desk_contexts):
    price = 4.25 if scheme == "ckks" else 777
    w = WorkloadSpec([price], 1, 0, scheme)
    totals = [run(desk_contexts[scheme], w, kind).total for kind in KINDS]
    for t in totals:
        assert totals_match(t, price, Scheme.parse(scheme))


def test_ckks_examples(desk_contexts):
    ctx = desk_contexts["ckks"]
    w = WorkloadSpec([3.50, 2.80], 0.9, 0.5, "ckks")
    assert abs(run(ctx, w, "t1").total - 5.17) < 1e-3
    co2 = WorkloadSpec([12.5, 7.25], 1, 0, "ckks")
    assert abs(run(ctx, co2, "t3").total - 19.75) < 1e-3
    w4 = WorkloadSpec.random("ckks", 4, seed=11)
    out = run(ctx, w4, "t1")
    assert abs(out.total - oracle_total(w4)) < 1e-3


def test_bgv_eight_providers_chain(desk_contexts):
    w = WorkloadSpec.random("bgv", 8, seed=5)
    out = run(desk_contexts["bgv"], w, "t2")
    assert out.total == oracle_total(w)


@pytest.mark.parametrize("scheme", ["bfv", "bgv", "ckks"])
def test_transactions_agree_and_do_the_same_work(scheme, desk_contexts):
    w = WorkloadSpec.random(scheme, 3, seed=21)
    outs = {k: run(desk_contexts[scheme], w, k, seed=4) for k in KINDS}
    for o in outs.values():
        assert verify_outcome(o, w).ok
        assert o.audit.violations == 0
    for a, b in itertools.combinations(outs.values(), 2):
        assert totals_match(a.total, b.total, Scheme.parse(scheme), rtol=2e-3)
    counts = [o.op_counts() for o in outs.values()]
    assert counts[0] == counts[1] == counts[2]
    assert counts[0]["relinearize"] == 1 and counts[0]["multiply"] == 1


def test_provider_order_does_not_matter(desk_contexts):
    ctx = desk_contexts["bfv"]
    prices = [120, 450, 999, 301]
    base = run(ctx, WorkloadSpec(prices, 3, 17, "bfv"), "t2").total
    for perm in ([301, 999, 450, 120], [450, 120, 301, 999]):
        assert run(ctx, WorkloadSpec(perm, 3, 17, "bfv"), "t2").total == base


def test_supplier_index_is_configurable(desk_contexts):
    w = WorkloadSpec([200, 300, 400], 2, 50, "bgv", supplier=2)
    for kind in KINDS:
        assert run(desk_contexts["bgv"], w, kind).total == 1750


def test_same_seed_reproduces_the_transaction(desk_contexts):
    w = WorkloadSpec.random("bfv", 2, seed=1)
    a = run(desk_contexts["bfv"], w, "t1", seed=9)
    b = run(desk_contexts["bfv"], w, "t1", seed=9)
    assert a.txid == b.txid
    assert [m.payload for m in a.trace] == [m.payload for m in b.trace]
    c = run(desk_contexts["bfv"], w, "t1", seed=10)
    assert c.txid != a.txid


def test_sequential_and_parallel_providers_match(desk_contexts):
    w = WorkloadSpec.random("bgv", 4, seed=2)
    a = run(desk_contexts["bgv"], w, "t1", seed=3, parallel=True)
    b = run(desk_contexts["bgv"], w, "t1", seed=3, parallel=False)
    assert a.total == b.total
    assert sorted(m.payload for m in a.trace) == sorted(m.payload for m in b.trace)


def test_consecutive_transactions_use_fresh_keys(desk_contexts):
    w = WorkloadSpec.random("bfv", 2, seed=1)
    with Parties.create(desk_contexts["bfv"], 2) as parties:
        first = run_transaction("t1", parties, w)
        second = run_transaction("t1", parties, w)
        assert first.txid != second.txid
        merged = first.audit.merge(second.audit)
        assert pseudonym_warnings(merged.records) == []
        assert all(not p.keys for p in parties.all)


@pytest.mark.parametrize("kind", KINDS)
def test_tcp_matches_inproc(kind, desk_contexts):
    ctx = desk_contexts["bgv"]
    w = WorkloadSpec.random("bgv", 2, seed=8)
    local = run(ctx, w, kind, seed=6)
    with Parties.create(ctx, 2, network=make_network("tcp"), seed=6) as parties:
        remote = run_transaction(kind, parties, w)
    assert remote.total == local.total
    assert [m.payload for m in remote.trace] == [m.payload for m in local.trace]
    assert remote.audit.violations == 0


# --------------------------------------------------------------------------
# faults and verdicts


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("fault,rule", [
    ("plain_price_to_platform", "allow-matrix"),
    ("secret_key_on_wire", "allow-matrix"),
])
def test_faults_produce_one_violation(kind, fault, rule, desk_contexts):
    w = WorkloadSpec([350, 280], 2, 100, "bfv")
    out = run(desk_contexts["bfv"], w, kind, faults=[fault])
    assert out.audit.violation_rules() == [rule]
    verdict = verify_outcome(out, w)
    assert not verdict.ok and verdict.check == "audit"


@pytest.mark.parametrize("kind", ["t1", "t2"])
def test_customer_key_reaching_platform(kind, desk_contexts):
    w = WorkloadSpec([350, 280], 2, 100, "bgv")
    out = run(desk_contexts["bgv"], w, kind, faults=["customer_key_to_platform"])
    assert out.audit.violation_rules() == ["customer-key-at-platform"]


def test_content_mode_flags_ciphertexts_at_platform(desk_contexts):
    w = WorkloadSpec([350, 280], 2, 100, "bfv")
    out = run(desk_contexts["bfv"], w, "t1", audit_mode="content")
    # content mode rates a ciphertext by what it encrypts, which the platform may not see
    assert out.audit.violations > 0
    assert set(out.audit.violation_rules()) == {"allow-matrix"}


def test_unknown_fault_rejected(desk_contexts):
    with pytest.raises(ValueError):
        run(desk_contexts["bfv"], WorkloadSpec([1, 2]), "t1", faults=["meteor"])


def test_tampered_total_gives_numeric_verdict(desk_contexts):
    w = WorkloadSpec([350, 280], 2, 100, "bfv")
    out = run(desk_contexts["bfv"], w, "t1")
    assert verify_outcome(out, w).ok
    bad = dataclasses.replace(out, total=out.total + 1)
    verdict = verify_outcome(bad, w)
    assert not verdict.ok and verdict.check == "numeric"


@pytest.mark.parametrize("kind", KINDS)
def test_missing_eval_key_aborts_before_computation(kind, desk_contexts):
    w = WorkloadSpec([350, 280], 2, 100, "bfv")
    with Parties.create(desk_contexts["bfv"], 2) as parties:
        with pytest.raises(OrchestrationError) as info:
            run_transaction(kind, parties, w, faults=["drop_eval_key"])
        ops = [s.op for p in parties.all for s in p.ops]
    assert info.value.step == "eval-key distribution"
    assert "encrypt" not in ops and "multiply" not in ops


def test_level_exhaustion_names_the_step():
    n = 16
    chain = ModulusChain(tuple(find_primes(54, n, 1)))
    ctx = Context(EncryptionParameters(Scheme.CKKS, n, chain, scale_bits=20))
    w = WorkloadSpec([1.0, 2.0], 1, 0, "ckks")
    with pytest.raises(OrchestrationError) as info:
        run(ctx, w, "t1")
    assert info.value.step == "platform: multiply"
    assert "LevelExhaustedError" in str(info.value)


def test_chain_failure_names_the_position(desk_contexts, monkeypatch):
    def broken_add(a, b):
        raise AlignmentError("injected")

    monkeypatch.setattr(tx, "add", broken_add)
    w = WorkloadSpec([1, 2, 3], 1, 0, "bgv")
    with pytest.raises(OrchestrationError) as info:
        run(desk_contexts["bgv"], w, "t2")
    assert info.value.step == "chain position 2/3 (provider-2)"


def test_topology_mismatch(desk_contexts):
    with Parties.create(desk_contexts["bfv"], 3) as parties:
        with pytest.raises(OrchestrationError):
            run_transaction("t1", parties, WorkloadSpec([1, 2]))
        with pytest.raises(OrchestrationError):
            run_transaction("t1", parties, WorkloadSpec([1, 2, 3], scheme="bgv"))
        with pytest.raises(ValueError):
            run_transaction("t4", parties, WorkloadSpec([1, 2, 3]))
    with pytest.raises(ValueError):
        Parties.create(desk_contexts["bfv"], 0)


def test_phase_accounting(desk_contexts):
    w = WorkloadSpec.random("ckks", 2, seed=3)
    out = run(desk_contexts["ckks"], w, "t1")
    phases = out.phase_ns()
    assert set(phases) == {"customer", "platform", "provider-1", "provider-2"}
    assert set(phases["customer"]) == {"keygen", "evalkey", "decrypt"}
    assert set(phases["platform"]) == {"calculate", "relinearize"}
    assert sum(sum(p.values()) for p in phases.values()) == out.total_ns
    assert np.all([s.ns >= 0 for s in out.ops])


def test_unbatched_plain_modulus_runs(desk_contexts):
    ctx = Context(make_params("bfv", "desk", plain_modulus=1024))
    w = WorkloadSpec([350, 280], 1, 0, "bfv")
    out = run(ctx, w, "t1")
    assert out.total == 630
    assert verify_outcome(out, w, plain_modulus=1024).ok
