"""CPU-time measurement of single operations and whole transactions."""
from __future__ import annotations

import hashlib
import statistics
import time
import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from smob.errors import ParameterError, VerificationError
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
    make_params,
    multiply,
    public_keygen,
    relin_keygen,
    relinearize,
    secret_keygen,
    sub,
)
from smob.fhe.ciphertext import Ciphertext
from smob.fhe.keys import PublicKey, RelinKey, SecretKey
from smob.privacy import AuditReport, PartyRole, pseudonym_warnings
from smob.ring import RingElement, Sampler, make_rng
from smob.transactions import (
    Parties,
    WorkloadSpec,
    run_transaction,
    verify_outcome,
)
from smob.transport import (
    make_network,
    serialize_ciphertext,
    serialize_public_key,
    serialize_relin_key,
    serialize_secret_key,
)

OPERATIONS = ("context_creation", "keygen", "evalkey_creation", "encrypt", "calculate",
              "relinearize", "decrypt")
DEFAULT_REPETITIONS = 500

# reference annotations; never used as thresholds
PAPER_OP_REF_MS = {
    ("calculate", "bfv"): 115.0,
    ("calculate", "bgv"): 4.0,
    ("calculate", "ckks"): 2.3,
    ("context_creation", "bfv"): 1200.0,  # "up to"
    ("context_creation", "bgv"): 1200.0,
    ("context_creation", "ckks"): 1200.0,
}
PAPER_TX_REF_MS = {"bfv": 314.0, "bgv": 232.0, "ckks": 104.0}
PAPER_MEMORY_REF = {"plain": "76 -- 104 MB", "bfv": "207 -- 321 MB", "bgv": "216 -- 306 MB",
                    "ckks": "146 -- 188 MB"}


@dataclass
class Measurement:
    op: str
    scheme: str
    preset: str
    repetitions: int
    samples: list[int] = field(repr=False)
    output_digest: str = ""

    @property
    def mean_ns(self) -> float:
        return statistics.fmean(self.samples)

    @property
    def median_ns(self) -> float:
        return float(statistics.median(self.samples))

    @property
    def stddev_ns(self) -> float:
        return statistics.pstdev(self.samples) if len(self.samples) > 1 else 0.0

    @property
    def paper_ref_ms(self) -> float | None:
        return PAPER_OP_REF_MS.get((self.op, self.scheme))

    def to_dict(self) -> dict:
        out = {"op": self.op, "scheme": self.scheme, "preset": self.preset,
               "reps": self.repetitions, "mean_ns": self.mean_ns, "median_ns": self.median_ns,
               "stddev_ns": self.stddev_ns}
        if self.paper_ref_ms is not None:
            out["paper_ref_ms"] = self.paper_ref_ms
        return out


def _fingerprint(h, obj) -> None:
    """Feed a cheap, deterministic summary of an operation output into ``h``."""
    if isinstance(obj, RingElement):
        h.update(obj.data[:, :32].tobytes())
    elif isinstance(obj, Ciphertext):
        for p in obj.polys:
            _fingerprint(h, p)
    elif isinstance(obj, SecretKey):
        _fingerprint(h, obj.poly)
    elif isinstance(obj, PublicKey):
        _fingerprint(h, obj.b)
    elif isinstance(obj, RelinKey):
        _fingerprint(h, obj.pairs[-1][0])
    elif isinstance(obj, Context):
        for q in obj.params.chain.primes:
            h.update(obj.tables[q].psi_rev[:32].tobytes())
    elif isinstance(obj, tuple):
        for o in obj:
            _fingerprint(h, o)
    else:
        h.update(repr(obj).encode())


def _encode(ctx: Context, value, scale: float | None = None):
    if ctx.scheme is Scheme.CKKS:
        return ckks_encode([float(value)], ctx.params.scale if scale is None else scale, ctx)
    return encode_integers([int(value)], ctx)


def _decode(ctx: Context, pt):
    if ctx.scheme is Scheme.CKKS:
        return round(float(ckks_decode(pt, ctx)[0].real), 6)
    return int(decode_integers(pt, ctx)[0])


class _Fixture:
    """Keys and operands prepared (untimed) for one measurement."""

    def __init__(self, ctx: Context, seed):
        self.ctx = ctx
        s = Sampler(make_rng(np.random.SeedSequence(seed, spawn_key=(1 << 20,))),
                    ctx.params.error_stddev)
        self.sk = secret_keygen(ctx, s)
        self.pk = public_keygen(self.sk, ctx, s)
        self.rk = relin_keygen(self.sk, ctx, s)
        integer = ctx.scheme is not Scheme.CKKS
        p1, p2, d, b = (350, 280, 2, 100) if integer else (3.5, 2.8, 0.9, 0.5)
        self.c1 = encrypt(self.pk, _encode(ctx, p1), ctx, s)
        self.c2 = encrypt(self.pk, _encode(ctx, p2), ctx, s)
        self.cd = encrypt(self.pk, _encode(ctx, d), ctx, s)
        bscale = None if integer else ctx.params.scale ** 2
        self.cb = encrypt(self.pk, _encode(ctx, b, bscale), ctx, s)
        self.product = multiply(add(self.c1, self.c2), self.cd, ctx)
        self.relinearized = relinearize(self.rk, self.product, ctx)
        self.value = p1


def _body(op: str, params, fx: _Fixture | None, sampler: Sampler):
    """Zero-argument closure running exactly the measured operation."""
    if op == "context_creation":
        return lambda: Context(params)
    ctx = fx.ctx
    if op == "keygen":
        def keygen():
            sk = secret_keygen(ctx, sampler)
            return sk, public_keygen(sk, ctx, sampler)
        return keygen
    if op == "evalkey_creation":
        return lambda: relin_keygen(fx.sk, ctx, sampler)
    if op == "encrypt":
        return lambda: encrypt(fx.pk, _encode(ctx, fx.value), ctx, sampler)
    if op == "calculate":
        return lambda: sub(multiply(add(fx.c1, fx.c2), fx.cd, ctx), fx.cb)
    if op == "relinearize":
        return lambda: relinearize(fx.rk, fx.product, ctx)
    if op == "decrypt":
        return lambda: _decode(ctx, decrypt(fx.sk, fx.relinearized, ctx))
    raise ParameterError(f"unknown operation {op!r}; expected one of {', '.join(OPERATIONS)}")


def time_operation(op: str, scheme, preset: str = "desk", repetitions: int = DEFAULT_REPETITIONS,
                   seed: int = 0, ctx: Context | None = None) -> Measurement:
    """Per-repetition CPU time of ``op``'s body on the calling thread.

    Inputs are built outside the timed region. Every output is folded into a
    digest after its timing sample is taken, so no result is dead code and
    equal seeds can be checked for equal outputs.
    """
    if op not in OPERATIONS:
        raise ParameterError(f"unknown operation {op!r}; expected one of {', '.join(OPERATIONS)}")
    if repetitions < 1:
        raise ParameterError("repetitions must be at least 1")
    scheme = Scheme.parse(scheme)
    params = ctx.params if ctx is not None else make_params(scheme, preset)
    fx = None
    if op != "context_creation":
        fx = _Fixture(ctx or Context(params), seed)
    h = hashlib.blake2b(digest_size=16)
    samples = []
    for rep in range(repetitions):
        sampler = Sampler(make_rng(np.random.SeedSequence(seed, spawn_key=(rep,))),
                          params.error_stddev)
        body = _body(op, params, fx, sampler)
        start = time.thread_time_ns()
        out = body()
        samples.append(time.thread_time_ns() - start)
        _fingerprint(h, out)
    return Measurement(op, scheme.label, params.preset, repetitions, samples, h.hexdigest())


# --------------------------------------------------------------------------
# transactions


@dataclass
class PartyAggregate:
    role: PartyRole
    id: str
    phase_ns: dict[str, float]

    @property
    def total_ns(self) -> float:
        return float(sum(self.phase_ns.values()))

    def to_dict(self) -> dict:
        return {"role": self.role.label, "id": self.id,
                "phase_ns": dict(sorted(self.phase_ns.items())), "total_ns": self.total_ns}


@dataclass
class TransactionBench:
    kind: str
    scheme: str
    preset: str
    providers: int
    repetitions: int
    parties: list[PartyAggregate]
    verified: bool
    audit: AuditReport = field(repr=False)
    transport: str = "inproc"

    @property
    def total_ns(self) -> float:
        """CPU time summed over all parties (mean per transaction)."""
        return sum(p.total_ns for p in self.parties)

    @property
    def critical_path_ns(self) -> float:
        """Customer + platform + the slowest provider, for parallel providers."""
        fixed = sum(p.total_ns for p in self.parties if p.role is not PartyRole.MOBILITY_PROVIDER)
        provs = [p.total_ns for p in self.parties if p.role is PartyRole.MOBILITY_PROVIDER]
        return fixed + max(provs, default=0.0)

    @property
    def paper_ref_ms(self) -> float:
        return PAPER_TX_REF_MS[self.scheme]

    def share(self, role: PartyRole) -> float:
        total = self.total_ns
        return sum(p.total_ns for p in self.parties if p.role is role) / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "scheme": self.scheme, "preset": self.preset,
            "providers": self.providers, "reps": self.repetitions, "transport": self.transport,
            "parties": [p.to_dict() for p in self.parties],
            "total_ns": self.total_ns, "critical_path_ns": self.critical_path_ns,
            "paper_ref_ms": self.paper_ref_ms, "verified": self.verified,
            "audit": _audit_dict(self.audit),
        }


def _audit_dict(report: AuditReport) -> dict:
    out = report.summary()
    out["warning_messages"] = list(report.warnings)
    return out


def run_transaction_bench(kind: str, scheme, preset: str = "desk", providers: int = 2,
                          repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
                          transport: str = "inproc", ctx: Context | None = None,
                          workload: WorkloadSpec | None = None) -> TransactionBench:
    """Run ``repetitions`` transactions; average each party's per-phase CPU time.

    Every repetition draws a fresh workload and fresh one-time keys and must
    pass :func:`verify_outcome`, otherwise :class:`VerificationError` aborts
    the benchmark.
    """
    if providers < 1 or repetitions < 1:
        raise ParameterError("providers and repetitions must be at least 1")
    scheme = Scheme.parse(scheme)
    ctx = ctx or Context(make_params(scheme, preset))
    sums: dict[str, dict[str, int]] = {}
    records = []
    with Parties.create(ctx, providers, make_network(transport), seed) as parties:
        roles = {p.id: p.role for p in parties.all}
        for rep in range(repetitions):
            w = workload or WorkloadSpec.random(scheme, providers, seed=(seed, rep),
                                                preset=ctx.params.preset)
            outcome = run_transaction(kind, parties, w)
            verdict = verify_outcome(outcome, w, ctx.params.plain_modulus)
            if not verdict.ok:
                raise VerificationError(
                    f"{kind}/{scheme.label} repetition {rep}: {verdict.check} check failed "
                    f"({verdict.detail})")
            for party, phases in outcome.phase_ns().items():
                acc = sums.setdefault(party, {})
                for phase, ns in phases.items():
                    acc[phase] = acc.get(phase, 0) + ns
            records.extend(outcome.audit.records)
            parties.network.reset_trace()
            for p in parties.all:
                p.ops.clear()
        order = [p.id for p in parties.all]
    aggregates = [PartyAggregate(roles[pid], pid,
                                 {ph: ns / repetitions for ph, ns in sums.get(pid, {}).items()})
                  for pid in order]
    audit = AuditReport(records, pseudonym_warnings(records))
    return TransactionBench(kind.lower(), scheme.label, ctx.params.preset, providers,
                            repetitions, aggregates, True, audit, transport)


# --------------------------------------------------------------------------
# sizes


@dataclass
class SizeReport:
    scheme: str
    preset: str
    objects: dict[str, int]
    allocator_peak_bytes: int | None

    @property
    def serialized_total_bytes(self) -> int:
        return sum(self.objects.values())


def measure_sizes(scheme, preset: str = "desk", seed: int = 0,
                  ctx: Context | None = None) -> SizeReport:
    """Serialized byte sizes of every key and ciphertext kind.

    The allocator high-water mark covers one keygen, encrypt, multiply,
    relinearize and decrypt sequence as seen by ``tracemalloc``.
    """
    scheme = Scheme.parse(scheme)
    ctx = ctx or Context(make_params(scheme, preset))
    started = not tracemalloc.is_tracing()
    if started:
        tracemalloc.start()
    tracemalloc.reset_peak()
    try:
        fx = _Fixture(ctx, seed)
        _decode(ctx, decrypt(fx.sk, fx.relinearized, ctx))
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        if started:
            tracemalloc.stop()
    objects = {
        "secret_key": len(serialize_secret_key(fx.sk)),
        "public_key": len(serialize_public_key(fx.pk)),
        "relin_key": len(serialize_relin_key(fx.rk)),
        "ciphertext": len(serialize_ciphertext(fx.c1)),
        "ciphertext_size3": len(serialize_ciphertext(fx.product)),
    }
    return SizeReport(scheme.label, ctx.params.preset, objects, peak)


def bench_from_outcome(outcome, preset: str, providers: int, transport: str = "inproc",
                       verified: bool = True) -> TransactionBench:
    """Single-run aggregate built from one transaction outcome."""
    roles = {s.party: s.role for s in outcome.ops}
    parties = [PartyAggregate(roles[pid], pid, {ph: float(ns) for ph, ns in phases.items()})
               for pid, phases in outcome.phase_ns().items()]
    return TransactionBench(outcome.kind, outcome.scheme.label, preset, providers, 1, parties,
                            verified, outcome.audit, transport)
