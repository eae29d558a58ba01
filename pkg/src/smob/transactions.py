"""The three multiparty billing transactions and their plaintext oracle.

Every transaction computes ``(sum of provider prices) * discount - bonus``
on encrypted operands. They differ only in where each step runs:

* T1: the customer owns the keys, the platform computes.
* T2: the customer owns the keys; providers compute along a chain that the
  platform relays.
* T3: the platform owns the keys; the customer computes and the platform
  decrypts the aggregate.

Parties only talk through their transport endpoints, and each party draws
randomness from its own per-transaction generator so results do not depend
on scheduling or transport.
"""
from __future__ import annotations

import contextlib
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from smob.errors import OrchestrationError, SmobError, TransportError
from smob.fhe import (
    Ciphertext,
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
    mod_switch,
    mod_switch_to,
    multiply,
    public_keygen,
    relin_keygen,
    relinearize,
    rescale,
    secret_keygen,
    sub,
)
from smob.privacy import AuditReport, PartyRole, PayloadKind, audit_trace
from smob.ring import Sampler, make_rng
from smob.transport import (
    Address,
    Endpoint,
    InProcNetwork,
    MsgType,
    Network,
    TaggedMessage,
    decode_plain_result,
    deserialize_ciphertext,
    deserialize_public_key,
    deserialize_relin_key,
    encode_plain_result,
    make_network,
    serialize_ciphertext,
    serialize_public_key,
    serialize_relin_key,
    serialize_secret_key,
)

PHASES = ("keygen", "evalkey", "encrypt", "calculate", "relinearize", "decrypt")
KINDS = ("t1", "t2", "t3")
CKKS_RTOL = 1e-3
FAULTS = frozenset({"plain_price_to_platform", "secret_key_on_wire",
                    "customer_key_to_platform", "drop_eval_key"})

KEY_WAIT = 5.0  # seconds an evaluator waits for an evaluation key before giving up


@dataclass
class WorkloadSpec:
    prices: list
    discount: int | float = 1
    bonus: int | float = 0
    scheme: Scheme = Scheme.BFV
    preset: str = "desk"
    supplier: int = 0  # index of the provider that contributes discount and bonus

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme)
        self.prices = list(self.prices)
        if not self.prices:
            raise ValueError("a workload needs at least one provider price")
        if not 0 <= self.supplier < len(self.prices):
            raise ValueError("supplier index outside the provider range")

    @property
    def providers(self) -> int:
        return len(self.prices)

    @classmethod
    def random(cls, scheme, providers: int, seed=0, preset: str = "desk") -> WorkloadSpec:
        """Reproducible workload: integer cents for BFV/BGV, reals in [0, 100] for CKKS."""
        scheme = Scheme.parse(scheme)
        rng = np.random.default_rng(seed)
        if scheme is Scheme.CKKS:
            prices = [round(float(x), 2) for x in rng.uniform(0, 100, providers)]
            return cls(prices, 0.9, 0.5, scheme, preset)
        prices = [int(x) for x in rng.integers(100, 1000, providers)]
        return cls(prices, 2, 100, scheme, preset)


def oracle_total(w: WorkloadSpec, plain_modulus: int | None = None):
    """Plaintext evaluation of the workload (reduced mod ``t`` for BFV/BGV)."""
    if w.scheme is Scheme.CKKS:
        return float(sum(w.prices)) * float(w.discount) - float(w.bonus)
    t = plain_modulus or make_params(w.scheme, w.preset).plain_modulus
    return (sum(int(p) for p in w.prices) * int(w.discount) - int(w.bonus)) % t


# --------------------------------------------------------------------------
# parties


@dataclass(frozen=True)
class OpSample:
    party: str
    role: PartyRole
    phase: str
    op: str
    ns: int


@dataclass(eq=False)
class Party:
    role: PartyRole
    id: str
    ctx: Context
    endpoint: Endpoint
    keys: dict = field(default_factory=dict)
    ops: list[OpSample] = field(default_factory=list)
    sampler: Sampler | None = None

    @property
    def address(self) -> Address:
        return self.endpoint.address

    def timed(self, phase: str, op: str, fn, *args, **kwargs):
        start = time.thread_time_ns()
        out = fn(*args, **kwargs)
        self.ops.append(OpSample(self.id, self.role, phase, op, time.thread_time_ns() - start))
        return out

    def send(self, kind: PayloadKind, payload: bytes, txid: bytes, to: Party) -> None:
        self.endpoint.send(TaggedMessage.build(kind, payload, txid, self.address, to.address,
                                               self.ctx.scheme))

    def receive(self, sender: Party, msg_type: MsgType, timeout: float | None = 60.0):
        msg = self.endpoint.receive(sender.id, msg_type, timeout=timeout)
        return msg.payload

    def ciphertext(self, sender: Party, msg_type: MsgType = MsgType.CT_PRICE) -> Ciphertext:
        return deserialize_ciphertext(self.receive(sender, msg_type), self.ctx)

    # one-time key material, scoped to a transaction id
    def make_keys(self, txid: bytes, with_relin: bool = True):
        sk = self.timed("keygen", "keygen", secret_keygen, self.ctx, self.sampler)
        pk = self.timed("keygen", "keygen", public_keygen, sk, self.ctx, self.sampler)
        rk = (self.timed("evalkey", "evalkey", relin_keygen, sk, self.ctx, self.sampler)
              if with_relin else None)
        self.keys[txid] = (sk, pk, rk)
        return sk, pk, rk

    def forget(self, txid: bytes) -> None:
        self.keys.pop(txid, None)


@dataclass(eq=False)
class Parties:
    ctx: Context
    network: Network
    customer: Party
    platform: Party
    providers: list[Party]
    seed: int = 0
    issued: int = 0

    @classmethod
    def create(cls, ctx: Context, providers: int = 2, network: Network | None = None,
               seed: int = 0) -> Parties:
        if providers < 1:
            raise ValueError("at least one mobility provider is required")
        net = network or make_network("inproc")

        def party(role, pid):
            return Party(role, pid, ctx, net.endpoint(role, pid))

        return cls(ctx, net,
                   party(PartyRole.CUSTOMER, "customer"),
                   party(PartyRole.MOBILITY_PLATFORM, "platform"),
                   [party(PartyRole.MOBILITY_PROVIDER, f"provider-{i + 1}")
                    for i in range(providers)],
                   seed)

    @property
    def all(self) -> list[Party]:
        return [self.customer, self.platform, *self.providers]

    def begin(self) -> bytes:
        """Issue a transaction id and reseed every party for it."""
        index = self.issued
        self.issued += 1
        txid = make_rng(np.random.SeedSequence(self.seed, spawn_key=(index, 0))).bytes(16)
        for j, p in enumerate(self.all):
            ss = np.random.SeedSequence(self.seed, spawn_key=(index, j + 1))
            p.sampler = Sampler(make_rng(ss), self.ctx.params.error_stddev)
        return txid

    def close(self) -> None:
        self.network.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --------------------------------------------------------------------------
# outcomes


@dataclass
class TransactionOutcome:
    txid: bytes
    kind: str
    scheme: Scheme
    total: int | float
    trace: list[TaggedMessage]
    ops: list[OpSample]
    audit: AuditReport

    def phase_ns(self) -> dict[str, dict[str, int]]:
        """CPU nanoseconds per party and phase."""
        out: dict[str, dict[str, int]] = {}
        for s in self.ops:
            phases = out.setdefault(s.party, {})
            phases[s.phase] = phases.get(s.phase, 0) + s.ns
        return out

    def op_counts(self) -> Counter:
        return Counter(s.op for s in self.ops)

    @property
    def total_ns(self) -> int:
        return sum(s.ns for s in self.ops)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    check: str | None = None
    detail: str = ""


def totals_match(a, b, scheme: Scheme, rtol: float = CKKS_RTOL) -> bool:
    if Scheme.parse(scheme) is Scheme.CKKS:
        return abs(float(a) - float(b)) <= rtol * max(1.0, abs(float(b)))
    return int(a) == int(b)


def verify_outcome(o: TransactionOutcome, w: WorkloadSpec,
                   plain_modulus: int | None = None) -> Verdict:
    expected = oracle_total(w, plain_modulus)
    if not totals_match(o.total, expected, w.scheme):
        return Verdict(False, "numeric", f"total {o.total!r} != oracle {expected!r}")
    if o.audit.violations:
        rules = ", ".join(sorted(set(o.audit.violation_rules())))
        return Verdict(False, "audit", f"{o.audit.violations} violation(s): {rules}")
    return Verdict(True)


# --------------------------------------------------------------------------
# shared steps


@contextlib.contextmanager
def _step(name: str):
    try:
        yield
    except OrchestrationError:
        raise
    except SmobError as exc:
        raise OrchestrationError(f"{type(exc).__name__}: {exc}", step=name) from exc


def _encode(ctx: Context, value, scale: float | None = None):
    if ctx.scheme is Scheme.CKKS:
        return ckks_encode([float(value)], ctx.params.scale if scale is None else scale, ctx)
    return encode_integers([int(value)], ctx)


def _decode(ctx: Context, pt):
    if ctx.scheme is Scheme.CKKS:
        return float(ckks_decode(pt, ctx)[0].real)
    return int(decode_integers(pt, ctx)[0])


def _bonus_scale(ctx: Context) -> float | None:
    """Scale at which the bonus meets the product after rescaling (CKKS)."""
    if ctx.scheme is not Scheme.CKKS:
        return None
    delta = ctx.params.scale
    return delta * delta / ctx.moduli()[-1]


def _encrypt_value(party: Party, pk, value, scale=None) -> bytes:
    ctx = party.ctx

    def body():
        return encrypt(pk, _encode(ctx, value, scale), ctx, party.sampler)

    return serialize_ciphertext(party.timed("encrypt", "encrypt", body))


def _provider_contribution(party: Party, pk, w: WorkloadSpec, index: int) -> list[bytes]:
    """Ciphertext blobs a provider contributes: its price, plus discount and bonus if supplier."""
    blobs = [_encrypt_value(party, pk, w.prices[index])]
    if index == w.supplier:
        blobs.append(_encrypt_value(party, pk, w.discount))
        blobs.append(_encrypt_value(party, pk, w.bonus, _bonus_scale(party.ctx)))
    return blobs


def _sum(party: Party, cts: list[Ciphertext]) -> Ciphertext:
    acc = cts[0]
    for ct in cts[1:]:
        acc = party.timed("calculate", "add", add, acc, ct)
    return acc


def _finish(party: Party, acc: Ciphertext, d_ct: Ciphertext, b_ct: Ciphertext, rk) -> Ciphertext:
    """``acc * d - b`` with the one relinearization and the level step."""
    ctx = party.ctx
    with _step(f"{party.id}: multiply"):
        prod = party.timed("calculate", "multiply", multiply, acc, d_ct, ctx)
    with _step(f"{party.id}: relinearize"):
        prod = party.timed("relinearize", "relinearize", relinearize, rk, prod, ctx)
    with _step(f"{party.id}: level management"):
        if ctx.scheme is Scheme.CKKS:
            prod = party.timed("calculate", "rescale", rescale, prod, ctx)
        elif ctx.scheme is Scheme.BGV and prod.level > 0:
            prod = party.timed("calculate", "mod_switch", mod_switch, prod, ctx)
        if b_ct.level != prod.level:
            b_ct = party.timed("calculate", "mod_switch", mod_switch_to, b_ct, prod.level, ctx)
    with _step(f"{party.id}: subtract"):
        return party.timed("calculate", "sub", sub, prod, b_ct)


def _decrypt_total(party: Party, sk, blob: bytes):
    ctx = party.ctx
    ct = deserialize_ciphertext(blob, ctx)
    return party.timed("decrypt", "decrypt", lambda: _decode(ctx, decrypt(sk, ct, ctx)))


def _await_eval_key(party: Party, sender: Party, kind_step: str):
    # in-process delivery is synchronous, so an absent key is already known to be absent
    timeout = 0 if isinstance(party.endpoint.network, InProcNetwork) else KEY_WAIT
    try:
        blob = party.receive(sender, MsgType.EVAL_KEY, timeout=timeout)
    except TransportError:
        raise OrchestrationError(f"{party.id} holds no evaluation key for this transaction",
                                 step=kind_step) from None
    return blob


def _parallel(parties: list[Party], fn, parallel: bool):
    """Run ``fn(party, index)`` per provider; concurrently when ``parallel``."""
    def guarded(args):
        party, i = args
        with _step(f"{party.id}: encrypt"):
            return fn(party, i)

    jobs = [(p, i) for i, p in enumerate(parties)]
    if parallel and len(parties) > 1:
        with ThreadPoolExecutor(max_workers=len(parties)) as pool:
            return list(pool.map(guarded, jobs))
    return [guarded(j) for j in jobs]


def _check_topology(parties: Parties, w: WorkloadSpec, faults) -> set[str]:
    if len(parties.providers) != w.providers:
        raise OrchestrationError(
            f"workload has {w.providers} prices but {len(parties.providers)} providers",
            step="setup")
    if w.scheme is not parties.ctx.scheme:
        raise OrchestrationError("workload scheme differs from the party context", step="setup")
    faults = set(faults or ())
    unknown = faults - FAULTS
    if unknown:
        raise ValueError(f"unknown faults {sorted(unknown)}")
    return faults


def _announce(parties: Parties, txid: bytes, receivers: list[Party]) -> None:
    for p in receivers:
        parties.platform.send(PayloadKind.TRANSACTION_ID, txid, txid, p)
        p.receive(parties.platform, MsgType.CONTROL)


def _wrap_up(parties: Parties, kind: str, txid: bytes, total, mark: int, op_marks,
             audit_mode: str) -> TransactionOutcome:
    parties.network.drain()
    trace = [m for m in parties.network.trace[mark:] if m.txid == txid or m.malformed]
    ops = [s for p, start in zip(parties.all, op_marks) for s in p.ops[start:]]
    for p in parties.all:
        p.forget(txid)
    return TransactionOutcome(txid, kind, parties.ctx.scheme, total, trace, ops,
                              audit_trace(trace, audit_mode))


def _marks(parties: Parties):
    return len(parties.network.trace), [len(p.ops) for p in parties.all]


# --------------------------------------------------------------------------
# transactions


def run_t1(parties: Parties, w: WorkloadSpec, *, faults=(), parallel: bool = True,
           audit_mode: str = "readable") -> TransactionOutcome:
    """Customer holds the keys; the platform computes on the providers' ciphertexts."""
    faults = _check_topology(parties, w, faults)
    mark, op_marks = _marks(parties)
    txid = parties.begin()
    cust, plat, provs = parties.customer, parties.platform, parties.providers
    ctx = parties.ctx

    _announce(parties, txid, [cust, *provs])
    with _step("customer key generation"):
        sk, pk, rk = cust.make_keys(txid)
    pk_blob = serialize_public_key(pk)
    for p in provs:
        cust.send(PayloadKind.CUSTOMER_PUBLIC_KEY, pk_blob, txid, p)
    if "drop_eval_key" not in faults:
        cust.send(PayloadKind.CUSTOMER_EVAL_KEY, serialize_relin_key(rk), txid, plat)
    _inject_customer_faults(cust, plat, sk, pk_blob, txid, faults)
    rk_plat = deserialize_relin_key(_await_eval_key(plat, cust, "eval-key distribution"), ctx)

    def contribute(prov: Party, i: int):
        prov_pk = deserialize_public_key(prov.receive(cust, MsgType.KEY_OFFER), ctx)
        for blob in _provider_contribution(prov, prov_pk, w, i):
            prov.send(PayloadKind.ENCRYPTED_PRICE, blob, txid, plat)
        if i == 0 and "plain_price_to_platform" in faults:
            prov.send(PayloadKind.PLAIN_PRICE, encode_plain_result(w.prices[0], ctx.scheme),
                      txid, plat)

    _parallel(provs, contribute, parallel)

    with _step("platform evaluation"):
        prices, extra = _collect(plat, provs, w)
        acc = _sum(plat, prices)
        result = _finish(plat, acc, extra[0], extra[1], rk_plat)
    plat.send(PayloadKind.ENCRYPTED_RESULT, serialize_ciphertext(result), txid, cust)
    with _step("customer decryption"):
        total = _decrypt_total(cust, sk, cust.receive(plat, MsgType.CT_RESULT))
    return _wrap_up(parties, "t1", txid, total, mark, op_marks, audit_mode)


def _collect(receiver: Party, provs: list[Party], w: WorkloadSpec):
    """Price ciphertexts in provider order plus the supplier's (discount, bonus)."""
    prices, extra = [], []
    for i, p in enumerate(provs):
        prices.append(receiver.ciphertext(p))
        if i == w.supplier:
            extra = [receiver.ciphertext(p), receiver.ciphertext(p)]
    return prices, extra


def _inject_customer_faults(cust: Party, plat: Party, sk, pk_blob: bytes, txid: bytes,
                            faults: set[str]) -> None:
    if "customer_key_to_platform" in faults:
        cust.send(PayloadKind.CUSTOMER_PUBLIC_KEY, pk_blob, txid, plat)
    if "secret_key_on_wire" in faults:
        cust.send(PayloadKind.SECRET_KEY, serialize_secret_key(sk), txid, plat)


def run_t2(parties: Parties, w: WorkloadSpec, *, faults=(), parallel: bool = True,
           audit_mode: str = "readable") -> TransactionOutcome:
    """Customer holds the keys; providers compute along a chain relayed by the platform.

    Providers are visited in ascending id and the last one performs the
    multiply, relinearization and subtraction. ``parallel`` is accepted for a
    uniform signature; the chain is sequential by construction.
    """
    faults = _check_topology(parties, w, faults)
    mark, op_marks = _marks(parties)
    txid = parties.begin()
    cust, plat, provs = parties.customer, parties.platform, parties.providers
    ctx = parties.ctx
    last = provs[-1]
    P = len(provs)

    _announce(parties, txid, [cust, *provs])
    with _step("customer key generation"):
        sk, pk, rk = cust.make_keys(txid)
    pk_blob = serialize_public_key(pk)
    for p in provs:
        cust.send(PayloadKind.CUSTOMER_PUBLIC_KEY, pk_blob, txid, p)
    if "drop_eval_key" not in faults:
        cust.send(PayloadKind.CUSTOMER_EVAL_KEY, serialize_relin_key(rk), txid, plat)
    _inject_customer_faults(cust, plat, sk, pk_blob, txid, faults)
    rk_blob = _await_eval_key(plat, cust, "eval-key distribution")
    plat.send(PayloadKind.CUSTOMER_EVAL_KEY, rk_blob, txid, last)

    extra: list[Ciphertext] = []
    partial: Ciphertext | None = None
    for i, prov in enumerate(provs):
        with _step(f"chain position {i + 1}/{P} ({prov.id})"):
            prov_pk = deserialize_public_key(prov.receive(cust, MsgType.KEY_OFFER), ctx)
            blobs = _provider_contribution(prov, prov_pk, w, i)
            if i == 0 and "plain_price_to_platform" in faults:
                prov.send(PayloadKind.PLAIN_PRICE,
                          encode_plain_result(w.prices[0], ctx.scheme), txid, plat)
            own = deserialize_ciphertext(blobs[0], ctx)
            if len(blobs) == 3:
                if prov is last:
                    extra = [deserialize_ciphertext(b, ctx) for b in blobs[1:]]
                else:
                    for b in blobs[1:]:
                        prov.send(PayloadKind.ENCRYPTED_PRICE, b, txid, plat)
                    for _ in range(2):
                        plat.send(PayloadKind.ENCRYPTED_PRICE,
                                  plat.receive(prov, MsgType.CT_PRICE), txid, last)
            if i > 0:
                partial = deserialize_ciphertext(prov.receive(plat, MsgType.CT_PARTIAL), ctx)
                own = prov.timed("calculate", "add", add, partial, own)
            if prov is last:
                break
            prov.send(PayloadKind.ENCRYPTED_PARTIAL, serialize_ciphertext(own), txid, plat)
            plat.send(PayloadKind.ENCRYPTED_PARTIAL, plat.receive(prov, MsgType.CT_PARTIAL),
                      txid, provs[i + 1])

    with _step(f"chain position {P}/{P} ({last.id})"):
        if not extra:
            extra = [deserialize_ciphertext(last.receive(plat, MsgType.CT_PRICE), ctx)
                     for _ in range(2)]
        rk_last = deserialize_relin_key(last.receive(plat, MsgType.EVAL_KEY), ctx)
        result = _finish(last, own, extra[0], extra[1], rk_last)
    last.send(PayloadKind.ENCRYPTED_RESULT, serialize_ciphertext(result), txid, plat)
    plat.send(PayloadKind.ENCRYPTED_RESULT, plat.receive(last, MsgType.CT_RESULT), txid, cust)
    with _step("customer decryption"):
        total = _decrypt_total(cust, sk, cust.receive(plat, MsgType.CT_RESULT))
    return _wrap_up(parties, "t2", txid, total, mark, op_marks, audit_mode)


def run_t3(parties: Parties, w: WorkloadSpec, *, faults=(), parallel: bool = True,
           audit_mode: str = "readable") -> TransactionOutcome:
    """Platform holds the keys; the customer computes and the platform decrypts the aggregate."""
    faults = _check_topology(parties, w, faults)
    mark, op_marks = _marks(parties)
    txid = parties.begin()
    cust, plat, provs = parties.customer, parties.platform, parties.providers
    ctx = parties.ctx

    _announce(parties, txid, [cust, *provs])
    with _step("platform key generation"):
        sk, pk, rk = plat.make_keys(txid)
    pk_blob = serialize_public_key(pk)
    for p in [*provs, cust]:
        plat.send(PayloadKind.PLATFORM_PUBLIC_KEY, pk_blob, txid, p)
    if "drop_eval_key" not in faults:
        plat.send(PayloadKind.PLATFORM_EVAL_KEY, serialize_relin_key(rk), txid, cust)
    if "secret_key_on_wire" in faults:
        plat.send(PayloadKind.SECRET_KEY, serialize_secret_key(sk), txid, cust)
    rk_cust = deserialize_relin_key(_await_eval_key(cust, plat, "eval-key distribution"), ctx)
    cust.receive(plat, MsgType.KEY_OFFER)  # the customer holds the platform key as well

    def contribute(prov: Party, i: int):
        prov_pk = deserialize_public_key(prov.receive(plat, MsgType.KEY_OFFER), ctx)
        for blob in _provider_contribution(prov, prov_pk, w, i):
            prov.send(PayloadKind.ENCRYPTED_PRICE, blob, txid, cust)
        if i == 0 and "plain_price_to_platform" in faults:
            prov.send(PayloadKind.PLAIN_PRICE, encode_plain_result(w.prices[0], ctx.scheme),
                      txid, plat)

    _parallel(provs, contribute, parallel)

    with _step("customer evaluation"):
        prices, extra = _collect(cust, provs, w)
        acc = _sum(cust, prices)
        result = _finish(cust, acc, extra[0], extra[1], rk_cust)
    cust.send(PayloadKind.ENCRYPTED_RESULT, serialize_ciphertext(result), txid, plat)
    with _step("platform decryption"):
        total = _decrypt_total(plat, sk, plat.receive(cust, MsgType.CT_RESULT))
    plat.send(PayloadKind.DECRYPTED_AGGREGATE, encode_plain_result(total, ctx.scheme), txid, cust)
    received = decode_plain_result(cust.receive(plat, MsgType.PLAIN_RESULT), ctx.scheme)
    if received != total:
        raise OrchestrationError("aggregate changed in transit", step="result delivery")
    return _wrap_up(parties, "t3", txid, total, mark, op_marks, audit_mode)


RUNNERS = {"t1": run_t1, "t2": run_t2, "t3": run_t3}


def run_transaction(kind: str, parties: Parties, w: WorkloadSpec, **kwargs) -> TransactionOutcome:
    try:
        runner = RUNNERS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown transaction {kind!r} (expected t1, t2 or t3)") from None
    return runner(parties, w, **kwargs)
