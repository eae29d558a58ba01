"""Data categories, the role/category allow-matrix and the trace auditor."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from smob.errors import ClassificationError


class DataCategory(enum.IntEnum):
    INSENSITIVE = 0
    IDENTIFIER = 1
    PSEUDONYM = 2
    SENSITIVE = 3
    SECRET = 4


class PartyRole(enum.IntEnum):
    CUSTOMER = 0
    MOBILITY_PLATFORM = 1
    MOBILITY_PROVIDER = 2
    BILLING_PROVIDER = 3

    @property
    def label(self) -> str:
        return self.name.lower()


_C = DataCategory
ALLOW_MATRIX: dict[PartyRole, frozenset[DataCategory]] = {
    # the data subject may see everything about itself except other parties' secrets
    PartyRole.CUSTOMER: frozenset({_C.INSENSITIVE, _C.IDENTIFIER, _C.PSEUDONYM, _C.SENSITIVE}),
    PartyRole.MOBILITY_PLATFORM: frozenset({_C.INSENSITIVE, _C.PSEUDONYM}),
    PartyRole.MOBILITY_PROVIDER: frozenset({_C.INSENSITIVE, _C.PSEUDONYM, _C.SENSITIVE}),
    PartyRole.BILLING_PROVIDER: frozenset({_C.INSENSITIVE, _C.IDENTIFIER, _C.PSEUDONYM,
                                           _C.SENSITIVE}),
}


def allowed(role: PartyRole, cat: DataCategory) -> bool:
    return cat in ALLOW_MATRIX[PartyRole(role)]


class PayloadKind(str, enum.Enum):
    CUSTOMER_PUBLIC_KEY = "customer_public_key"
    CUSTOMER_EVAL_KEY = "customer_eval_key"
    PLATFORM_PUBLIC_KEY = "platform_public_key"
    PLATFORM_EVAL_KEY = "platform_eval_key"
    TRANSACTION_ID = "transaction_id"
    ENCRYPTED_PRICE = "encrypted_price"
    ENCRYPTED_PARTIAL = "encrypted_partial"
    ENCRYPTED_RESULT = "encrypted_result"
    DECRYPTED_AGGREGATE = "decrypted_aggregate"
    SECRET_KEY = "secret_key"
    PLAIN_PRICE = "plain_price"
    CUSTOMER_IDENTIFIER = "customer_identifier"


@dataclass(frozen=True)
class Classification:
    category: DataCategory
    provenance: DataCategory | None = None
    note: str = ""


_CLASSES = {
    PayloadKind.CUSTOMER_PUBLIC_KEY: Classification(_C.PSEUDONYM, note="one-time customer key"),
    PayloadKind.CUSTOMER_EVAL_KEY: Classification(_C.PSEUDONYM, note="one-time evaluation key"),
    PayloadKind.PLATFORM_PUBLIC_KEY: Classification(_C.INSENSITIVE, note="institutional key"),
    PayloadKind.PLATFORM_EVAL_KEY: Classification(_C.INSENSITIVE, note="institutional key"),
    PayloadKind.TRANSACTION_ID: Classification(_C.PSEUDONYM, note="one-time pseudonym"),
    PayloadKind.ENCRYPTED_PRICE: Classification(_C.INSENSITIVE, _C.SENSITIVE, "encrypts Sensitive"),
    PayloadKind.ENCRYPTED_PARTIAL: Classification(_C.INSENSITIVE, _C.SENSITIVE, "encrypts Sensitive"),
    PayloadKind.ENCRYPTED_RESULT: Classification(_C.INSENSITIVE, _C.SENSITIVE, "encrypts Sensitive"),
    PayloadKind.DECRYPTED_AGGREGATE: Classification(_C.INSENSITIVE, note="aggregate"),
    PayloadKind.SECRET_KEY: Classification(_C.SECRET, note="private key"),
    PayloadKind.PLAIN_PRICE: Classification(_C.SENSITIVE, note="plaintext price"),
    PayloadKind.CUSTOMER_IDENTIFIER: Classification(_C.IDENTIFIER, note="name/address/account"),
}

_FAIL_CLOSED = Classification(_C.SECRET, note="unknown payload kind (fail closed)")


def classify_payload(payload_kind, *, fail_closed: bool = True) -> Classification:
    """Category of a payload kind.

    Ciphertexts classify as Insensitive (nobody without the key can read
    them) with a Sensitive provenance note. Unknown kinds are treated as
    Secret, or raise :class:`ClassificationError` when ``fail_closed`` is off.
    """
    try:
        return _CLASSES[PayloadKind(payload_kind)]
    except (ValueError, KeyError):
        if fail_closed:
            return _FAIL_CLOSED
        raise ClassificationError(f"unknown payload kind {payload_kind!r}") from None


# --------------------------------------------------------------------------
# auditing

READABLE = "readable"
CONTENT = "content"

# wire message types whose payload is a ciphertext over Sensitive data
_CIPHERTEXT_TYPES = {"CT_PRICE", "CT_PARTIAL", "CT_RESULT"}


@dataclass(frozen=True)
class AuditRecord:
    transaction_id: str
    sender_role: PartyRole | None
    receiver_role: PartyRole
    category: DataCategory
    verdict: str
    digest: str
    msg_type: str = ""
    rule: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict == "ok"

    def to_dict(self) -> dict:
        return {
            "transaction_id": self.transaction_id,
            "sender": self.sender_role.label if self.sender_role is not None else None,
            "receiver": self.receiver_role.label,
            "category": self.category.name.lower(),
            "msg_type": self.msg_type,
            "verdict": self.verdict,
            "rule": self.rule,
            "digest": self.digest,
        }


@dataclass
class AuditReport:
    records: list[AuditRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def messages(self) -> int:
        return len(self.records)

    @property
    def violations(self) -> int:
        return sum(not r.ok for r in self.records)

    def violation_rules(self) -> list[str]:
        return [r.rule for r in self.records if not r.ok]

    def merge(self, other: AuditReport) -> AuditReport:
        return AuditReport(self.records + other.records, self.warnings + other.warnings)

    def summary(self) -> dict:
        return {"messages": self.messages, "violations": self.violations,
                "warnings": len(self.warnings)}


def payload_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


def _msg_type_name(msg) -> str:
    mt = getattr(msg, "msg_type", None)
    return getattr(mt, "name", str(mt))


def audit_trace(trace, mode: str = READABLE) -> AuditReport:
    """One record per delivered message; verdict ``violation`` iff a rule fails.

    Rules, checked in order: the frame was well formed; the receiver may see
    the message category; a customer's public key never reaches the platform.
    ``mode="content"`` audits ciphertexts by what they encrypt (Sensitive)
    instead of what the receiver can read.
    """
    if mode not in (READABLE, CONTENT):
        raise ValueError(f"unknown audit mode {mode!r}")
    report = AuditReport()
    for msg in trace:
        mtype = _msg_type_name(msg)
        category = DataCategory(msg.category)
        if mode == CONTENT and mtype in _CIPHERTEXT_TYPES:
            category = DataCategory.SENSITIVE
        receiver = PartyRole(msg.receiver_role)
        sender = PartyRole(msg.sender_role) if msg.sender_role is not None else None
        rule = ""
        if getattr(msg, "malformed", False):
            rule = "malformed-frame"
        elif not allowed(receiver, category):
            rule = "allow-matrix"
        elif (mtype == "KEY_OFFER" and sender is PartyRole.CUSTOMER
              and receiver is PartyRole.MOBILITY_PLATFORM):
            rule = "customer-key-at-platform"
        txid = msg.txid.hex() if isinstance(msg.txid, (bytes, bytearray)) else str(msg.txid)
        report.records.append(AuditRecord(txid, sender, receiver, category,
                                          "violation" if rule else "ok",
                                          payload_digest(msg.payload), mtype, rule))
    report.warnings = pseudonym_warnings(report.records)
    return report


def pseudonym_warnings(records) -> list[str]:
    """Warn when one customer public key shows up under more than one transaction id."""
    seen: dict[str, set[str]] = {}
    for r in records:
        if r.msg_type == "KEY_OFFER" and r.sender_role is PartyRole.CUSTOMER:
            seen.setdefault(r.digest, set()).add(r.transaction_id)
    return [f"customer public key {digest} reused across {len(txids)} transactions"
            for digest, txids in sorted(seen.items()) if len(txids) > 1]
