import pytest

from smob.errors import ClassificationError
from smob.privacy import (
    ALLOW_MATRIX,
    CONTENT,
    DataCategory,
    PartyRole,
    PayloadKind,
    allowed,
    audit_trace,
    classify_payload,
)
from smob.transport import Address, MsgType, TaggedMessage

C = DataCategory
R = PartyRole

# role -> (insensitive, identifier, pseudonym, sensitive, secret)
EXPECTED = {
    R.CUSTOMER: (1, 1, 1, 1, 0),
    R.MOBILITY_PLATFORM: (1, 0, 1, 0, 0),
    R.MOBILITY_PROVIDER: (1, 0, 1, 1, 0),
    R.BILLING_PROVIDER: (1, 1, 1, 1, 0),
}

CUSTOMER = Address(R.CUSTOMER, "customer")
PLATFORM = Address(R.MOBILITY_PLATFORM, "platform")
PROVIDER = Address(R.MOBILITY_PROVIDER, "provider-1")
TXID = bytes(range(16))


def test_allow_matrix_cell_for_cell():
    for role, row in EXPECTED.items():
        for cat, flag in zip(DataCategory, row):
            assert allowed(role, cat) is bool(flag), (role, cat)
    assert set(ALLOW_MATRIX) == set(PartyRole)


def test_named_cells():
    assert not allowed(R.MOBILITY_PLATFORM, C.SENSITIVE)
    assert allowed(R.BILLING_PROVIDER, C.IDENTIFIER)
    assert not any(allowed(r, C.SECRET) for r in PartyRole)


@pytest.mark.parametrize("kind,category", [
    (PayloadKind.CUSTOMER_PUBLIC_KEY, C.PSEUDONYM),
    (PayloadKind.TRANSACTION_ID, C.PSEUDONYM),
    (PayloadKind.ENCRYPTED_PRICE, C.INSENSITIVE),
    (PayloadKind.DECRYPTED_AGGREGATE, C.INSENSITIVE),
    (PayloadKind.SECRET_KEY, C.SECRET),
    (PayloadKind.PLAIN_PRICE, C.SENSITIVE),
    (PayloadKind.CUSTOMER_IDENTIFIER, C.IDENTIFIER),
    (PayloadKind.PLATFORM_PUBLIC_KEY, C.INSENSITIVE),
])
def test_classification(kind, category):
    assert classify_payload(kind).category is category


def test_ciphertexts_note_their_provenance():
    for kind in (PayloadKind.ENCRYPTED_PRICE, PayloadKind.ENCRYPTED_PARTIAL,
                 PayloadKind.ENCRYPTED_RESULT):
        cls = classify_payload(kind)
        assert cls.provenance is C.SENSITIVE
        assert "Sensitive" in cls.note


def test_every_payload_kind_is_classified():
    for kind in PayloadKind:
        assert "fail closed" not in classify_payload(kind).note


def test_unknown_kind_fails_closed():
    assert classify_payload("gps_trace").category is C.SECRET
    with pytest.raises(ClassificationError):
        classify_payload("gps_trace", fail_closed=False)


def _msg(kind, sender, receiver, txid=TXID, payload=b"x"):
    return TaggedMessage.build(kind, payload, txid, sender, receiver, 0)


def test_clean_trace_has_no_violations():
    trace = [
        _msg(PayloadKind.CUSTOMER_PUBLIC_KEY, CUSTOMER, PROVIDER),
        _msg(PayloadKind.ENCRYPTED_PRICE, PROVIDER, PLATFORM),
        _msg(PayloadKind.ENCRYPTED_RESULT, PLATFORM, CUSTOMER),
        _msg(PayloadKind.TRANSACTION_ID, PLATFORM, PROVIDER),
    ]
    report = audit_trace(trace)
    assert report.messages == 4 and report.violations == 0
    assert [r.msg_type for r in report.records] == ["KEY_OFFER", "CT_PRICE", "CT_RESULT",
                                                    "CONTROL"]


def test_plain_price_to_platform_is_one_violation():
    trace = [_msg(PayloadKind.ENCRYPTED_PRICE, PROVIDER, PLATFORM),
             _msg(PayloadKind.PLAIN_PRICE, PROVIDER, PLATFORM)]
    report = audit_trace(trace)
    assert report.violation_rules() == ["allow-matrix"]


def test_secret_key_is_a_violation_for_every_receiver():
    for receiver in (CUSTOMER, PLATFORM, PROVIDER):
        report = audit_trace([_msg(PayloadKind.SECRET_KEY, CUSTOMER, receiver)])
        assert report.violation_rules() == ["allow-matrix"]


def test_customer_key_at_platform():
    report = audit_trace([_msg(PayloadKind.CUSTOMER_PUBLIC_KEY, CUSTOMER, PLATFORM)])
    assert report.violation_rules() == ["customer-key-at-platform"]
    # the platform's own key travelling to the customer is fine
    assert audit_trace([_msg(PayloadKind.PLATFORM_PUBLIC_KEY, PLATFORM, CUSTOMER)]).violations == 0


def test_content_mode_audits_what_ciphertexts_encrypt():
    trace = [_msg(PayloadKind.ENCRYPTED_PRICE, PROVIDER, PLATFORM),
             _msg(PayloadKind.ENCRYPTED_PRICE, PROVIDER, CUSTOMER)]
    assert audit_trace(trace).violations == 0
    report = audit_trace(trace, CONTENT)
    assert report.violations == 1
    assert report.records[0].category is C.SENSITIVE
    with pytest.raises(ValueError):
        audit_trace(trace, "paranoid")


def test_key_reuse_across_transactions_warns():
    key = b"same-public-key"
    trace = [_msg(PayloadKind.CUSTOMER_PUBLIC_KEY, CUSTOMER, PROVIDER, bytes([i]) * 16, key)
             for i in range(3)]
    report = audit_trace(trace)
    assert report.violations == 0
    assert len(report.warnings) == 1 and "3 transactions" in report.warnings[0]
    fresh = [_msg(PayloadKind.CUSTOMER_PUBLIC_KEY, CUSTOMER, PROVIDER, bytes([i]) * 16,
                  bytes([i]) * 8) for i in range(3)]
    assert audit_trace(fresh).warnings == []


def test_record_serialisation_and_merge():
    a = audit_trace([_msg(PayloadKind.ENCRYPTED_PRICE, PROVIDER, PLATFORM)])
    b = audit_trace([_msg(PayloadKind.PLAIN_PRICE, PROVIDER, PLATFORM)])
    merged = a.merge(b)
    assert merged.summary() == {"messages": 2, "violations": 1, "warnings": 0}
    d = merged.records[1].to_dict()
    assert d["receiver"] == "mobility_platform" and d["category"] == "sensitive"
    assert d["verdict"] == "violation" and len(d["digest"]) == 16
    assert merged.records[0].msg_type == MsgType.CT_PRICE.name
