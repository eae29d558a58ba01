"""Tagged messages exchanged between parties."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from smob.fhe.params import Scheme
from smob.privacy import DataCategory, PartyRole, PayloadKind, classify_payload


class MsgType(enum.IntEnum):
    KEY_OFFER = 0
    EVAL_KEY = 1
    CT_PRICE = 2
    CT_PARTIAL = 3
    CT_RESULT = 4
    PLAIN_RESULT = 5
    CONTROL = 6


MSG_TYPE_OF_KIND: dict[PayloadKind, MsgType] = {
    PayloadKind.CUSTOMER_PUBLIC_KEY: MsgType.KEY_OFFER,
    PayloadKind.PLATFORM_PUBLIC_KEY: MsgType.KEY_OFFER,
    PayloadKind.SECRET_KEY: MsgType.KEY_OFFER,
    PayloadKind.CUSTOMER_EVAL_KEY: MsgType.EVAL_KEY,
    PayloadKind.PLATFORM_EVAL_KEY: MsgType.EVAL_KEY,
    PayloadKind.TRANSACTION_ID: MsgType.CONTROL,
    PayloadKind.ENCRYPTED_PRICE: MsgType.CT_PRICE,
    PayloadKind.ENCRYPTED_PARTIAL: MsgType.CT_PARTIAL,
    PayloadKind.ENCRYPTED_RESULT: MsgType.CT_RESULT,
    PayloadKind.DECRYPTED_AGGREGATE: MsgType.PLAIN_RESULT,
    PayloadKind.PLAIN_PRICE: MsgType.PLAIN_RESULT,
    PayloadKind.CUSTOMER_IDENTIFIER: MsgType.CONTROL,
}


@dataclass(frozen=True)
class Address:
    role: PartyRole
    id: str


@dataclass(frozen=True, eq=False)
class TaggedMessage:
    txid: bytes
    sender_role: PartyRole | None
    sender_id: str
    receiver_role: PartyRole
    receiver_id: str
    msg_type: MsgType
    category: DataCategory
    payload: bytes
    scheme: Scheme = Scheme.BFV
    malformed: bool = False

    @classmethod
    def build(cls, kind, payload: bytes, txid: bytes, sender: Address, receiver: Address,
              scheme: Scheme) -> TaggedMessage:
        """Message for ``kind`` with its category filled in by the classifier."""
        cls_ = classify_payload(kind)
        try:
            mtype = MSG_TYPE_OF_KIND[PayloadKind(kind)]
        except ValueError:
            mtype = MsgType.CONTROL
        return cls(bytes(txid), sender.role, sender.id, receiver.role, receiver.id, mtype,
                   cls_.category, bytes(payload), Scheme(scheme))

    @property
    def sender(self) -> Address:
        return Address(self.sender_role, self.sender_id)

    @property
    def receiver(self) -> Address:
        return Address(self.receiver_role, self.receiver_id)
