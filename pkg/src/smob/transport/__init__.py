"""Serialization, framing and message transports."""
from smob.transport.channels import Endpoint, InProcNetwork, Network, TcpNetwork, make_network
from smob.transport.message import MSG_TYPE_OF_KIND, Address, MsgType, TaggedMessage
from smob.transport.wire import (
    BLOB_HEADER_SIZE,
    FRAME_HEADER_SIZE,
    MAX_FRAME_BYTES,
    blob_size,
    decode_frame,
    decode_plain_result,
    deserialize_ciphertext,
    deserialize_public_key,
    deserialize_relin_key,
    deserialize_secret_key,
    encode_frame,
    encode_plain_result,
    parse_frame_header,
    serialize_ciphertext,
    serialize_public_key,
    serialize_relin_key,
    serialize_secret_key,
)

__all__ = [
    "Address", "BLOB_HEADER_SIZE", "Endpoint", "FRAME_HEADER_SIZE", "InProcNetwork",
    "MAX_FRAME_BYTES", "MSG_TYPE_OF_KIND", "MsgType", "Network", "TaggedMessage", "TcpNetwork",
    "blob_size", "decode_frame", "decode_plain_result", "deserialize_ciphertext",
    "deserialize_public_key", "deserialize_relin_key", "deserialize_secret_key", "encode_frame",
    "encode_plain_result", "make_network", "parse_frame_header", "serialize_ciphertext",
    "serialize_public_key", "serialize_relin_key", "serialize_secret_key",
]
