"""BFV, BGV and CKKS over the RNS ring in :mod:`smob.ring`."""
from smob.fhe.ciphertext import Ciphertext, Plaintext
from smob.fhe.context import Context
from smob.fhe.encoding import ckks_decode, ckks_encode, decode_integers, encode_integers
from smob.fhe.evaluator import (
    add,
    add_plain,
    decrypt,
    encrypt,
    encrypt_symmetric,
    mod_switch,
    mod_switch_to,
    mul_plain,
    multiply,
    negate,
    noise_budget,
    relinearize,
    rescale,
    square,
    sub,
    sub_plain,
)
from smob.fhe.keys import PublicKey, RelinKey, SecretKey, keygen, public_keygen, relin_keygen, secret_keygen
from smob.fhe.params import EncryptionParameters, Scheme, make_params, relin_digit_count

__all__ = [
    "Ciphertext", "Context", "EncryptionParameters", "Plaintext", "PublicKey", "RelinKey",
    "Scheme", "SecretKey", "add", "add_plain", "ckks_decode", "ckks_encode", "decode_integers",
    "decrypt", "encode_integers", "encrypt", "encrypt_symmetric", "keygen", "make_params",
    "mod_switch", "mod_switch_to", "mul_plain", "multiply", "negate", "noise_budget",
    "public_keygen", "relin_digit_count", "relin_keygen", "relinearize", "rescale",
    "secret_keygen", "square", "sub", "sub_plain",
]
