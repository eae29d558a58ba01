"""Exception hierarchy shared by every layer of the toolkit."""


class SmobError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SmobError):
    """Invalid or inconsistent parameters."""


class ParameterMismatchError(ParameterError):
    """Operands disagree on degree, modulus chain or domain."""


class UnsupportedParametersError(ParameterError):
    """Parameters are valid but not supported by the requested operation."""


class DomainError(SmobError):
    """A ring element is in the wrong representation (coefficient vs NTT)."""


class SchemeMismatchError(SmobError):
    pass


class EncodingError(SmobError):
    pass


class EncodingUnsupportedError(EncodingError):
    pass


class EncodingOverflowError(EncodingError):
    pass


class AlignmentError(SmobError):
    """Ciphertexts live at different levels or scales."""


class LevelExhaustedError(SmobError):
    pass


class DecryptionFailureError(SmobError):
    """Noise budget is exhausted; the decrypted value cannot be trusted."""


class ClassificationError(SmobError):
    pass


class SerializationError(SmobError):
    pass


class FrameError(SerializationError):
    """Malformed wire frame (bad magic, version, length or cap)."""


class TransportError(SmobError):
    pass


class OrchestrationError(SmobError):
    """A transaction aborted; ``step`` names the failing step."""

    def __init__(self, message: str, step: str | None = None):
        super().__init__(message if step is None else f"{step}: {message}")
        self.step = step


class VerificationError(SmobError):
    pass
