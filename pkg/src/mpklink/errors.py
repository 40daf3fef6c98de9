"""Exception hierarchy shared by every mpklink module."""


class MpkLinkError(Exception):
    """Root of all library errors."""


# codec ---------------------------------------------------------------------
class CodecError(MpkLinkError):
    pass


class PayloadTooLarge(CodecError):
    pass


class DecodeError(CodecError):
    """Bytes do not form a well-formed envelope or payload."""


class Truncated(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class Malformed(DecodeError):
    pass


# protection ----------------------------------------------------------------
class ProtectionError(MpkLinkError):
    pass


class KeysExhausted(ProtectionError):
    pass


class BackendUnavailable(ProtectionError):
    pass


class BadAlignment(ProtectionError):
    pass


class DeadKey(ProtectionError):
    pass


class UninitializedSlot(ProtectionError):
    pass


class OffsetOutOfRange(ProtectionError):
    pass


class AccessViolationError(ProtectionError):
    """Raised by emulated region accessors when the thread lacks rights."""


# transports ----------------------------------------------------------------
class TransportError(MpkLinkError):
    pass


class PathUnavailable(TransportError):
    pass


class NameUnavailable(TransportError):
    pass


class ConnectRefused(TransportError):
    pass


class PeerClosed(TransportError):
    """The other endpoint closed; no further messages will arrive."""


class PeerGone(PeerClosed):
    """MPK flavour of PeerClosed, raised when the peer endpoint closes mid-stream."""


class MessageTooLarge(TransportError):
    pass


class OwnershipError(TransportError):
    pass


class CrossProcessError(TransportError):
    pass


class TracingDisabled(MpkLinkError):
    pass


# identity ------------------------------------------------------------------
class IdentityError(MpkLinkError):
    pass


class SenderMismatch(IdentityError):
    pass


class DuplicateServiceId(IdentityError):
    pass


# wordcount -----------------------------------------------------------------
class WordcountError(MpkLinkError):
    pass


class InvalidUtf8(WordcountError):
    pass


class FileUnreadable(WordcountError):
    pass
