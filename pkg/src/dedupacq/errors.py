"""Exception hierarchy shared by every dedupacq module."""


class DedupAcqError(Exception):
    """Base class for all errors raised by dedupacq."""


class ConfigurationError(DedupAcqError, ValueError):
    """Unsupported algorithm, bad block size, invalid service config, etc."""


class DigestFormatError(DedupAcqError, ValueError):
    """A digest string or hex value is malformed."""


class ManifestError(DedupAcqError, ValueError):
    """A manifest violates its format or tiling invariants.

    ``reason`` is a short machine-readable code: ``gap``, ``overlap``,
    ``version``, ``digest``, ``syntax``, ``field`` or ``mode``.
    """

    def __init__(self, reason: str, message: str):
        super().__init__(f"{reason}: {message}")
        self.reason = reason


class HashSetFormatError(DedupAcqError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IntegrityError(DedupAcqError):
    """Payload bytes do not hash to the digest they are stored under."""

    def __init__(self, digest, message: str = "content does not match digest"):
        super().__init__(f"{digest}: {message}")
        self.digest = digest


class NotFoundError(DedupAcqError, LookupError):
    pass


class MissingArtifactsError(DedupAcqError):
    """One or more digests cannot be resolved to a stored payload."""

    def __init__(self, digests):
        self.digests = list(digests)
        shown = ", ".join(str(d) for d in self.digests[:5])
        more = f" (+{len(self.digests) - 5} more)" if len(self.digests) > 5 else ""
        super().__init__(f"{len(self.digests)} missing artifact(s): {shown}{more}")


class ProtocolError(DedupAcqError):
    """Unexpected response from the manifest service."""

    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class TargetExistsError(DedupAcqError, FileExistsError):
    pass


class MixedBatchError(DedupAcqError, ValueError):
    """A digest batch mixes algorithms or digest modes."""
