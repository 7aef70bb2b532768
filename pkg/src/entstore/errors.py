"""Exception types shared across the storage layer."""


class EntstoreError(Exception):
    """Base class for all errors raised by this package."""


class NotFound(EntstoreError):
    """A block id is not present in the consulted store."""


class IntegrityMismatch(EntstoreError):
    """Stored bytes do not hash to the id they are filed under."""


class RootMissing(EntstoreError):
    """DAG traversal cannot start because the root block is gone."""


class UnsupportedParams(EntstoreError):
    """Coding parameters outside the supported lattice family (requires p == s)."""


class LengthMismatch(EntstoreError):
    """XOR operands of unequal length."""


class MalformedMetadata(EntstoreError):
    """File metadata bytes do not decode."""


class InsufficientPeers(EntstoreError):
    """Fewer alive candidate peers than the minimum replication factor."""


class DataLost(EntstoreError):
    """Every replica of a block is on a dead peer; re-pin cannot proceed."""

    def __init__(self, block_id, msg=None):
        super().__init__(msg or f"no live replica of {block_id}")
        self.block_id = block_id


class DepthExhausted(EntstoreError):
    """A repair attempt ran out of its per-strand depth budget."""


class Unrecoverable(EntstoreError):
    """All strand classes failed to reconstruct a block."""


class MetadataMissing(EntstoreError):
    """The file metadata block cannot be retrieved."""


class RepairFailed(EntstoreError):
    """Download finished with leaves that could not be reconstructed."""

    def __init__(self, positions, msg=None):
        super().__init__(msg or f"unrecoverable leaf positions: {sorted(positions)}")
        self.positions = sorted(positions)


class AbortedIntermediateNode(EntstoreError):
    """Collaborative repair aborted: a non-leaf DAG node has no live replica."""


class PartialFailure(EntstoreError):
    """Collaborative repair finished but some assigned positions failed."""

    def __init__(self, positions, outcome=None):
        super().__init__(f"workers failed on positions: {sorted(positions)}")
        self.positions = sorted(positions)
        self.outcome = outcome


class NoPeers(EntstoreError):
    """Discovery returned no peers for collaborative repair."""


class BackendUnavailable(EntstoreError):
    """The HTTP backend did not answer within the configured timeout."""


class NotPinned(EntstoreError):
    """Monitoring requested for a file whose strand roots are unallocated."""
