"""Exception hierarchy.  Every error carries a stable ``code`` string."""


class FairLedgerError(Exception):
    code = "ERROR"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


def _error(name: str, code: str, base=FairLedgerError):
    return type(name, (base,), {"code": code})


# identity
MalformedConfig = _error("MalformedConfig", "MALFORMED_CONFIG")
InvalidTopology = _error("InvalidTopology", "INVALID_TOPOLOGY")
MissingCredential = _error("MissingCredential", "MISSING_CREDENTIAL")
UnknownPeer = _error("UnknownPeer", "UNKNOWN_PEER")
Unauthorized = _error("Unauthorized", "UNAUTHORIZED")

# metadata_schema
TemplateMismatch = _error("TemplateMismatch", "TEMPLATE_MISMATCH")
BadTemplate = _error("BadTemplate", "BAD_TEMPLATE")

# ledger
LedgerError = _error("LedgerError", "LEDGER_ERROR")
ForkError = _error("ForkError", "FORK", LedgerError)
BadHeight = _error("BadHeight", "BAD_HEIGHT", LedgerError)
BadSignature = _error("BadSignature", "BAD_SIGNATURE", LedgerError)
PendingTx = _error("PendingTx", "PENDING_TX", LedgerError)
BadPredicate = _error("BadPredicate", "BAD_PREDICATE")
NotFound = _error("NotFound", "NOT_FOUND")

# consensus
WrongRole = _error("WrongRole", "WRONG_ROLE")
WrongChannel = _error("WrongChannel", "WRONG_CHANNEL")
NothingPending = _error("NothingPending", "NOTHING_PENDING")
BadOrdererSig = _error("BadOrdererSig", "BAD_ORDERER_SIG", BadSignature)

# object_store
BadParams = _error("BadParams", "BAD_PARAMS")
InsufficientShards = _error("InsufficientShards", "INSUFFICIENT_SHARDS")
CorruptShard = _error("CorruptShard", "CORRUPT_SHARD")
NoSuchBucket = _error("NoSuchBucket", "NO_SUCH_BUCKET")
NodeUnreachable = _error("NodeUnreachable", "NODE_UNREACHABLE")

# version_control
DidMismatch = _error("DidMismatch", "DID_MISMATCH")
ValidationRejected = _error("ValidationRejected", "VALIDATION_REJECTED")
NoQuorum = _error("NoQuorum", "NO_QUORUM_TIMEOUT")
BadSeq = _error("BadSeq", "BAD_SEQ")
ExperimentExists = _error("ExperimentExists", "EXPERIMENT_EXISTS")

# simnet
ScriptError = _error("ScriptError", "SCRIPT_ERROR")
MaxTicksExceeded = _error("MaxTicksExceeded", "MAX_TICKS_EXCEEDED")
UnknownTarget = _error("UnknownTarget", "UNKNOWN_TARGET")
