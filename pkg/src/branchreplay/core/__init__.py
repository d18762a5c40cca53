"""Core trace types and wire encodings."""

from branchreplay.core.codec import (
    compact_pattern_store,
    decode_bundle,
    decode_hint,
    encode_bundle,
    encode_hint,
    split_overflow,
)
from branchreplay.core.types import (
    EOT,
    BranchOutcome,
    BranchRecord,
    CheckpointElement,
    DnaSequence,
    HintInfo,
    KmersRepresentation,
    Pattern,
    PatternElement,
    RawTrace,
    TraceBundle,
    TraceElement,
    VanillaElement,
    VanillaTrace,
)

__all__ = [
    "EOT",
    "BranchOutcome",
    "BranchRecord",
    "CheckpointElement",
    "DnaSequence",
    "HintInfo",
    "KmersRepresentation",
    "Pattern",
    "PatternElement",
    "RawTrace",
    "TraceBundle",
    "TraceElement",
    "VanillaElement",
    "VanillaTrace",
    "compact_pattern_store",
    "decode_bundle",
    "decode_hint",
    "encode_bundle",
    "encode_hint",
    "split_overflow",
]
