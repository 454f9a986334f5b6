from .frozen import (
    FrozenPolicy,
    FrozenFormatError,
    BadMagicError,
    TruncationError,
    VersionError,
    export_policy,
    load_frozen,
)

__all__ = [
    "FrozenPolicy",
    "FrozenFormatError",
    "BadMagicError",
    "TruncationError",
    "VersionError",
    "export_policy",
    "load_frozen",
]
